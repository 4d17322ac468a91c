//! Continuous-time RLS dynamics.
//!
//! The `m` independent rate-1 ball clocks are simulated through their jump
//! chain: activations arrive at rate `m`, the activated ball sits in bin `i`
//! with probability `l_i / m`, and its destination is uniform over the `n`
//! bins. Refused attempts still consume an activation and advance the clock.

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::sampling::{exp_unchecked, RngStream, WeightedIndex};

/// Migration rule applied when a ball in bin `i` samples bin `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ProtocolVariant {
    /// Move iff `l_i >= l_j + 1`. Admits neutral moves.
    #[default]
    NonStrict,
    /// Move iff `l_i > l_j + 1`.
    Strict,
}

impl ProtocolVariant {
    #[inline]
    pub fn admits(self, src_load: u64, dst_load: u64) -> bool {
        match self {
            ProtocolVariant::NonStrict => src_load > dst_load,
            ProtocolVariant::Strict => src_load > dst_load + 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolVariant::NonStrict => "nonstrict",
            ProtocolVariant::Strict => "strict",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nonstrict" | "non-strict" => Ok(ProtocolVariant::NonStrict),
            "strict" => Ok(ProtocolVariant::Strict),
            other => Err(Error::Parse(format!("unknown protocol variant `{other}`"))),
        }
    }
}

/// Whether a ball in `src` would move to `dst`. Pure rule evaluation.
pub fn attempt_move(
    config: &Configuration,
    src: usize,
    dst: usize,
    variant: ProtocolVariant,
) -> Result<bool> {
    config.check_bin(src)?;
    config.check_bin(dst)?;
    let loads = config.loads();
    if loads[src] == 0 {
        return Err(Error::EmptySource(src));
    }
    Ok(src != dst && variant.admits(loads[src], loads[dst]))
}

/// One activation of the jump chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub src: usize,
    pub dst: usize,
    pub moved: bool,
    pub holding_time: f64,
    /// The activated ball, in labeled mode.
    pub ball: Option<usize>,
}

/// Histogram of loads with cached extremes and overloaded mass, so that all
/// phase predicates can be evaluated in O(1) per event.
#[derive(Debug, Clone)]
struct LoadTracker {
    counts: Vec<u32>,
    min: u64,
    max: u64,
    /// `n * A`.
    overloaded: u64,
    n: i64,
    m: i64,
}

impl LoadTracker {
    fn new(config: &Configuration) -> Self {
        let max = config.max_load();
        let mut counts = vec![0u32; max as usize + 2];
        for &l in config.loads() {
            counts[l as usize] += 1;
        }
        Self {
            counts,
            min: config.min_load(),
            max,
            overloaded: config.scaled_overloaded(),
            n: config.n() as i64,
            m: config.m() as i64,
        }
    }

    #[inline]
    fn excess(&self, load: u64) -> u64 {
        (self.n * load as i64 - self.m).max(0) as u64
    }

    /// Bin loads `src_load -> src_load - 1` and `dst_load -> dst_load + 1`.
    #[inline]
    fn shift(&mut self, src_load: u64, dst_load: u64) {
        let (s, d) = (src_load as usize, dst_load as usize);
        self.overloaded = self.overloaded + self.excess(src_load - 1) + self.excess(dst_load + 1)
            - self.excess(src_load)
            - self.excess(dst_load);
        if d + 2 > self.counts.len() {
            self.counts.resize(d + 2, 0);
        }
        self.counts[s] -= 1;
        self.counts[s - 1] += 1;
        self.counts[d] -= 1;
        self.counts[d + 1] += 1;
        if dst_load + 1 > self.max {
            self.max = dst_load + 1;
        }
        if src_load - 1 < self.min {
            self.min = src_load - 1;
        }
        while self.counts[self.max as usize] == 0 {
            self.max -= 1;
        }
        while self.counts[self.min as usize] == 0 {
            self.min += 1;
        }
    }

    #[inline]
    fn scaled_discrepancy(&self) -> u64 {
        let hi = (self.n * self.max as i64 - self.m).unsigned_abs();
        let lo = (self.n * self.min as i64 - self.m).unsigned_abs();
        hi.max(lo)
    }
}

/// The state of one run: configuration, clock and event counter, plus ball
/// positions in labeled mode.
#[derive(Debug, Clone)]
pub struct ProcessState {
    config: Configuration,
    index: WeightedIndex,
    tracker: LoadTracker,
    clock: f64,
    events: u64,
    positions: Option<Vec<usize>>,
}

impl ProcessState {
    /// Anonymous mode: balls are indistinguishable.
    pub fn new(config: Configuration) -> Self {
        Self {
            index: WeightedIndex::build(config.loads()),
            tracker: LoadTracker::new(&config),
            config,
            clock: 0.0,
            events: 0,
            positions: None,
        }
    }

    /// Labeled mode with balls numbered bin by bin: bin 0 holds balls
    /// `0..l_0`, bin 1 the next `l_1`, and so on.
    pub fn labeled(config: Configuration) -> Self {
        let positions = config
            .loads()
            .iter()
            .enumerate()
            .flat_map(|(bin, &l)| std::iter::repeat_n(bin, l as usize))
            .collect();
        let mut state = Self::new(config);
        state.positions = Some(positions);
        state
    }

    /// Labeled mode from explicit ball positions.
    pub fn with_positions(n: usize, positions: Vec<usize>) -> Result<Self> {
        let mut loads = vec![0u64; n];
        for &p in &positions {
            *loads
                .get_mut(p)
                .ok_or(Error::IndexOutOfRange { index: p, len: n })? += 1;
        }
        let mut state = Self::new(Configuration::new(loads)?);
        state.positions = Some(positions);
        Ok(state)
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn into_config(self) -> Configuration {
        self.config
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn is_labeled(&self) -> bool {
        self.positions.is_some()
    }

    pub fn positions(&self) -> Option<&[usize]> {
        self.positions.as_deref()
    }

    pub fn n(&self) -> usize {
        self.config.n()
    }

    pub fn m(&self) -> u64 {
        self.config.m()
    }

    pub fn min_load(&self) -> u64 {
        self.tracker.min
    }

    pub fn max_load(&self) -> u64 {
        self.tracker.max
    }

    /// `n * disc`, maintained incrementally.
    pub fn scaled_discrepancy(&self) -> u64 {
        self.tracker.scaled_discrepancy()
    }

    /// `n * A`, maintained incrementally.
    pub fn scaled_overloaded(&self) -> u64 {
        self.tracker.overloaded
    }

    pub fn is_perfectly_balanced(&self) -> bool {
        self.scaled_discrepancy() < self.n() as u64
    }

    /// One activation: draw the holding time, the source bin (or ball) and
    /// a uniform destination, then apply the rule.
    pub fn step(&mut self, variant: ProtocolVariant, rng: &mut RngStream) -> Result<Event> {
        let m = self.m();
        if m == 0 {
            return Err(Error::EmptyWeights);
        }
        let holding_time = exp_unchecked(m as f64, rng);
        let (ball, src) = match &self.positions {
            Some(pos) => {
                let b = rng.below(m) as usize;
                (Some(b), pos[b])
            }
            None => (None, self.index.locate(rng.below(m))),
        };
        let dst = rng.index(self.n());
        let loads = self.config.loads();
        let moved = src != dst && variant.admits(loads[src], loads[dst]);
        if moved {
            self.apply(src, dst, ball);
        }
        self.clock += holding_time;
        self.events += 1;
        Ok(Event {
            src,
            dst,
            moved,
            holding_time,
            ball,
        })
    }

    /// Moves a ball from `src` to `dst` without consulting the protocol.
    /// In labeled mode the highest-numbered ball in `src` is moved.
    pub(crate) fn force_move(&mut self, src: usize, dst: usize) -> Result<()> {
        self.config.check_bin(src)?;
        self.config.check_bin(dst)?;
        if self.config.loads()[src] == 0 {
            return Err(Error::EmptySource(src));
        }
        let ball = self.positions.as_ref().map(|pos| {
            pos.iter()
                .rposition(|&p| p == src)
                .expect("histogram matches loads")
        });
        self.apply(src, dst, ball);
        Ok(())
    }

    /// Moves the given labeled ball to `dst`.
    pub(crate) fn move_ball(&mut self, ball: usize, dst: usize) {
        let src = self.positions.as_ref().expect("labeled mode")[ball];
        self.apply(src, dst, Some(ball));
    }

    #[inline]
    fn apply(&mut self, src: usize, dst: usize, ball: Option<usize>) {
        if src == dst {
            return;
        }
        let loads = self.config.loads_mut();
        let (ls, ld) = (loads[src], loads[dst]);
        loads[src] -= 1;
        loads[dst] += 1;
        self.index.decrement(src);
        self.index.increment(dst);
        self.tracker.shift(ls, ld);
        if let (Some(pos), Some(b)) = (self.positions.as_mut(), ball) {
            pos[b] = dst;
        }
    }
}

/// First-hitting thresholds of the phase analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marker {
    /// `disc <= 96 ln n`
    Disc96Ln,
    /// `disc <= avg / 2`
    DiscHalfAvg,
    /// `disc <= 8 ln n`
    Disc8Ln,
    /// overloaded balls `<= n`
    OverloadedN,
    /// `disc <= 1`
    DiscLe1,
    /// `disc < 1`
    Perfect,
}

impl Marker {
    pub const ALL: [Marker; 6] = [
        Marker::Disc96Ln,
        Marker::DiscHalfAvg,
        Marker::Disc8Ln,
        Marker::OverloadedN,
        Marker::DiscLe1,
        Marker::Perfect,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Marker::Disc96Ln => "t_disc96ln",
            Marker::DiscHalfAvg => "t_disc_half_avg",
            Marker::Disc8Ln => "t_disc8ln",
            Marker::OverloadedN => "t_overloaded_n",
            Marker::DiscLe1 => "t_disc_le1",
            Marker::Perfect => "t_perfect",
        }
    }

    /// Accepts the column name with or without its `t_` prefix.
    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim();
        let key = key.strip_prefix("t_").unwrap_or(key);
        Marker::ALL
            .into_iter()
            .find(|m| &m.column()[2..] == key)
            .ok_or_else(|| Error::Parse(format!("unknown marker `{s}`")))
    }

    pub fn holds(self, state: &ProcessState) -> bool {
        let n = state.n() as u64;
        let disc = state.scaled_discrepancy();
        match self {
            Marker::Disc96Ln => disc as f64 <= 96.0 * (n as f64).ln() * n as f64,
            Marker::DiscHalfAvg => 2 * disc <= state.m(),
            Marker::Disc8Ln => disc as f64 <= 8.0 * (n as f64).ln() * n as f64,
            Marker::OverloadedN => state.scaled_overloaded() <= n * n,
            Marker::DiscLe1 => disc <= n,
            Marker::Perfect => disc < n,
        }
    }

    pub fn holds_for(self, config: &Configuration) -> bool {
        self.holds(&ProcessState::new(config.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caps {
    pub max_events: u64,
    pub max_clock: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_events: 1_000_000_000,
            max_clock: f64::INFINITY,
        }
    }
}

impl Caps {
    pub fn events(max_events: u64) -> Self {
        Self {
            max_events,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    Events,
    Clock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Reached,
    Truncated(Truncation),
}

/// Outcome of a run: marker hitting times, stop time and final state.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    /// Indexed like [`Marker::ALL`].
    pub markers: [Option<f64>; 6],
    /// Clock at which the stop predicate first held.
    pub stop_time: Option<f64>,
    pub events: u64,
    pub clock: f64,
    pub final_config: Configuration,
    pub status: RunStatus,
}

impl PhaseReport {
    pub fn marker(&self, marker: Marker) -> Option<f64> {
        let i = Marker::ALL.iter().position(|&m| m == marker).unwrap();
        self.markers[i]
    }

    pub fn is_truncated(&self) -> bool {
        matches!(self.status, RunStatus::Truncated(_))
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct MarkerRecorder {
    hits: [Option<f64>; 6],
    pending: usize,
}

impl MarkerRecorder {
    pub(crate) fn new() -> Self {
        Self {
            hits: [None; 6],
            pending: 6,
        }
    }

    #[inline]
    pub(crate) fn observe(&mut self, state: &ProcessState) {
        if self.pending == 0 {
            return;
        }
        for (slot, marker) in self.hits.iter_mut().zip(Marker::ALL) {
            if slot.is_none() && marker.holds(state) {
                *slot = Some(state.clock());
                self.pending -= 1;
            }
        }
    }

    pub(crate) fn finish(
        self,
        state: &ProcessState,
        stop_time: Option<f64>,
        status: RunStatus,
    ) -> PhaseReport {
        PhaseReport {
            markers: self.hits,
            stop_time,
            events: state.events(),
            clock: state.clock(),
            final_config: state.config().clone(),
            status,
        }
    }
}

/// Runs until `stop` holds, calling `observer` after every event.
pub fn run_observed<S, O>(
    state: &mut ProcessState,
    variant: ProtocolVariant,
    rng: &mut RngStream,
    caps: Caps,
    mut stop: S,
    mut observer: O,
) -> Result<PhaseReport>
where
    S: FnMut(&ProcessState) -> bool,
    O: FnMut(&ProcessState, &Event),
{
    let mut recorder = MarkerRecorder::new();
    recorder.observe(state);
    if stop(state) {
        let t = state.clock();
        return Ok(recorder.finish(state, Some(t), RunStatus::Reached));
    }
    loop {
        if state.events() >= caps.max_events {
            return Ok(recorder.finish(state, None, RunStatus::Truncated(Truncation::Events)));
        }
        let event = state.step(variant, rng)?;
        if state.clock() > caps.max_clock {
            return Ok(recorder.finish(state, None, RunStatus::Truncated(Truncation::Clock)));
        }
        if event.moved {
            recorder.observe(state);
        }
        observer(state, &event);
        if stop(state) {
            let t = state.clock();
            return Ok(recorder.finish(state, Some(t), RunStatus::Reached));
        }
    }
}

/// Runs until `stop` holds or a cap is exhausted.
pub fn run_until<S>(
    state: &mut ProcessState,
    stop: S,
    variant: ProtocolVariant,
    rng: &mut RngStream,
    caps: Caps,
) -> Result<PhaseReport>
where
    S: FnMut(&ProcessState) -> bool,
{
    run_observed(state, variant, rng, caps, stop, |_, _| {})
}

/// Runs to perfect balance recording every phase marker.
///
/// Markers that cannot hold in a perfectly balanced configuration (for
/// instance `disc <= avg/2` when the average is below 2 and fractional) stay
/// empty even though the run completed.
pub fn run_with_markers(
    state: &mut ProcessState,
    variant: ProtocolVariant,
    rng: &mut RngStream,
    caps: Caps,
) -> Result<PhaseReport> {
    run_until(state, |s| s.is_perfectly_balanced(), variant, rng, caps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn cfg(loads: &[u64]) -> Configuration {
        Configuration::new(loads.to_vec()).unwrap()
    }

    #[test]
    fn attempt_move_examples() {
        let nonstrict = ProtocolVariant::NonStrict;
        let strict = ProtocolVariant::Strict;
        assert!(attempt_move(&cfg(&[3, 1]), 0, 1, nonstrict).unwrap());
        assert!(!attempt_move(&cfg(&[2, 2]), 0, 1, nonstrict).unwrap());
        assert!(attempt_move(&cfg(&[2, 1]), 0, 1, nonstrict).unwrap());
        assert!(!attempt_move(&cfg(&[2, 1]), 0, 1, strict).unwrap());
        assert!(!attempt_move(&cfg(&[5, 0]), 0, 0, nonstrict).unwrap());
        assert!(matches!(
            attempt_move(&cfg(&[0, 3]), 0, 1, nonstrict),
            Err(Error::EmptySource(0))
        ));
    }

    /// Exact one-step law over sorted successor vectors, as integer weights
    /// over the common denominator `m * n`.
    fn sorted_step_law(c: &Configuration, variant: ProtocolVariant) -> BTreeMap<Vec<u64>, u64> {
        let mut law = BTreeMap::new();
        for src in 0..c.n() {
            let w = c.loads()[src];
            if w == 0 {
                continue;
            }
            for dst in 0..c.n() {
                let next = if attempt_move(c, src, dst, variant).unwrap() {
                    c.with_ball_moved(src, dst).unwrap()
                } else {
                    c.clone()
                };
                *law.entry(next.sorted().into_loads()).or_insert(0) += w;
            }
        }
        law
    }

    #[test]
    fn step_law_from_single_full_bin() {
        let c = cfg(&[4, 0, 0, 0]);
        let law = sorted_step_law(&c, ProtocolVariant::NonStrict);
        // 16 = m * n; moves succeed for the 3 foreign destinations.
        assert_eq!(law[&vec![3, 1, 0, 0]], 12);
        assert_eq!(law[&vec![4, 0, 0, 0]], 4);
        let law = sorted_step_law(&cfg(&[2, 2]), ProtocolVariant::NonStrict);
        assert_eq!(law.len(), 1);
        let law = sorted_step_law(&cfg(&[3, 1]), ProtocolVariant::NonStrict);
        // (3/4)(1/2) = 3/8 = 3/8 of m*n = 8.
        assert_eq!(law[&vec![2, 2]], 3);
    }

    fn all_configurations(n: usize, m: u64) -> Vec<Vec<u64>> {
        if n == 1 {
            return vec![vec![m]];
        }
        (0..=m)
            .flat_map(|first| {
                all_configurations(n - 1, m - first)
                    .into_iter()
                    .map(move |mut rest| {
                        rest.insert(0, first);
                        rest
                    })
            })
            .collect()
    }

    #[test]
    fn variants_share_sorted_jump_chain() {
        for n in 1..=4 {
            for m in 1..=8 {
                for loads in all_configurations(n, m) {
                    let c = Configuration::new(loads).unwrap();
                    assert_eq!(
                        sorted_step_law(&c, ProtocolVariant::NonStrict),
                        sorted_step_law(&c, ProtocolVariant::Strict),
                        "{c}"
                    );
                }
            }
        }
    }

    #[test]
    fn step_from_full_bin_matches_enumeration() {
        let mut rng = RngStream::new(11, 0);
        let trials = 200_000;
        let mut moved = 0;
        for _ in 0..trials {
            let mut s = ProcessState::new(cfg(&[4, 0, 0, 0]));
            let e = s.step(ProtocolVariant::NonStrict, &mut rng).unwrap();
            assert_eq!(e.src, 0);
            moved += e.moved as u64;
            assert_eq!(s.config().m(), 4);
        }
        let p = moved as f64 / trials as f64;
        let se = (0.75f64 * 0.25 / trials as f64).sqrt();
        assert!((p - 0.75).abs() < 3.0 * se, "{p}");

        let mut s = ProcessState::new(cfg(&[2, 2]));
        for _ in 0..1000 {
            assert!(!s.step(ProtocolVariant::NonStrict, &mut rng).unwrap().moved);
        }

        let mut hits = 0;
        for _ in 0..trials {
            let mut s = ProcessState::new(cfg(&[3, 1]));
            s.step(ProtocolVariant::NonStrict, &mut rng).unwrap();
            hits += (s.config().loads() == [2, 2]) as u64;
        }
        let p = hits as f64 / trials as f64;
        let se = (0.375f64 * 0.625 / trials as f64).sqrt();
        assert!((p - 0.375).abs() < 3.0 * se, "{p}");
    }

    #[test]
    fn step_rejects_empty_system() {
        let mut s = ProcessState::new(cfg(&[0, 0]));
        let mut rng = RngStream::new(0, 0);
        assert!(s.step(ProtocolVariant::NonStrict, &mut rng).is_err());
    }

    #[test]
    fn balanced_start_stops_immediately() {
        let mut rng = RngStream::new(0, 0);
        let mut s = ProcessState::new(cfg(&[2, 2]));
        let r = run_with_markers(
            &mut s,
            ProtocolVariant::NonStrict,
            &mut rng,
            Caps::default(),
        )
        .unwrap();
        assert_eq!(r.stop_time, Some(0.0));
        assert_eq!(r.events, 0);
        assert!(r.markers.iter().all(|m| *m == Some(0.0)));
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    fn mean_balancing_time(start: &[u64], runs: u64, seed: u64) -> (f64, f64) {
        let times: Vec<f64> = (0..runs)
            .map(|i| {
                let mut rng = RngStream::new(seed, i);
                let mut s = ProcessState::new(cfg(start));
                run_with_markers(
                    &mut s,
                    ProtocolVariant::NonStrict,
                    &mut rng,
                    Caps::default(),
                )
                .unwrap()
                .stop_time
                .unwrap()
            })
            .collect();
        mean_and_se(&times)
    }

    #[test]
    fn two_bins_two_balls_mean_time_one() {
        let (mean, se) = mean_balancing_time(&[2, 0], 100_000, 21);
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn two_bins_four_balls_mean_time_seven_sixths() {
        let (mean, se) = mean_balancing_time(&[4, 0], 100_000, 22);
        assert!((mean - 7.0 / 6.0).abs() < 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn disc_le1_marker_hits_at_first_successful_move() {
        for run in 0..500 {
            let mut rng = RngStream::new(23, run);
            let mut s = ProcessState::new(cfg(&[4, 0]));
            let mut first_move = None;
            let r = run_observed(
                &mut s,
                ProtocolVariant::NonStrict,
                &mut rng,
                Caps::default(),
                |s| s.is_perfectly_balanced(),
                |s, e| {
                    if e.moved && first_move.is_none() {
                        first_move = Some(s.clock());
                    }
                },
            )
            .unwrap();
            assert_eq!(r.marker(Marker::DiscLe1), first_move);
        }
    }

    #[test]
    fn markers_nest() {
        for run in 0..200 {
            let mut rng = RngStream::new(24, run);
            let mut s = ProcessState::new(cfg(&[8, 0, 0, 0]));
            let r = run_with_markers(
                &mut s,
                ProtocolVariant::NonStrict,
                &mut rng,
                Caps::default(),
            )
            .unwrap();
            let t = |m| r.marker(m).unwrap();
            assert!(t(Marker::DiscLe1) <= t(Marker::Perfect));
            assert!(t(Marker::Disc96Ln) <= t(Marker::Disc8Ln));
            assert!(t(Marker::Disc8Ln) <= t(Marker::DiscLe1));
            assert_eq!(r.stop_time, Some(t(Marker::Perfect)));
        }
    }

    #[test]
    fn caps_truncate_explicitly() {
        let mut rng = RngStream::new(25, 0);
        let mut s = ProcessState::new(Configuration::all_in_one(64, 4096).unwrap());
        let r = run_with_markers(
            &mut s,
            ProtocolVariant::NonStrict,
            &mut rng,
            Caps::events(10),
        )
        .unwrap();
        assert_eq!(r.status, RunStatus::Truncated(Truncation::Events));
        assert_eq!(r.events, 10);
        assert!(r.stop_time.is_none());

        let mut s = ProcessState::new(Configuration::all_in_one(64, 4096).unwrap());
        let caps = Caps {
            max_events: u64::MAX,
            max_clock: 0.01,
        };
        let r = run_with_markers(&mut s, ProtocolVariant::NonStrict, &mut rng, caps).unwrap();
        assert_eq!(r.status, RunStatus::Truncated(Truncation::Clock));
    }

    #[test]
    fn tracker_matches_recomputation_and_monotone() {
        let mut rng = RngStream::new(26, 0);
        let mut s = ProcessState::new(cfg(&[30, 0, 7, 1, 0, 12]));
        let mut prev = s.config().clone();
        for _ in 0..5000 {
            s.step(ProtocolVariant::NonStrict, &mut rng).unwrap();
            let c = s.config();
            assert_eq!(s.scaled_discrepancy(), c.scaled_discrepancy());
            assert_eq!(s.scaled_overloaded(), c.scaled_overloaded());
            assert_eq!(s.min_load(), c.min_load());
            assert_eq!(s.max_load(), c.max_load());
            assert!(c.scaled_discrepancy() <= prev.scaled_discrepancy());
            assert!(c.min_load() >= prev.min_load());
            assert!(c.max_load() <= prev.max_load());
            assert_eq!(c.loads().iter().sum::<u64>(), 50);
            prev = c.clone();
        }
    }

    #[test]
    fn labeled_histogram_matches_loads() {
        let mut rng = RngStream::new(27, 0);
        let mut s = ProcessState::labeled(cfg(&[6, 0, 3]));
        assert_eq!(s.positions().unwrap(), &[0, 0, 0, 0, 0, 0, 2, 2, 2]);
        for _ in 0..2000 {
            let e = s.step(ProtocolVariant::NonStrict, &mut rng).unwrap();
            assert!(e.ball.is_some());
            let mut hist = vec![0u64; 3];
            for &p in s.positions().unwrap() {
                hist[p] += 1;
            }
            assert_eq!(hist, s.config().loads());
        }
        assert!(ProcessState::with_positions(2, vec![0, 3]).is_err());
    }

    #[test]
    fn same_stream_same_trajectory() {
        let run = || {
            let mut rng = RngStream::new(28, 5);
            let mut s = ProcessState::new(cfg(&[20, 0, 0, 4]));
            (0..300)
                .map(|_| s.step(ProtocolVariant::NonStrict, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
