//! Destructive moves, causal adversaries and the closeness-preserving
//! coupling.
//!
//! A move of one ball from bin `i` to bin `j` is destructive if
//! `l_i <= l_j + 1`, i.e. it reverses a move the protocol could have made.
//! Configuration `r` is *close* to `l` if `r == l` or `r` arises from `l` by a
//! single destructive move. [`CoupledPair`] runs two processes on shared
//! randomness so that the right one stays close to the left one forever;
//! [`CoupledChain`] stacks pairs to compare the plain process with one
//! exposed to any number of destructive moves.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::config::Configuration;
use crate::engine::{
    Caps, Event, MarkerRecorder, PhaseReport, ProcessState, ProtocolVariant, RunStatus, Truncation,
};
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, exp_unchecked, RngStream};

/// Relocation of one ball. `src != dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Move {
    pub src: usize,
    pub dst: usize,
}

impl Move {
    pub fn new(src: usize, dst: usize) -> Result<Self> {
        if src == dst {
            return Err(Error::Domain(format!("move from bin {src} to itself")));
        }
        Ok(Self { src, dst })
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.src, self.dst)
    }
}

pub fn is_destructive(config: &Configuration, mv: Move) -> Result<bool> {
    config.check_bin(mv.src)?;
    config.check_bin(mv.dst)?;
    let loads = config.loads();
    if loads[mv.src] == 0 {
        return Err(Error::EmptySource(mv.src));
    }
    Ok(mv.src != mv.dst && loads[mv.src] <= loads[mv.dst] + 1)
}

fn not_destructive(config: &Configuration, mv: Move) -> Error {
    Error::NotDestructive {
        src: mv.src,
        dst: mv.dst,
        src_load: config.loads().get(mv.src).copied().unwrap_or(0),
        dst_load: config.loads().get(mv.dst).copied().unwrap_or(0),
    }
}

pub fn apply_destructive(config: &Configuration, mv: Move) -> Result<Configuration> {
    if !is_destructive(config, mv)? {
        return Err(not_destructive(config, mv));
    }
    config.with_ball_moved(mv.src, mv.dst)
}

/// A scripted move applied right after the event with the given index
/// (index 0 means before the first event).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedMove {
    pub event_index: u64,
    pub mv: Move,
}

/// Deterministic causal adversary: maps the index of the event just
/// processed, the current configuration and that event to a list of
/// destructive moves.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum AdversarySchedule {
    #[default]
    None,
    /// Undo every successful protocol move.
    RevertLastSuccess,
    /// Every `every` events, move a ball from a least-loaded non-empty bin to
    /// a most-loaded bin.
    PileUp { every: u64 },
    /// Fixed list of moves, sorted by event index.
    Scripted(Vec<ScriptedMove>),
    /// After each event, with probability `rate`, one uniformly chosen
    /// destructive move. Randomness is derived from `(seed, event index)`
    /// only, never from the process stream.
    Random { seed: u64, rate: f64 },
}

impl AdversarySchedule {
    /// Parses `none`, `revert`, `pileup:<s>`, `random:<seed>:<rate>` or
    /// `script:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut parts = spec.splitn(3, ':');
        let kind = parts.next().unwrap_or_default();
        let bad = || Error::Parse(format!("bad schedule `{spec}`"));
        match kind {
            "none" | "" => Ok(Self::None),
            "revert" | "revert-last-success" => Ok(Self::RevertLastSuccess),
            "pileup" | "pile-up" => {
                let every: u64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if every == 0 {
                    return Err(bad());
                }
                Ok(Self::PileUp { every })
            }
            "random" => {
                let seed = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let rate: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&rate) {
                    return Err(bad());
                }
                Ok(Self::Random { seed, rate })
            }
            "script" => {
                let rest = spec.strip_prefix("script:").ok_or_else(bad)?;
                Self::load_script(Path::new(rest))
            }
            _ => Err(bad()),
        }
    }

    pub fn load_script(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_script(&text)
    }

    /// One move per line: `event_index src dst`. Blank lines and `#`
    /// comments are ignored.
    pub fn parse_script(text: &str) -> Result<Self> {
        let mut moves = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("script line {}: `{line}`", lineno + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let event_index = fields[0].parse().map_err(|_| bad())?;
            let src = fields[1].parse().map_err(|_| bad())?;
            let dst = fields[2].parse().map_err(|_| bad())?;
            moves.push(ScriptedMove {
                event_index,
                mv: Move::new(src, dst).map_err(|_| bad())?,
            });
        }
        moves.sort_by_key(|s| s.event_index);
        Ok(Self::Scripted(moves))
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Self::None)
    }

    pub fn plan(
        &self,
        event_index: u64,
        config: &Configuration,
        last: Option<&Event>,
    ) -> Vec<Move> {
        match self {
            Self::None => Vec::new(),
            Self::RevertLastSuccess => match last {
                Some(e) if e.moved => vec![Move {
                    src: e.dst,
                    dst: e.src,
                }],
                _ => Vec::new(),
            },
            Self::PileUp { every } => {
                if event_index == 0 || !event_index.is_multiple_of(*every) {
                    return Vec::new();
                }
                pile_up_move(config).into_iter().collect()
            }
            Self::Scripted(moves) => {
                let start = moves.partition_point(|s| s.event_index < event_index);
                moves[start..]
                    .iter()
                    .take_while(|s| s.event_index == event_index)
                    .map(|s| s.mv)
                    .collect()
            }
            Self::Random { seed, rate } => {
                let mut rng = RngStream::new(derive_seed(*seed, &[event_index]), 0);
                if rng.unit() >= *rate {
                    return Vec::new();
                }
                random_destructive_move(config, &mut rng)
                    .into_iter()
                    .collect()
            }
        }
    }
}

impl fmt::Display for AdversarySchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "none"),
            Self::RevertLastSuccess => write!(f, "revert"),
            Self::PileUp { every } => write!(f, "pileup:{every}"),
            Self::Scripted(moves) => write!(f, "script({} moves)", moves.len()),
            Self::Random { seed, rate } => write!(f, "random:{seed}:{rate}"),
        }
    }
}

fn pile_up_move(config: &Configuration) -> Option<Move> {
    let loads = config.loads();
    let max = config.max_load();
    let dst = loads.iter().position(|&l| l == max)?;
    let src = loads
        .iter()
        .enumerate()
        .filter(|&(i, &l)| i != dst && l > 0)
        .min_by_key(|&(_, &l)| l)?
        .0;
    Some(Move { src, dst })
}

/// Uniform non-empty source, then a uniform destination among the bins that
/// make the move destructive.
pub fn random_destructive_move(config: &Configuration, rng: &mut RngStream) -> Option<Move> {
    let loads = config.loads();
    let sources: Vec<usize> = (0..loads.len()).filter(|&i| loads[i] > 0).collect();
    if sources.is_empty() {
        return None;
    }
    let src = sources[rng.index(sources.len())];
    let targets: Vec<usize> = (0..loads.len())
        .filter(|&j| j != src && loads[src] <= loads[j] + 1)
        .collect();
    if targets.is_empty() {
        return None;
    }
    Some(Move {
        src,
        dst: targets[rng.index(targets.len())],
    })
}

fn apply_schedule(
    state: &mut ProcessState,
    schedule: &AdversarySchedule,
    event_index: u64,
    last: Option<&Event>,
) -> Result<usize> {
    let moves = schedule.plan(event_index, state.config(), last);
    for &mv in &moves {
        let ok = is_destructive(state.config(), mv).unwrap_or(false);
        if !ok {
            return Err(Error::AdversaryViolation {
                event: event_index,
                detail: format!("{mv} on {}", state.config()),
            });
        }
        state.force_move(mv.src, mv.dst)?;
    }
    Ok(moves.len())
}

/// Protocol step followed by the schedule's moves, repeated until `stop`
/// holds or a cap is hit. Markers and `stop` see the configuration after the
/// adversary has acted. With [`AdversarySchedule::None`] the trajectory is
/// identical to [`crate::engine::run_until`] on the same stream.
pub fn adversarial_run<S>(
    state: &mut ProcessState,
    schedule: &AdversarySchedule,
    variant: ProtocolVariant,
    rng: &mut RngStream,
    mut stop: S,
    caps: Caps,
) -> Result<PhaseReport>
where
    S: FnMut(&ProcessState) -> bool,
{
    let mut recorder = MarkerRecorder::new();
    apply_schedule(state, schedule, 0, None)?;
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
        let injected = apply_schedule(state, schedule, state.events(), Some(&event))?;
        if event.moved || injected > 0 {
            recorder.observe(state);
        }
        if stop(state) {
            let t = state.clock();
            return Ok(recorder.finish(state, Some(t), RunStatus::Reached));
        }
    }
}

/// Where the right configuration differs from the left one, in sorted
/// coordinates: `right = left` with one ball moved from `from` (`i_R`) to
/// `to` (`i_L`), `to < from`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    pub from: usize,
    pub to: usize,
}

/// Case of the coupling analysis an activation falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingCase {
    /// Both sides equal; identity coupling.
    Identical,
    /// Source and destination avoid both gap bins.
    Outside,
    /// Source is the gap's source bin `i_R`.
    SourceAtFrom { distinguished: bool },
    /// Source is the gap's target bin `i_L`.
    SourceAtTo,
    /// Destination is `i_L`, source elsewhere.
    DestinationAtTo,
    /// Destination is `i_R`, source elsewhere.
    DestinationAtFrom,
}

impl CouplingCase {
    fn classify(gap: Option<Gap>, src: usize, dst: usize, distinguished: bool) -> Self {
        let Some(g) = gap else {
            return Self::Identical;
        };
        if src == g.from {
            Self::SourceAtFrom { distinguished }
        } else if src == g.to {
            Self::SourceAtTo
        } else if dst == g.to {
            Self::DestinationAtTo
        } else if dst == g.from {
            Self::DestinationAtFrom
        } else {
            Self::Outside
        }
    }
}

/// Result of one coupled activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledStep {
    pub case: CouplingCase,
    /// Events in the sorted coordinates before the step.
    pub left: Event,
    pub right: Event,
    /// The right event with `src`/`dst` re-expressed in the sorted
    /// coordinates after the step (bins of equal load are exchangeable).
    pub right_after: Event,
}

fn sort_desc(loads: &[u64]) -> Vec<u64> {
    let mut v = loads.to_vec();
    v.sort_unstable_by(|a, b| b.cmp(a));
    v
}

/// Decides closeness of two sorted vectors. `Ok(None)` if equal,
/// `Ok(Some(gap))` if `right` is `left` plus one destructive move.
pub fn closeness_gap(left: &[u64], right: &[u64]) -> std::result::Result<Option<Gap>, String> {
    if left.len() != right.len() {
        return Err("bin counts differ".into());
    }
    let mut up = None;
    let mut down = None;
    for (i, (&l, &r)) in left.iter().zip(right).enumerate() {
        match r as i64 - l as i64 {
            0 => {}
            1 if up.is_none() => up = Some(i),
            -1 if down.is_none() => down = Some(i),
            _ => {
                return Err(format!(
                    "{left:?} vs {right:?}: not a single-ball difference"
                ))
            }
        }
    }
    match (up, down) {
        (None, None) => Ok(None),
        (Some(to), Some(from)) if to < from && left[from] <= left[to] + 1 => {
            Ok(Some(Gap { from, to }))
        }
        _ => Err(format!(
            "{left:?} vs {right:?}: difference is not a destructive move"
        )),
    }
}

/// Two labeled processes, both kept sorted non-increasingly, with the right
/// one close to the left one.
///
/// Labels are canonical after every step: all balls except the
/// distinguished one (label `m - 1`) sit in the same bins on both sides.
/// An activation draws one ball label and one destination rank and applies
/// them to both sides.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    left: ProcessState,
    right: ProcessState,
    gap: Option<Gap>,
    variant: ProtocolVariant,
    clock: f64,
    events: u64,
}

impl CoupledPair {
    pub fn identical(config: &Configuration, variant: ProtocolVariant) -> Self {
        let sorted = config.sorted();
        Self::from_parts(sorted.loads(), sorted.loads(), None, variant)
    }

    /// Pair of `config` and `config` after the destructive move `mv`.
    pub fn from_move(config: &Configuration, mv: Move, variant: ProtocolVariant) -> Result<Self> {
        let right = apply_destructive(config, mv)?;
        Self::new(config, &right, variant)
    }

    /// Fails with [`Error::ClosenessViolation`] unless `right` is close to
    /// `left` (up to bin order).
    pub fn new(
        left: &Configuration,
        right: &Configuration,
        variant: ProtocolVariant,
    ) -> Result<Self> {
        let l = sort_desc(left.loads());
        let r = sort_desc(right.loads());
        let gap = closeness_gap(&l, &r).map_err(Error::ClosenessViolation)?;
        Ok(Self::from_parts(&l, &r, gap, variant))
    }

    fn from_parts(left: &[u64], right: &[u64], gap: Option<Gap>, variant: ProtocolVariant) -> Self {
        let n = left.len();
        let mut base = left.to_vec();
        if let Some(g) = gap {
            base[g.from] -= 1;
        }
        let shared: Vec<usize> = base
            .iter()
            .enumerate()
            .flat_map(|(bin, &l)| std::iter::repeat_n(bin, l as usize))
            .collect();
        let with = |bin: Option<usize>| {
            let mut pos = shared.clone();
            pos.extend(bin);
            ProcessState::with_positions(n, pos).expect("bins in range")
        };
        let pair = Self {
            left: with(gap.map(|g| g.from)),
            right: with(gap.map(|g| g.to)),
            gap,
            variant,
            clock: 0.0,
            events: 0,
        };
        debug_assert_eq!(pair.left.config().loads(), left);
        debug_assert_eq!(pair.right.config().loads(), right);
        pair
    }

    pub fn left(&self) -> &ProcessState {
        &self.left
    }

    pub fn right(&self) -> &ProcessState {
        &self.right
    }

    pub fn gap(&self) -> Option<Gap> {
        self.gap
    }

    pub fn is_identical(&self) -> bool {
        self.gap.is_none()
    }

    /// Label of the ball in which the sides differ.
    pub fn distinguished(&self) -> Option<usize> {
        self.gap.map(|_| self.left.m() as usize - 1)
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn m(&self) -> u64 {
        self.left.m()
    }

    pub fn n(&self) -> usize {
        self.left.n()
    }

    /// Uniform ball label among the left side's balls in `bin`.
    pub fn ball_in_bin(&self, bin: usize, rng: &mut RngStream) -> usize {
        let pos = self.left.positions().expect("labeled");
        let count = self.left.config().loads()[bin];
        let k = rng.below(count) as usize;
        pos.iter()
            .enumerate()
            .filter(|&(_, &p)| p == bin)
            .nth(k)
            .map(|(b, _)| b)
            .expect("histogram matches loads")
    }

    /// Draws a holding time, ball label and destination, then steps.
    pub fn step(&mut self, rng: &mut RngStream) -> Result<CoupledStep> {
        let m = self.m();
        if m == 0 {
            return Err(Error::EmptyWeights);
        }
        let dt = exp_unchecked(m as f64, rng);
        let ball = rng.below(m) as usize;
        let dst = rng.index(self.n());
        self.clock += dt;
        self.events += 1;
        let mut out = self.step_with(ball, dst)?;
        out.left.holding_time = dt;
        out.right.holding_time = dt;
        out.right_after.holding_time = dt;
        Ok(out)
    }

    /// Deterministic coupled activation of `ball` towards rank `dst`.
    pub fn step_with(&mut self, ball: usize, dst: usize) -> Result<CoupledStep> {
        let left_pos = self.left.positions().expect("labeled");
        let right_pos = self.right.positions().expect("labeled");
        let (ls, rs) = (left_pos[ball], right_pos[ball]);
        let l_loads = self.left.config().loads();
        let r_loads = self.right.config().loads();
        let l_moved = ls != dst && self.variant.admits(l_loads[ls], l_loads[dst]);
        let r_moved = rs != dst && self.variant.admits(r_loads[rs], r_loads[dst]);
        let distinguished = self.distinguished() == Some(ball);
        let case = CouplingCase::classify(self.gap, ls, dst, distinguished);
        let before = (l_loads.to_vec(), r_loads.to_vec());
        let r_src_load = r_loads[rs];
        let r_dst_load = r_loads[dst];

        if l_moved {
            self.left.move_ball(ball, dst);
        }
        if r_moved {
            self.right.move_ball(ball, dst);
        }
        let l_after = sort_desc(self.left.config().loads());
        let r_after = sort_desc(self.right.config().loads());
        let gap = closeness_gap(&l_after, &r_after).map_err(|detail| {
            Error::ClosenessViolation(format!(
                "{detail}; before left {:?} right {:?} gap {:?}; ball {ball} \
                 (distinguished: {distinguished}) src {ls}/{rs} dst {dst}; \
                 case {case:?}; moved {l_moved}/{r_moved}",
                before.0, before.1, self.gap
            ))
        })?;
        *self = Self {
            clock: self.clock,
            events: self.events,
            ..Self::from_parts(&l_after, &r_after, gap, self.variant)
        };

        let event = |src, moved| Event {
            src,
            dst,
            moved,
            holding_time: 0.0,
            ball: Some(ball),
        };
        let right_after = if r_moved {
            // The source bin now holds `r_src_load - 1`, the destination
            // `r_dst_load + 1`.
            let dst_after = r_after
                .iter()
                .position(|&l| l == r_dst_load + 1)
                .expect("destination load present");
            let src_after = r_after
                .iter()
                .rposition(|&l| l == r_src_load - 1)
                .expect("source load present");
            Event {
                src: src_after,
                dst: dst_after,
                moved: true,
                holding_time: 0.0,
                ball: Some(ball),
            }
        } else {
            event(rs, false)
        };
        Ok(CoupledStep {
            case,
            left: event(ls, l_moved),
            right: event(rs, r_moved),
            right_after,
        })
    }
}

/// A stack of coupled pairs `P0 ~ P1 ~ ... ~ Pk`: `P0` is the plain process,
/// `Pk` has seen every adversarial move so far, and each adjacent pair is
/// close. Identical adjacent processes are merged.
#[derive(Debug, Clone)]
pub struct CoupledChain {
    pairs: Vec<CoupledPair>,
    variant: ProtocolVariant,
    clock: f64,
    events: u64,
}

/// Outcome of one chain step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainStep {
    pub plain: Event,
    /// Adversarial side's event, in its post-step sorted coordinates.
    pub adversarial: Event,
}

impl CoupledChain {
    pub fn new(initial: &Configuration, variant: ProtocolVariant) -> Self {
        Self {
            pairs: vec![CoupledPair::identical(initial, variant)],
            variant,
            clock: 0.0,
            events: 0,
        }
    }

    pub fn plain(&self) -> &Configuration {
        self.pairs[0].left().config()
    }

    pub fn adversarial(&self) -> &Configuration {
        self.pairs.last().expect("non-empty").right().config()
    }

    /// Number of distinct close pairs currently stacked.
    pub fn depth(&self) -> usize {
        self.pairs.iter().filter(|p| !p.is_identical()).count()
    }

    pub fn pairs(&self) -> &[CoupledPair] {
        &self.pairs
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Applies a destructive move to the adversarial end of the chain.
    pub fn apply_destructive(&mut self, mv: Move) -> Result<()> {
        let last = self.pairs.last().expect("non-empty");
        let top = last.right().config().clone();
        let mut pair = CoupledPair::from_move(&top, mv, self.variant)?;
        pair.clock = self.clock;
        pair.events = self.events;
        if last.is_identical() {
            *self.pairs.last_mut().expect("non-empty") = pair;
        } else if !pair.is_identical() {
            // A move between loads differing by one only swaps two bins.
            self.pairs.push(pair);
        }
        Ok(())
    }

    pub fn step(&mut self, rng: &mut RngStream) -> Result<ChainStep> {
        let m = self.pairs[0].m();
        if m == 0 {
            return Err(Error::EmptyWeights);
        }
        let n = self.pairs[0].n();
        let dt = exp_unchecked(m as f64, rng);
        let ball = rng.below(m) as usize;
        let dst = rng.index(n);
        self.clock += dt;
        self.events += 1;

        let mut step = self.pairs[0].step_with(ball, dst)?;
        let plain = step.left;
        for k in 1..self.pairs.len() {
            let ball = self.pairs[k].ball_in_bin(step.right.src, rng);
            step = self.pairs[k].step_with(ball, dst)?;
        }
        for w in self.pairs.windows(2) {
            if w[0].right().config() != w[1].left().config() {
                return Err(Error::ClosenessViolation(format!(
                    "chain links diverged: {} vs {}",
                    w[0].right().config(),
                    w[1].left().config()
                )));
            }
        }
        self.collapse();
        let mut plain = plain;
        let mut adversarial = step.right_after;
        plain.holding_time = dt;
        adversarial.holding_time = dt;
        Ok(ChainStep { plain, adversarial })
    }

    /// Drops identical links, keeping at least one pair.
    fn collapse(&mut self) {
        if self.pairs.len() > 1 {
            if self.pairs.iter().all(CoupledPair::is_identical) {
                self.pairs.truncate(1);
            } else {
                self.pairs.retain(|p| !p.is_identical());
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DominanceReport {
    pub runs: usize,
    pub events_checked: u64,
    /// Events at which `disc(plain) > disc(adversarial)`.
    pub dominance_violations: u64,
    pub closeness_violations: u64,
    /// Events at which both discrepancies were equal.
    pub equal_events: u64,
    /// Runs where the plain process balanced later than the adversarial one.
    pub hitting_order_violations: u64,
    pub adversarial_moves: u64,
    pub max_depth: usize,
    pub first_violation: Option<String>,
}

impl DominanceReport {
    pub fn passes(&self) -> bool {
        self.dominance_violations == 0
            && self.closeness_violations == 0
            && self.hitting_order_violations == 0
    }

    fn merge(mut self, other: DominanceReport) -> Self {
        self.runs += other.runs;
        self.events_checked += other.events_checked;
        self.dominance_violations += other.dominance_violations;
        self.closeness_violations += other.closeness_violations;
        self.equal_events += other.equal_events;
        self.hitting_order_violations += other.hitting_order_violations;
        self.adversarial_moves += other.adversarial_moves;
        self.max_depth = self.max_depth.max(other.max_depth);
        if self.first_violation.is_none() {
            self.first_violation = other.first_violation;
        }
        self
    }
}

/// Limits of a dominance experiment: continuous-time horizon and event cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub time: f64,
    pub max_steps: u64,
}

/// Runs the plain and the adversarial process coupled through a
/// [`CoupledChain`] and checks `disc(plain) <= disc(adversarial)` after every
/// event. Run `r` uses stream `r` of `seed`; a random schedule gets its seed
/// re-derived per run so that runs see different adversaries.
pub fn dominance_experiment(
    initial: &Configuration,
    schedule: &AdversarySchedule,
    horizon: Horizon,
    runs: usize,
    seed: u64,
    variant: ProtocolVariant,
) -> DominanceReport {
    (0..runs)
        .into_par_iter()
        .map(|run| {
            let schedule = match schedule {
                AdversarySchedule::Random { seed: s, rate } => AdversarySchedule::Random {
                    seed: derive_seed(*s, &[run as u64]),
                    rate: *rate,
                },
                other => other.clone(),
            };
            let mut rng = RngStream::new(seed, run as u64);
            single_dominance_run(initial, &schedule, horizon, variant, &mut rng)
        })
        .reduce(DominanceReport::default, DominanceReport::merge)
}

fn single_dominance_run(
    initial: &Configuration,
    schedule: &AdversarySchedule,
    horizon: Horizon,
    variant: ProtocolVariant,
    rng: &mut RngStream,
) -> DominanceReport {
    let mut report = DominanceReport {
        runs: 1,
        ..Default::default()
    };
    let mut chain = CoupledChain::new(initial, variant);
    let fail = |report: &mut DominanceReport, closeness: bool, msg: String| {
        if closeness {
            report.closeness_violations += 1;
        } else {
            report.dominance_violations += 1;
        }
        report.first_violation.get_or_insert(msg);
    };
    let inject = |chain: &mut CoupledChain,
                  idx: u64,
                  last: Option<&Event>,
                  report: &mut DominanceReport|
     -> Result<()> {
        for mv in schedule.plan(idx, chain.adversarial(), last) {
            chain
                .apply_destructive(mv)
                .map_err(|e| Error::AdversaryViolation {
                    event: idx,
                    detail: e.to_string(),
                })?;
            report.adversarial_moves += 1;
        }
        Ok(())
    };
    if let Err(e) = inject(&mut chain, 0, None, &mut report) {
        fail(&mut report, true, e.to_string());
        return report;
    }
    let mut plain_hit = chain.plain().is_perfectly_balanced().then_some(0.0);
    let mut adv_hit = chain.adversarial().is_perfectly_balanced().then_some(0.0);
    while chain.clock() < horizon.time && chain.events() < horizon.max_steps {
        let step = match chain.step(rng) {
            Ok(s) => s,
            Err(e) => {
                fail(&mut report, true, e.to_string());
                return report;
            }
        };
        let idx = chain.events();
        if let Err(e) = inject(&mut chain, idx, Some(&step.adversarial), &mut report) {
            fail(&mut report, true, e.to_string());
            return report;
        }
        chain.collapse();
        report.max_depth = report.max_depth.max(chain.depth());
        let dp = chain.plain().scaled_discrepancy();
        let da = chain.adversarial().scaled_discrepancy();
        report.events_checked += 1;
        if dp > da {
            let msg = format!(
                "event {}: disc plain {} > adversarial {}",
                chain.events(),
                chain.plain(),
                chain.adversarial()
            );
            fail(&mut report, false, msg);
        } else if dp == da {
            report.equal_events += 1;
        }
        if plain_hit.is_none() && chain.plain().is_perfectly_balanced() {
            plain_hit = Some(chain.clock());
        }
        if adv_hit.is_none() && chain.adversarial().is_perfectly_balanced() {
            adv_hit = Some(chain.clock());
        }
    }
    if let Some(a) = adv_hit {
        if plain_hit.is_none_or(|p| p > a) {
            report.hitting_order_violations += 1;
        }
    }
    report
}

/// Result of comparing exact expected balancing times before and after
/// every destructive move.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactDominance {
    pub pairs_checked: usize,
    /// `(state, move, E[state], E[state after move])` with the second time
    /// smaller than the first.
    pub violations: Vec<(Configuration, Move, f64, f64)>,
}

/// Checks `E[T | destructive(s)] >= E[T | s]` for every sorted state `s` of
/// `(n, m)` and every destructive move, up to `tol`.
pub fn exact_destructive_dominance(
    n: usize,
    m: u64,
    variant: ProtocolVariant,
    tol: f64,
) -> Result<ExactDominance> {
    use crate::oracle::{expected_absorption_time, ExactChain, SortedState};
    let chain = ExactChain::build(n, m, variant)?;
    let times = expected_absorption_time(&chain)?;
    let mut out = ExactDominance::default();
    for (i, s) in chain.states().iter().enumerate() {
        let config = s.to_config();
        for src in 0..n {
            if config.loads()[src] == 0 {
                continue;
            }
            for dst in (0..n).filter(|&d| d != src) {
                let mv = Move { src, dst };
                if !is_destructive(&config, mv)? {
                    continue;
                }
                let after = SortedState::from_config(&apply_destructive(&config, mv)?);
                let j = chain.index_of(&after).expect("same (n, m)");
                out.pairs_checked += 1;
                if times[j] < times[i] - tol {
                    out.violations
                        .push((config.clone(), mv, times[i], times[j]));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_until;
    use crate::oracle::enumerate_states;

    fn cfg(loads: &[u64]) -> Configuration {
        Configuration::new(loads.to_vec()).unwrap()
    }

    #[test]
    fn destructive_examples() {
        assert!(is_destructive(&cfg(&[2, 2]), Move { src: 0, dst: 1 }).unwrap());
        assert!(!is_destructive(&cfg(&[4, 0]), Move { src: 0, dst: 1 }).unwrap());
        assert!(is_destructive(&cfg(&[2, 1]), Move { src: 0, dst: 1 }).unwrap());
        assert!(matches!(
            is_destructive(&cfg(&[0, 1]), Move { src: 0, dst: 1 }),
            Err(Error::EmptySource(0))
        ));
        assert!(Move::new(1, 1).is_err());
    }

    #[test]
    fn apply_destructive_examples() {
        let r = apply_destructive(&cfg(&[2, 2]), Move { src: 0, dst: 1 }).unwrap();
        assert_eq!(r.loads(), &[1, 3]);
        assert_eq!(r.discrepancy(), num_rational::Ratio::from_integer(1));
        let r = apply_destructive(&cfg(&[3, 2, 1]), Move { src: 2, dst: 0 }).unwrap();
        assert_eq!(r.loads(), &[4, 2, 0]);
        assert!(matches!(
            apply_destructive(&cfg(&[4, 0]), Move { src: 0, dst: 1 }),
            Err(Error::NotDestructive { .. })
        ));
    }

    #[test]
    fn destructive_moves_never_help() {
        let mut rng = RngStream::new(31, 0);
        for _ in 0..100_000 {
            let n = 2 + rng.index(7);
            let loads: Vec<u64> = (0..n).map(|_| rng.below(9)).collect();
            let c = cfg(&loads);
            let Some(mv) = random_destructive_move(&c, &mut rng) else {
                continue;
            };
            let d = apply_destructive(&c, mv).unwrap();
            assert!(d.discrepancy() >= c.discrepancy(), "{c} {mv}");
            assert!(d.min_load() <= c.min_load());
            assert!(d.max_load() >= c.max_load());
        }
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!(
            AdversarySchedule::parse("none").unwrap(),
            AdversarySchedule::None
        );
        assert_eq!(
            AdversarySchedule::parse("pileup:10").unwrap(),
            AdversarySchedule::PileUp { every: 10 }
        );
        assert_eq!(
            AdversarySchedule::parse("revert").unwrap(),
            AdversarySchedule::RevertLastSuccess
        );
        assert!(AdversarySchedule::parse("pileup:0").is_err());
        assert!(AdversarySchedule::parse("random:1:2.0").is_err());
        assert!(AdversarySchedule::parse("bogus").is_err());
        let s = AdversarySchedule::parse_script("# header\n0 3 1\n\n5 0 2 # tail\n").unwrap();
        assert_eq!(
            s,
            AdversarySchedule::Scripted(vec![
                ScriptedMove {
                    event_index: 0,
                    mv: Move { src: 3, dst: 1 }
                },
                ScriptedMove {
                    event_index: 5,
                    mv: Move { src: 0, dst: 2 }
                },
            ])
        );
        assert!(AdversarySchedule::parse_script("1 2").is_err());
        assert!(AdversarySchedule::parse_script("1 2 2").is_err());
    }

    #[test]
    fn script_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("moves.txt");
        std::fs::write(&path, "3 1 0\n1 0 1\n").unwrap();
        let spec = format!("script:{}", path.display());
        let s = AdversarySchedule::parse(&spec).unwrap();
        let c = cfg(&[2, 2]);
        assert_eq!(s.plan(1, &c, None), vec![Move { src: 0, dst: 1 }]);
        assert!(s.plan(2, &c, None).is_empty());
        assert!(AdversarySchedule::parse("script:/nonexistent/x").is_err());
    }

    #[test]
    fn empty_schedule_is_trace_identical() {
        for run in 0..50 {
            let start = cfg(&[12, 0, 3, 1]);
            let mut a = ProcessState::new(start.clone());
            let mut b = ProcessState::new(start);
            let mut ra = RngStream::new(32, run);
            let mut rb = RngStream::new(32, run);
            let v = ProtocolVariant::NonStrict;
            let stop = |s: &ProcessState| s.is_perfectly_balanced();
            let x = run_until(&mut a, stop, v, &mut ra, Caps::default()).unwrap();
            let y = adversarial_run(
                &mut b,
                &AdversarySchedule::None,
                v,
                &mut rb,
                stop,
                Caps::default(),
            )
            .unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn revert_schedule_freezes_configuration() {
        let start = cfg(&[6, 1, 0, 1]);
        let mut s = ProcessState::new(start.clone());
        let mut rng = RngStream::new(33, 0);
        let r = adversarial_run(
            &mut s,
            &AdversarySchedule::RevertLastSuccess,
            ProtocolVariant::NonStrict,
            &mut rng,
            |s| s.is_perfectly_balanced(),
            Caps::events(1000),
        )
        .unwrap();
        assert!(r.is_truncated());
        assert_eq!(r.final_config, start);
        assert!(r.marker(crate::engine::Marker::Perfect).is_none());
    }

    #[test]
    fn non_destructive_schedule_aborts() {
        let bad = AdversarySchedule::Scripted(vec![ScriptedMove {
            event_index: 0,
            mv: Move { src: 0, dst: 1 },
        }]);
        let mut s = ProcessState::new(cfg(&[5, 0]));
        let mut rng = RngStream::new(34, 0);
        let err = adversarial_run(
            &mut s,
            &bad,
            ProtocolVariant::NonStrict,
            &mut rng,
            |s| s.is_perfectly_balanced(),
            Caps::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::AdversaryViolation { event: 0, .. }));
    }

    fn all_close_pairs(n: usize, m: u64) -> Vec<(Configuration, Move)> {
        let mut out = Vec::new();
        for s in enumerate_states(n, m, 100_000).unwrap() {
            let c = s.to_config();
            for src in 0..n {
                for dst in 0..n {
                    if src == dst || c.loads()[src] == 0 {
                        continue;
                    }
                    let mv = Move { src, dst };
                    if is_destructive(&c, mv).unwrap() {
                        out.push((c.clone(), mv));
                    }
                }
            }
        }
        out
    }

    fn exhaust(pair: &CoupledPair) {
        for ball in 0..pair.m() as usize {
            for dst in 0..pair.n() {
                let mut p = pair.clone();
                let step = p.step_with(ball, dst);
                assert!(step.is_ok(), "{:?}", step.err());
                let l = p.left().config().scaled_discrepancy();
                let r = p.right().config().scaled_discrepancy();
                assert!(l <= r);
                assert!(p.left().config().is_sorted_desc());
                assert!(p.right().config().is_sorted_desc());
            }
        }
    }

    #[test]
    fn documented_pair_stays_close_for_every_draw() {
        let left = cfg(&[3, 2, 2, 1]);
        let pair =
            CoupledPair::from_move(&left, Move { src: 3, dst: 1 }, ProtocolVariant::NonStrict)
                .unwrap();
        assert_eq!(pair.right().config().loads(), &[3, 3, 2, 0]);
        assert_eq!(pair.gap(), Some(Gap { from: 3, to: 1 }));
        exhaust(&pair);
    }

    #[test]
    fn closeness_preserved_exhaustively_on_small_instances() {
        for variant in [ProtocolVariant::NonStrict, ProtocolVariant::Strict] {
            for n in 2..=4 {
                for m in 1..=8 {
                    for (c, mv) in all_close_pairs(n, m) {
                        exhaust(&CoupledPair::from_move(&c, mv, variant).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn distinguished_ball_into_gap_source_merges_sides() {
        let left = cfg(&[3, 2, 2, 1]);
        let mut pair =
            CoupledPair::from_move(&left, Move { src: 3, dst: 1 }, ProtocolVariant::NonStrict)
                .unwrap();
        let ball = pair.distinguished().unwrap();
        let gap = pair.gap().unwrap();
        let step = pair.step_with(ball, gap.from).unwrap();
        assert_eq!(
            step.case,
            CouplingCase::SourceAtFrom {
                distinguished: true
            }
        );
        assert!(!step.left.moved && step.right.moved);
        assert!(pair.is_identical());
        assert_eq!(pair.left().config(), pair.right().config());
    }

    #[test]
    fn identity_coupling_evolves_identically() {
        let mut pair = CoupledPair::identical(&cfg(&[7, 0, 1]), ProtocolVariant::NonStrict);
        let mut rng = RngStream::new(35, 0);
        for _ in 0..500 {
            let s = pair.step(&mut rng).unwrap();
            assert_eq!(s.case, CouplingCase::Identical);
            assert_eq!(s.left.moved, s.right.moved);
            assert_eq!(pair.left().config(), pair.right().config());
        }
    }

    #[test]
    fn rejects_pairs_that_are_not_close() {
        assert!(
            CoupledPair::new(&cfg(&[2, 2]), &cfg(&[4, 0]), ProtocolVariant::NonStrict).is_err()
        );
        // [3,1] -> [2,2] is a protocol move, not a destructive one.
        assert!(
            CoupledPair::new(&cfg(&[3, 1]), &cfg(&[2, 2]), ProtocolVariant::NonStrict).is_err()
        );
        assert!(CoupledPair::new(&cfg(&[2, 2]), &cfg(&[3, 1]), ProtocolVariant::NonStrict).is_ok());
    }

    #[test]
    fn closeness_gap_canonical_indices() {
        // Destructive move between equal loads: first and last of the block.
        assert_eq!(
            closeness_gap(&[2, 2, 2], &[3, 2, 1]).unwrap(),
            Some(Gap { from: 2, to: 0 })
        );
        assert_eq!(closeness_gap(&[2, 1], &[2, 1]).unwrap(), None);
        assert!(closeness_gap(&[3, 1], &[2, 2]).is_err());
    }

    #[test]
    fn chain_without_adversary_matches_equality() {
        let r = dominance_experiment(
            &cfg(&[10, 0, 0, 2]),
            &AdversarySchedule::None,
            Horizon {
                time: f64::INFINITY,
                max_steps: 2000,
            },
            20,
            36,
            ProtocolVariant::NonStrict,
        );
        assert!(r.passes());
        assert_eq!(r.equal_events, r.events_checked);
        assert_eq!(r.adversarial_moves, 0);
    }

    #[test]
    fn chain_with_adversaries_dominates() {
        for schedule in [
            AdversarySchedule::PileUp { every: 7 },
            AdversarySchedule::RevertLastSuccess,
            AdversarySchedule::Random { seed: 5, rate: 0.2 },
        ] {
            let r = dominance_experiment(
                &cfg(&[9, 3, 0, 0, 4]),
                &schedule,
                Horizon {
                    time: f64::INFINITY,
                    max_steps: 3000,
                },
                20,
                37,
                ProtocolVariant::NonStrict,
            );
            assert!(r.passes(), "{schedule}: {:?}", r.first_violation);
            assert!(r.adversarial_moves > 0);
        }
    }

    #[test]
    fn chain_marginals_follow_the_protocol() {
        // Plain side of a chain with an adversary must have the same law as
        // an uncoupled run: compare mean balancing time from [6,0,0].
        let runs = 200_000;
        let mut plain_times = Vec::new();
        for run in 0..runs {
            let mut chain = CoupledChain::new(&cfg(&[6, 0, 0]), ProtocolVariant::NonStrict);
            let mut rng = RngStream::new(38, run);
            chain.apply_destructive(Move { src: 1, dst: 0 }).ok();
            while !chain.plain().is_perfectly_balanced() {
                let s = chain.step(&mut rng).unwrap();
                if s.adversarial.moved && chain.events().is_multiple_of(3) {
                    let mv = Move {
                        src: s.adversarial.dst,
                        dst: s.adversarial.src,
                    };
                    chain.apply_destructive(mv).unwrap();
                }
                chain.collapse();
            }
            plain_times.push(chain.clock());
        }
        let chain = crate::oracle::ExactChain::build(3, 6, ProtocolVariant::NonStrict).unwrap();
        let exact = crate::oracle::expected_absorption_time(&chain).unwrap();
        let i = chain
            .index_of(&crate::oracle::SortedState::new(vec![6, 0, 0]))
            .unwrap();
        let n = plain_times.len() as f64;
        let mean = plain_times.iter().sum::<f64>() / n;
        let var = plain_times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - exact[i]).abs() < 3.0 * se, "{mean} vs {}", exact[i]);
    }
}
