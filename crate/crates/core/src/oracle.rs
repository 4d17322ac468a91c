//! Exact expected balancing times for small instances.
//!
//! Bins and balls are anonymous, so the process can be quotiented to sorted
//! load vectors (partitions of `m` into at most `n` parts). Neutral moves do
//! not change the sorted vector and are dropped; every remaining transition
//! strictly decreases the sum of squared loads, so each non-balanced state
//! eventually reaches a perfectly balanced one.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::config::Configuration;
use crate::engine::{attempt_move, run_with_markers, Caps, ProcessState, ProtocolVariant};
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, RngStream};

pub const DEFAULT_STATE_LIMIT: usize = 100_000;

/// A load vector sorted non-increasingly and padded with zeros to length `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SortedState(Vec<u64>);

impl SortedState {
    pub fn new(mut loads: Vec<u64>) -> Self {
        loads.sort_unstable_by(|a, b| b.cmp(a));
        Self(loads)
    }

    pub fn from_config(config: &Configuration) -> Self {
        Self::new(config.loads().to_vec())
    }

    pub fn loads(&self) -> &[u64] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn m(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn to_config(&self) -> Configuration {
        Configuration::new(self.0.clone()).expect("sorted states are non-empty")
    }

    pub fn is_perfectly_balanced(&self) -> bool {
        self.to_config().is_perfectly_balanced()
    }

    /// Distinct loads with their multiplicities, largest first.
    fn classes(&self) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = Vec::new();
        for &l in &self.0 {
            match out.last_mut() {
                Some((v, c)) if *v == l => *c += 1,
                _ => out.push((l, 1)),
            }
        }
        out
    }

    /// The sorted vector after moving one ball from a bin of load `from` to a
    /// bin of load `to`.
    fn shifted(&self, from: u64, to: u64) -> SortedState {
        let mut loads = self.0.clone();
        // Last bin with load `from`, first bin with load `to`: keeps order
        // except when the two bins swap relative rank.
        let i = loads
            .iter()
            .rposition(|&l| l == from)
            .expect("class present");
        loads[i] -= 1;
        let j = loads.iter().position(|&l| l == to).expect("class present");
        loads[j] += 1;
        SortedState::new(loads)
    }
}

impl fmt::Display for SortedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// All partitions of `m` into at most `n` parts, in decreasing lexicographic
/// order.
pub fn enumerate_states(n: usize, m: u64, limit: usize) -> Result<Vec<SortedState>> {
    if n == 0 {
        return Err(Error::InvalidConfiguration("need at least one bin".into()));
    }
    let mut out = Vec::new();
    let mut parts = Vec::with_capacity(n);
    fill_partitions(n, m, m, &mut parts, &mut out, limit).map_err(|_| Error::StateLimit {
        n,
        m,
        limit,
    })?;
    Ok(out)
}

fn fill_partitions(
    slots: usize,
    remaining: u64,
    cap: u64,
    parts: &mut Vec<u64>,
    out: &mut Vec<SortedState>,
    limit: usize,
) -> std::result::Result<(), ()> {
    if remaining == 0 {
        if out.len() >= limit {
            return Err(());
        }
        let mut loads = parts.clone();
        loads.resize(parts.len() + slots, 0);
        out.push(SortedState(loads));
        return Ok(());
    }
    if slots == 0 {
        return Ok(());
    }
    // The largest remaining part must be able to absorb what is left.
    let lo = remaining.div_ceil(slots as u64);
    for first in (lo..=cap.min(remaining)).rev() {
        parts.push(first);
        fill_partitions(slots - 1, remaining - first, first, parts, out, limit)?;
        parts.pop();
    }
    Ok(())
}

/// Vector-changing successors of a sorted state with their rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions {
    /// Total rate of leaving the state, in units of continuous time.
    pub exit_rate: f64,
    /// Successor and its probability given that the state is left.
    pub successors: Vec<(SortedState, f64)>,
}

impl Transitions {
    pub fn is_absorbing(&self) -> bool {
        self.successors.is_empty()
    }
}

/// Successor rates by load class: a ball on a bin of load `a` is activated
/// at total rate `c_a * a`, picks one of the `c_b` bins of load `b` with
/// probability `c_b / n`.
fn successor_rates(s: &SortedState, variant: ProtocolVariant) -> BTreeMap<SortedState, f64> {
    let n = s.n() as f64;
    let classes = s.classes();
    let mut rates = BTreeMap::new();
    for &(a, ca) in &classes {
        if a == 0 {
            continue;
        }
        for &(b, cb) in &classes {
            if a == b || !variant.admits(a, b) {
                continue;
            }
            let next = s.shifted(a, b);
            if next == *s {
                continue;
            }
            *rates.entry(next).or_insert(0.0) += (ca * a * cb) as f64 / n;
        }
    }
    rates
}

pub fn transition_distribution(s: &SortedState, variant: ProtocolVariant) -> Transitions {
    let rates = successor_rates(s, variant);
    let exit_rate = rates.values().fold(0.0, |acc, r| acc + r);
    let successors = rates
        .into_iter()
        .map(|(state, r)| (state, r / exit_rate))
        .collect();
    Transitions {
        exit_rate,
        successors,
    }
}

/// The quotient jump chain of one `(n, m)` instance.
#[derive(Debug, Clone)]
pub struct ExactChain {
    n: usize,
    m: u64,
    variant: ProtocolVariant,
    states: Vec<SortedState>,
    lookup: HashMap<SortedState, usize>,
    transitions: Vec<Transitions>,
}

impl ExactChain {
    pub fn build(n: usize, m: u64, variant: ProtocolVariant) -> Result<Self> {
        Self::build_with_limit(n, m, variant, DEFAULT_STATE_LIMIT)
    }

    pub fn build_with_limit(
        n: usize,
        m: u64,
        variant: ProtocolVariant,
        limit: usize,
    ) -> Result<Self> {
        let states = enumerate_states(n, m, limit)?;
        let lookup = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let transitions = states
            .iter()
            .map(|s| transition_distribution(s, variant))
            .collect();
        Ok(Self {
            n,
            m,
            variant,
            states,
            lookup,
            transitions,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn variant(&self) -> ProtocolVariant {
        self.variant
    }

    pub fn states(&self) -> &[SortedState] {
        &self.states
    }

    pub fn index_of(&self, s: &SortedState) -> Option<usize> {
        self.lookup.get(s).copied()
    }

    pub fn transitions(&self, i: usize) -> &Transitions {
        &self.transitions[i]
    }

    /// Survival function `P(T > t)` of the balancing time from `start`, for
    /// chains where every transient state has a single successor with a
    /// distinct exit rate (e.g. two bins). `T` is then a sum of independent
    /// exponentials with the rates along the path.
    pub fn path_survival(&self, start: &SortedState, t: f64) -> Result<f64> {
        let mut rates = Vec::new();
        let mut i = self
            .index_of(start)
            .ok_or_else(|| Error::Domain(format!("state {start} not in chain")))?;
        while !self.transitions[i].is_absorbing() {
            let tr = &self.transitions[i];
            if tr.successors.len() != 1 {
                return Err(Error::Domain(format!(
                    "state {} branches; survival needs a path chain",
                    self.states[i]
                )));
            }
            rates.push(tr.exit_rate);
            i = self.lookup[&tr.successors[0].0];
        }
        if rates.is_empty() {
            return Ok(if t < 0.0 { 1.0 } else { 0.0 });
        }
        let mut survival = 0.0;
        for (k, &rk) in rates.iter().enumerate() {
            let mut coeff = 1.0;
            for (j, &rj) in rates.iter().enumerate() {
                if j != k {
                    if (rj - rk).abs() < 1e-12 {
                        return Err(Error::Domain("repeated exit rates on path".into()));
                    }
                    coeff *= rj / (rj - rk);
                }
            }
            survival += coeff * (-rk * t).exp();
        }
        Ok(survival.clamp(0.0, 1.0))
    }
}

/// Solves `E[s] = 1/exit(s) + sum_s' P(s -> s') E[s']` with `E = 0` on
/// perfectly balanced states, by dense Gaussian elimination with partial
/// pivoting. Returns times indexed like `chain.states()`.
pub fn expected_absorption_time(chain: &ExactChain) -> Result<Vec<f64>> {
    let k = chain.states.len();
    let mut a = vec![0.0f64; k * k];
    let mut b = vec![0.0f64; k];
    for (i, tr) in chain.transitions.iter().enumerate() {
        a[i * k + i] = 1.0;
        if tr.is_absorbing() {
            if !chain.states[i].is_perfectly_balanced() {
                return Err(Error::Singular(i));
            }
            continue;
        }
        b[i] = 1.0 / tr.exit_rate;
        for (succ, p) in &tr.successors {
            let j = chain.lookup[succ];
            a[i * k + j] -= p;
        }
    }
    solve_dense(&mut a, &mut b, k)?;
    Ok(b)
}

fn solve_dense(a: &mut [f64], b: &mut [f64], k: usize) -> Result<()> {
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| a[x * k + col].abs().total_cmp(&a[y * k + col].abs()))
            .expect("non-empty range");
        if a[pivot * k + col].abs() < 1e-300 {
            return Err(Error::Singular(col));
        }
        if pivot != col {
            for c in 0..k {
                a.swap(pivot * k + c, col * k + c);
            }
            b.swap(pivot, col);
        }
        let diag = a[col * k + col];
        for row in col + 1..k {
            let f = a[row * k + col] / diag;
            if f == 0.0 {
                continue;
            }
            for c in col..k {
                a[row * k + c] -= f * a[col * k + c];
            }
            b[row] -= f * b[col];
        }
    }
    for row in (0..k).rev() {
        let mut acc = b[row];
        for c in row + 1..k {
            acc -= a[row * k + c] * b[c];
        }
        b[row] = acc / a[row * k + row];
    }
    Ok(())
}

/// Writes `state,exit_rate,expected_time` rows, states as space-separated
/// loads.
pub fn write_csv(chain: &ExactChain, times: &[f64], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "state,exit_rate,expected_time")?;
        for ((s, tr), t) in chain.states.iter().zip(&chain.transitions).zip(times) {
            writeln!(w, "{s},{},{}", tr.exit_rate, t)?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub state: SortedState,
    pub exact: f64,
    pub mean: f64,
    pub std_err: f64,
    pub z: f64,
    pub truncated: usize,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub n: usize,
    pub m: u64,
    pub runs: usize,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }

    pub fn passes(&self, z_limit: f64) -> bool {
        self.rows
            .iter()
            .all(|r| r.truncated == 0 && r.z.abs() <= z_limit)
    }
}

/// Simulates `runs` balancing times from every sorted state of `(n, m)` and
/// compares their mean with the exact expectation.
pub fn validate_simulator(
    n: usize,
    m: u64,
    runs: usize,
    seed: u64,
    variant: ProtocolVariant,
) -> Result<ValidationReport> {
    let chain = ExactChain::build(n, m, variant)?;
    let exact = expected_absorption_time(&chain)?;
    let rows = chain
        .states
        .par_iter()
        .zip(exact.par_iter())
        .map(|(state, &exact)| {
            let words: Vec<u64> = std::iter::once(n as u64)
                .chain(state.loads().iter().copied())
                .collect();
            let cell = derive_seed(seed, &words);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut truncated = 0;
            for run in 0..runs {
                let mut rng = RngStream::new(cell, run as u64);
                let mut ps = ProcessState::new(state.to_config());
                let report = run_with_markers(&mut ps, variant, &mut rng, Caps::default())?;
                match report.stop_time {
                    Some(t) => {
                        sum += t;
                        sum_sq += t * t;
                    }
                    None => truncated += 1,
                }
            }
            let done = (runs - truncated) as f64;
            let mean = sum / done;
            let var = ((sum_sq - done * mean * mean) / (done - 1.0)).max(0.0);
            let std_err = (var / done).sqrt();
            let diff = mean - exact;
            let z = if std_err > 0.0 {
                diff / std_err
            } else if diff.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(ValidationRow {
                state: state.clone(),
                exact,
                mean,
                std_err,
                z,
                truncated,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport { n, m, runs, rows })
}

/// Rates of the quotient chain computed from an arbitrary (unsorted)
/// representative by enumerating every `(source bin, destination bin)` pair
/// with the engine's rule.
pub fn rates_from_representative(
    config: &Configuration,
    variant: ProtocolVariant,
) -> BTreeMap<SortedState, f64> {
    let here = SortedState::from_config(config);
    let n = config.n() as f64;
    let mut rates = BTreeMap::new();
    for src in 0..config.n() {
        let load = config.loads()[src];
        if load == 0 {
            continue;
        }
        for dst in 0..config.n() {
            if !attempt_move(config, src, dst, variant).expect("valid bins") {
                continue;
            }
            let next = SortedState::from_config(&config.with_ball_moved(src, dst).unwrap());
            if next != here {
                *rates.entry(next).or_insert(0.0) += load as f64 / n;
            }
        }
    }
    rates
}
