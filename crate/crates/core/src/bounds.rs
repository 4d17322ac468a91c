//! Closed-form tail bounds, epoch conversions and the first-phase schedule.
//!
//! Bounds are returned unclamped, so values above 1 are possible (vacuous).
//! Argument checks use negated comparisons so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;

use rand_distr::{Binomial, Distribution, Exp, Geometric};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::{derive_seed, RngStream};

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

/// `Pr[|X - np| >= eps * np] <= 2 exp(-eps^2 np / 3)` for a binomial `X`.
pub fn chernoff_tail(np: f64, eps: f64) -> Result<f64> {
    if !(0.0..=1.5).contains(&eps) {
        return Err(domain(format!("eps = {eps} outside [0, 1.5]")));
    }
    if !(np >= 0.0) {
        return Err(domain(format!("np = {np} is negative")));
    }
    Ok(2.0 * (-eps * eps * np / 3.0).exp())
}

/// `Pr[X >= R] <= 2^-R` for a binomial `X` with mean `np`, valid for
/// `R >= 6 np`.
pub fn binomial_tail_large(np: f64, r: f64) -> Result<f64> {
    if !(np >= 0.0) || !(r >= 6.0 * np) {
        return Err(domain(format!("need R >= 6np, got R = {r}, np = {np}")));
    }
    Ok((-r).exp2())
}

/// Tail of a sum of independent exponentials whose rates are all at least
/// `lambda_min`: `Pr[X >= E[X] + delta] <= exp(lambda^2 Var / 4 - lambda delta / 2)`.
pub fn exp_sum_tail(lambda_min: f64, variance: f64, delta: f64) -> Result<f64> {
    if !(lambda_min > 0.0) || !(variance >= 0.0) {
        return Err(domain(format!(
            "need lambda > 0 and Var >= 0, got {lambda_min}, {variance}"
        )));
    }
    Ok((lambda_min * lambda_min * variance / 4.0 - lambda_min * delta / 2.0).exp())
}

/// Tail of `sum c_i Y_i` with `Y_i` i.i.d. geometric(p) on `{1, 2, ...}`:
/// `Pr[X >= t] <= exp(V / 4M^2 + (S + S L - t L) / 2M)` where `M = max c_i`,
/// `S = sum c_i`, `V = sum c_i^2` and `L = -ln(1 - p)`.
pub fn geom_sum_tail(p: f64, coefficients: &[f64], t: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("p = {p} outside (0, 1)")));
    }
    if coefficients.is_empty() || coefficients.iter().any(|&c| !(c > 0.0)) {
        return Err(domain("coefficients must be non-empty and positive"));
    }
    let m = coefficients.iter().cloned().fold(0.0, f64::max);
    let s: f64 = coefficients.iter().sum();
    let v: f64 = coefficients.iter().map(|c| c * c).sum();
    Ok(geom_sum_tail_with(p, m, s, v, t))
}

/// Same bound from the summary statistics `M`, `S >= sum c_i` and
/// `V >= sum c_i^2`.
pub fn geom_sum_tail_with(p: f64, m: f64, s: f64, v: f64, t: f64) -> f64 {
    let l = -(1.0 - p).ln();
    (v / (4.0 * m * m) + (s + s * l - t * l) / (2.0 * m)).exp()
}

/// A phase that succeeds within `t` with probability at least 1/2 is, after
/// restarts, finished within `2 t log2 n` with high probability.
pub fn epoch_whp_time(t: f64, n: usize) -> Result<f64> {
    if !(t >= 0.0) || n == 0 {
        return Err(domain(format!("need t >= 0 and n >= 1, got {t}, {n}")));
    }
    Ok(2.0 * t * (n as f64).log2())
}

/// Expected duration of restarted epochs of length `t` that each succeed
/// with probability `p`.
pub fn epoch_expected_time(t: f64, p: f64) -> Result<f64> {
    if !(t >= 0.0) || !(p > 0.0 && p <= 1.0) {
        return Err(domain(format!("need t >= 0 and p in (0, 1], got {t}, {p}")));
    }
    Ok(t / p)
}

/// Shrinking discrepancy thresholds of the first phase.
///
/// `x[0] = avg / 2` and `x[k] = sqrt(4 x[k-1] ln n)` for `k = 1..=r` with
/// `r = ceil(log2 log2 avg)`. Step `k` is predicted to take `c[k-1]` time
/// units with `c[i] = 16 ln n x0^(1/2^i) / avg`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    pub n: usize,
    pub avg: f64,
    pub x: Vec<f64>,
    pub c: Vec<f64>,
}

impl PhaseSchedule {
    pub fn rounds(&self) -> usize {
        self.x.len() - 1
    }

    pub fn ln_n(&self) -> f64 {
        (self.n as f64).ln()
    }

    pub fn predicted_total(&self) -> f64 {
        self.c.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.c.iter().map(|c| c * c).sum()
    }

    /// Names of the violated invariants, empty if all hold.
    pub fn violations(&self) -> Vec<String> {
        let ln = self.ln_n();
        let x0 = self.x[0];
        let tol = 1e-9;
        let mut out = Vec::new();
        for (k, &xk) in self.x.iter().enumerate() {
            let cap = 4.0 * ln * x0.powf((-(k as f64)).exp2());
            if k > 0 && xk > cap * (1.0 + tol) {
                out.push(format!("x[{k}] = {xk} > {cap}"));
            }
        }
        let last = *self.x.last().expect("x non-empty");
        if last > 8.0 * ln * (1.0 + tol) {
            out.push(format!("x[r] = {last} > 8 ln n"));
        }
        if self.predicted_total() > 32.0 * ln * (1.0 + tol) {
            out.push(format!("sum c = {} > 32 ln n", self.predicted_total()));
        }
        if self.sum_sq() > 256.0 * ln * ln * (1.0 + tol) {
            out.push(format!("sum c^2 = {} > 256 ln^2 n", self.sum_sq()));
        }
        out
    }
}

/// Builds the schedule; requires `avg > 16 ln n` and `n >= 2`.
pub fn phase1_schedule(n: usize, avg: f64) -> Result<PhaseSchedule> {
    if n < 2 {
        return Err(domain("need n >= 2"));
    }
    let ln = (n as f64).ln();
    if !(avg > 16.0 * ln) {
        return Err(domain(format!(
            "avg = {avg} not above 16 ln n = {}",
            16.0 * ln
        )));
    }
    let r = avg.log2().log2().ceil().max(0.0) as usize;
    let x0 = avg / 2.0;
    let mut x = vec![x0];
    for k in 1..=r {
        x.push((4.0 * x[k - 1] * ln).sqrt());
    }
    let c = (0..r)
        .map(|i| 16.0 * ln * x0.powf((-(i as f64)).exp2()) / avg)
        .collect();
    let schedule = PhaseSchedule { n, avg, x, c };
    let last = *schedule.x.last().expect("x non-empty");
    if last > 8.0 * ln * (1.0 + 1e-9) {
        return Err(domain(format!("x[r] = {last} exceeds 8 ln n")));
    }
    Ok(schedule)
}

/// Tail bound families with a Monte Carlo validity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Chernoff,
    BinomialLarge,
    ExpSum,
    GeomSum,
}

impl BoundKind {
    pub const ALL: [BoundKind; 4] = [
        BoundKind::Chernoff,
        BoundKind::BinomialLarge,
        BoundKind::ExpSum,
        BoundKind::GeomSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Chernoff => "chernoff",
            BoundKind::BinomialLarge => "binomial",
            BoundKind::ExpSum => "exp",
            BoundKind::GeomSum => "geom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown bound `{s}`")))
    }
}

/// Empirical tail frequency against the bound for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityCheck {
    pub kind: BoundKind,
    pub params: String,
    pub frequency: f64,
    pub std_err: f64,
    pub bound: f64,
}

impl ValidityCheck {
    /// Frequency at most bound plus `z` standard errors.
    pub fn passes(&self, z: f64) -> bool {
        self.frequency <= self.bound + z * self.std_err
    }
}

impl fmt::Display for ValidityCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<9} {:<48} freq {:.6} (se {:.2e})  bound {:.6}",
            self.kind.name(),
            self.params,
            self.frequency,
            self.std_err,
            self.bound
        )
    }
}

fn frequency(samples: u64, seed: u64, mut hit: impl FnMut(&mut RngStream) -> bool) -> (f64, f64) {
    let mut rng = RngStream::new(seed, 0);
    let k = (0..samples).filter(|_| hit(&mut rng)).count() as f64;
    let p = k / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

/// Draws random parameters for one set and estimates the tail it bounds.
fn validity_check(kind: BoundKind, set: u64, samples: u64, seed: u64) -> Result<ValidityCheck> {
    let tag = kind as u64;
    let mut prm = RngStream::new(derive_seed(seed, &[tag]), set);
    let mc_seed = derive_seed(seed, &[tag, set]);
    let (params, (frequency, std_err), bound) = match kind {
        BoundKind::Chernoff => {
            let trials = 10 + prm.below(490);
            let p = 0.01 + 0.49 * prm.unit();
            let eps = 0.1 + 1.4 * prm.unit();
            let np = trials as f64 * p;
            let bin = Binomial::new(trials, p).map_err(|e| Error::Domain(e.to_string()))?;
            let est = frequency(samples, mc_seed, |r| {
                (bin.sample(r) as f64 - np).abs() >= eps * np
            });
            (
                format!("Bin({trials}, {p:.4}) eps={eps:.3}"),
                est,
                chernoff_tail(np, eps)?,
            )
        }
        BoundKind::BinomialLarge => {
            let trials = 10 + prm.below(490);
            let p = 0.001 + 0.05 * prm.unit();
            let np = trials as f64 * p;
            let r = (6.0 * np).ceil().max(1.0) + prm.below(4) as f64;
            let bin = Binomial::new(trials, p).map_err(|e| Error::Domain(e.to_string()))?;
            let est = frequency(samples, mc_seed, |rng| bin.sample(rng) as f64 >= r);
            (
                format!("Bin({trials}, {p:.4}) R={r}"),
                est,
                binomial_tail_large(np, r)?,
            )
        }
        BoundKind::ExpSum => {
            let k = 1 + prm.index(20);
            let rates: Vec<f64> = (0..k).map(|_| 0.2 + 3.0 * prm.unit()).collect();
            let lambda = rates.iter().cloned().fold(f64::INFINITY, f64::min);
            let mean: f64 = rates.iter().map(|l| 1.0 / l).sum();
            let var: f64 = rates.iter().map(|l| 1.0 / (l * l)).sum();
            let delta = (1.0 + 8.0 * prm.unit()) * var.sqrt();
            let dists = rates
                .iter()
                .map(|&l| Exp::new(l).map_err(|e| Error::Domain(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let est = frequency(samples, mc_seed, |r| {
                dists.iter().map(|d| d.sample(r)).sum::<f64>() >= mean + delta
            });
            (
                format!("{k} exponentials, lambda={lambda:.3} delta={delta:.3}"),
                est,
                exp_sum_tail(lambda, var, delta)?,
            )
        }
        BoundKind::GeomSum => {
            let p = 0.05 + 0.9 * prm.unit();
            let c: Vec<f64> = (0..1 + prm.index(8))
                .map(|_| 0.1 + 2.0 * prm.unit())
                .collect();
            let s: f64 = c.iter().sum();
            let t = s / p * (1.0 + 3.0 * prm.unit());
            let geo = Geometric::new(p).map_err(|e| Error::Domain(e.to_string()))?;
            // The sampler counts failures; the bound is for trials.
            let est = frequency(samples, mc_seed, |r| {
                c.iter()
                    .map(|&ci| ci * (geo.sample(r) + 1) as f64)
                    .sum::<f64>()
                    >= t
            });
            (
                format!("{} terms, p={p:.3} t={t:.3}", c.len()),
                est,
                geom_sum_tail(p, &c, t)?,
            )
        }
    };
    Ok(ValidityCheck {
        kind,
        params,
        frequency,
        std_err,
        bound,
    })
}

/// Monte Carlo validity checks over `sets` random parameter sets, each with
/// `samples` draws. Deterministic given `seed`.
pub fn validity_checks(
    kind: BoundKind,
    sets: u64,
    samples: u64,
    seed: u64,
) -> Result<Vec<ValidityCheck>> {
    (0..sets)
        .into_par_iter()
        .map(|set| validity_check(kind, set, samples, seed))
        .collect()
}

/// `sum_{k=a+1}^{b} 1/k`, by direct summation.
pub fn harmonic_difference(b: u64, a: u64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // Smallest terms first for accuracy.
    (a + 1..=b).rev().map(|k| 1.0 / k as f64).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBounds {
    /// `H_m - H_floor(avg)`: time until all but `floor(avg)` of the balls
    /// in the fullest bin have been activated at least once.
    pub activation: f64,
    /// `n / (avg + 1)`: expected balancing time from a single perturbed
    /// ball.
    pub perturbation: f64,
}

pub fn lower_bound_times(n: usize, m: u64) -> Result<LowerBounds> {
    if n == 0 || m == 0 {
        return Err(domain("need n >= 1 and m >= 1"));
    }
    let avg_floor = m / n as u64;
    Ok(LowerBounds {
        activation: harmonic_difference(m, avg_floor),
        perturbation: (n as f64) * (n as f64) / (m as f64 + n as f64),
    })
}
