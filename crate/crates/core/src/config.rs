//! Load vectors and balance metrics.
//!
//! The average load `m/n` is generally not an integer, so every predicate is
//! evaluated on values scaled by `n`: a bin with load `l` deviates from the
//! average by `(n*l - m)/n`. Comparisons against thresholds such as `disc < 1`
//! therefore happen in integer arithmetic.

use std::fmt;

use num_rational::Ratio;

use crate::error::{Error, Result};

/// Balls per bin. `m` is cached and always equals the sum of `loads`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    loads: Vec<u64>,
    m: u64,
}

/// Counts of bins strictly above, exactly at and strictly below the average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinClasses {
    pub above: usize,
    pub at: usize,
    pub below: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceMetrics {
    pub discrepancy: Ratio<i64>,
    pub min_load: u64,
    pub max_load: u64,
    /// `A`, the number of overloaded balls.
    pub overloaded_balls: Ratio<i64>,
    pub classes: BinClasses,
    /// `3A - k - h`; only defined when `n | m`.
    pub potential: Option<i64>,
}

impl Configuration {
    pub fn new(loads: Vec<u64>) -> Result<Self> {
        if loads.is_empty() {
            return Err(Error::InvalidConfiguration("need at least one bin".into()));
        }
        let m = loads
            .iter()
            .try_fold(0u64, |acc, &l| acc.checked_add(l))
            .ok_or_else(|| Error::InvalidConfiguration("total load overflows u64".into()))?;
        Ok(Self { loads, m })
    }

    /// All `m` balls in bin 0.
    pub fn all_in_one(n: usize, m: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfiguration("need at least one bin".into()));
        }
        let mut loads = vec![0; n];
        loads[0] = m;
        Self::new(loads)
    }

    pub fn loads(&self) -> &[u64] {
        &self.loads
    }

    pub fn n(&self) -> usize {
        self.loads.len()
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn into_loads(self) -> Vec<u64> {
        self.loads
    }

    pub fn min_load(&self) -> u64 {
        self.loads.iter().copied().min().unwrap_or(0)
    }

    pub fn max_load(&self) -> u64 {
        self.loads.iter().copied().max().unwrap_or(0)
    }

    pub fn average_load(&self) -> Ratio<i64> {
        Ratio::new(self.m as i64, self.n() as i64)
    }

    /// `n * l - m` for a bin of load `l`.
    #[inline]
    pub fn scaled_deviation(&self, load: u64) -> i64 {
        self.n() as i64 * load as i64 - self.m as i64
    }

    /// `n * disc`, an exact integer.
    pub fn scaled_discrepancy(&self) -> u64 {
        let hi = self.scaled_deviation(self.max_load());
        let lo = self.scaled_deviation(self.min_load());
        hi.unsigned_abs().max(lo.unsigned_abs())
    }

    pub fn discrepancy(&self) -> Ratio<i64> {
        Ratio::new(self.scaled_discrepancy() as i64, self.n() as i64)
    }

    /// `n * A` where `A = sum_i max(0, l_i - m/n)`.
    pub fn scaled_overloaded(&self) -> u64 {
        self.loads
            .iter()
            .map(|&l| self.scaled_deviation(l).max(0) as u64)
            .sum()
    }

    pub fn overloaded_balls(&self) -> Ratio<i64> {
        Ratio::new(self.scaled_overloaded() as i64, self.n() as i64)
    }

    /// `sum_i max(0, m/n - l_i)`.
    pub fn holes(&self) -> Ratio<i64> {
        let scaled: u64 = self
            .loads
            .iter()
            .map(|&l| (-self.scaled_deviation(l)).max(0) as u64)
            .sum();
        Ratio::new(scaled as i64, self.n() as i64)
    }

    pub fn bin_classes(&self) -> BinClasses {
        let mut classes = BinClasses {
            above: 0,
            at: 0,
            below: 0,
        };
        for &l in &self.loads {
            match self.scaled_deviation(l).signum() {
                1 => classes.above += 1,
                0 => classes.at += 1,
                _ => classes.below += 1,
            }
        }
        classes
    }

    /// `3A - k - h`. Rejects configurations whose average is fractional.
    pub fn potential(&self) -> Result<i64> {
        if !self.m.is_multiple_of(self.n() as u64) {
            return Err(Error::NonIntegralAverage {
                n: self.n(),
                m: self.m,
            });
        }
        let avg = self.m / self.n() as u64;
        let overloaded: u64 = self.loads.iter().map(|&l| l.saturating_sub(avg)).sum();
        let c = self.bin_classes();
        Ok(3 * overloaded as i64 - c.below as i64 - c.above as i64)
    }

    pub fn is_x_balanced(&self, x: f64) -> bool {
        self.scaled_discrepancy() as f64 <= x * self.n() as f64
    }

    /// `disc < 1`.
    pub fn is_perfectly_balanced(&self) -> bool {
        self.scaled_discrepancy() < self.n() as u64
    }

    pub fn metrics(&self) -> BalanceMetrics {
        BalanceMetrics {
            discrepancy: self.discrepancy(),
            min_load: self.min_load(),
            max_load: self.max_load(),
            overloaded_balls: self.overloaded_balls(),
            classes: self.bin_classes(),
            potential: self.potential().ok(),
        }
    }

    /// Loads sorted non-increasingly.
    pub fn sorted(&self) -> Self {
        let mut loads = self.loads.clone();
        loads.sort_unstable_by(|a, b| b.cmp(a));
        Self { loads, m: self.m }
    }

    pub fn is_sorted_desc(&self) -> bool {
        self.loads.windows(2).all(|w| w[0] >= w[1])
    }

    /// Copy with one ball moved from `src` to `dst`.
    pub fn with_ball_moved(&self, src: usize, dst: usize) -> Result<Self> {
        let mut next = self.clone();
        next.shift(src, dst)?;
        Ok(next)
    }

    pub(crate) fn check_bin(&self, bin: usize) -> Result<()> {
        if bin >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: bin,
                len: self.n(),
            });
        }
        Ok(())
    }

    pub(crate) fn shift(&mut self, src: usize, dst: usize) -> Result<()> {
        self.check_bin(src)?;
        self.check_bin(dst)?;
        if self.loads[src] == 0 {
            return Err(Error::EmptySource(src));
        }
        self.loads[src] -= 1;
        self.loads[dst] += 1;
        Ok(())
    }

    pub(crate) fn loads_mut(&mut self) -> &mut [u64] {
        &mut self.loads
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, l) in self.loads.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(loads: &[u64]) -> Configuration {
        Configuration::new(loads.to_vec()).unwrap()
    }

    fn r(num: i64, den: i64) -> Ratio<i64> {
        Ratio::new(num, den)
    }

    #[test]
    fn average_load_examples() {
        assert_eq!(cfg(&[4, 2, 0]).average_load(), r(2, 1));
        assert_eq!(cfg(&[0, 0]).average_load(), r(0, 1));
        assert_eq!(cfg(&[2, 2, 1, 1]).average_load(), r(3, 2));
    }

    #[test]
    fn discrepancy_examples() {
        assert_eq!(cfg(&[4, 2, 0]).discrepancy(), r(2, 1));
        assert_eq!(cfg(&[2, 2, 2]).discrepancy(), r(0, 1));
        assert_eq!(cfg(&[4, 3, 3, 2]).discrepancy(), r(1, 1));
        assert_eq!(cfg(&[2, 2, 1, 1]).discrepancy(), r(1, 2));
    }

    #[test]
    fn overloaded_examples() {
        assert_eq!(cfg(&[4, 2, 0]).overloaded_balls(), r(2, 1));
        assert_eq!(cfg(&[2, 2, 2]).overloaded_balls(), r(0, 1));
    }

    #[test]
    fn overloaded_equals_holes_with_six_excess() {
        let c = cfg(&[9, 7, 7, 7, 6, 6, 6, 6, 6, 6, 6, 5, 5, 5, 4, 5]);
        assert_eq!(c.average_load(), r(6, 1));
        assert_eq!(c.overloaded_balls(), r(6, 1));
        assert_eq!(c.holes(), r(6, 1));
    }

    #[test]
    fn bin_classes_examples() {
        let c = |l: &[u64]| {
            let b = cfg(l).bin_classes();
            (b.above, b.at, b.below)
        };
        assert_eq!(c(&[3, 2, 1]), (1, 1, 1));
        assert_eq!(c(&[2, 2, 2]), (0, 3, 0));
        assert_eq!(c(&[4, 2, 0]), (1, 1, 1));
    }

    #[test]
    fn potential_examples() {
        assert_eq!(cfg(&[3, 2, 1]).potential().unwrap(), 1);
        assert_eq!(cfg(&[2, 2, 2]).potential().unwrap(), 0);
        assert_eq!(cfg(&[4, 2, 0]).potential().unwrap(), 4);
        assert!(matches!(
            cfg(&[2, 1]).potential(),
            Err(Error::NonIntegralAverage { .. })
        ));
    }

    #[test]
    fn balance_predicates() {
        let c = cfg(&[4, 3, 3, 2]);
        assert!(c.is_x_balanced(1.0));
        assert!(!c.is_perfectly_balanced());
        assert!(cfg(&[2, 2, 2]).is_perfectly_balanced());
        assert!(cfg(&[2, 2, 1, 1]).is_perfectly_balanced());
        assert!(!cfg(&[3, 2, 1, 0]).is_perfectly_balanced());
    }

    #[test]
    fn rejects_empty() {
        assert!(Configuration::new(vec![]).is_err());
        assert!(Configuration::all_in_one(0, 3).is_err());
    }

    #[test]
    fn shift_rejects_empty_source() {
        let mut c = cfg(&[0, 2]);
        assert!(matches!(c.shift(0, 1), Err(Error::EmptySource(0))));
        assert!(c.shift(1, 5).is_err());
    }

    fn all_configurations(n: usize, m: u64) -> Vec<Vec<u64>> {
        if n == 1 {
            return vec![vec![m]];
        }
        let mut out = Vec::new();
        for first in 0..=m {
            for mut rest in all_configurations(n - 1, m - first) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
        out
    }

    #[test]
    fn perfect_balance_equivalence_brute_force() {
        for n in 1..=4 {
            for m in 0..=8 {
                for loads in all_configurations(n, m) {
                    let c = Configuration::new(loads).unwrap();
                    let (lo, hi) = (c.min_load(), c.max_load());
                    let floor = m / n as u64;
                    let ceil = m.div_ceil(n as u64);
                    let by_extremes = hi - lo <= 1 && hi == ceil && lo == floor;
                    assert_eq!(c.is_perfectly_balanced(), by_extremes, "{c}");
                    assert_eq!(c.discrepancy() < Ratio::from_integer(1), by_extremes);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn metric_identities(loads in prop::collection::vec(0u64..50, 1..12)) {
            let c = Configuration::new(loads.clone()).unwrap();
            prop_assert_eq!(c.m(), loads.iter().sum::<u64>());
            let k = c.bin_classes();
            prop_assert_eq!(k.above + k.at + k.below, c.n());
            let avg = c.average_load();
            let hi = Ratio::from_integer(c.max_load() as i64) - avg;
            let lo = avg - Ratio::from_integer(c.min_load() as i64);
            prop_assert_eq!(c.discrepancy(), hi.max(lo));
            // The overloaded mass always equals the hole mass.
            prop_assert_eq!(c.overloaded_balls(), c.holes());
        }

        #[test]
        fn potential_within_range(avg in 0u64..10, devs in prop::collection::vec(-3i64..=3, 1..10)) {
            let n = devs.len();
            // Rebalance the deviations so they sum to zero and stay non-negative.
            let mut loads: Vec<i64> = devs.iter().map(|d| avg as i64 + 3 + d).collect();
            let total: i64 = loads.iter().sum();
            let target = (avg as i64 + 3) * n as i64;
            let mut diff = total - target;
            let mut i = 0;
            while diff != 0 {
                if diff > 0 && loads[i % n] > 0 { loads[i % n] -= 1; diff -= 1; }
                else if diff < 0 { loads[i % n] += 1; diff += 1; }
                i += 1;
            }
            let c = Configuration::new(loads.iter().map(|&l| l as u64).collect()).unwrap();
            let p = c.potential().unwrap();
            let a = c.overloaded_balls().to_integer() as usize;
            let k = c.bin_classes();
            prop_assert!(a >= k.above.max(k.below));
            prop_assert!(p >= 0);
            // Bounded by 3n once at most n balls are overloaded.
            if a <= n {
                prop_assert!(p <= 3 * n as i64);
            }
        }
    }
}
