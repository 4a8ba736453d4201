//! VCG reference auctions: multi-unit, polymatroid and capped demand.
//!
//! A polymatroid environment is described by a monotone submodular set
//! function `f` on players: an allocation is feasible if `sum_{i in S} x_i <=
//! f(S)` for every subset `S`. Sorting players by value (descending, ties by
//! index) and writing `[i]` for the first `i` of them, VCG allocates greedily,
//! `x_i = f([i]) - f([i-1])`, and charges each player the welfare its presence
//! removes from the players after it:
//!
//! `pi_i = sum_{j > i} v_j (f([j] \ i) - f([j-1] \ i) - x_j)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{tolerance_band, Outcome, DEFAULT_TOLERANCE};

/// Subset of players as a bit mask (bit `i` = player `i`).
pub type PlayerSet = u64;

/// Largest player count a set function may have.
pub const MAX_PLAYERS: usize = 63;

/// Largest player count checked exhaustively for submodularity.
pub const EXHAUSTIVE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VcgError {
    #[error("set function is not monotone: f({superset:#b}) = {high} < f({subset:#b}) = {low}")]
    OracleViolation {
        subset: PlayerSet,
        superset: PlayerSet,
        low: f64,
        high: f64,
    },
    #[error("set function is not submodular at S = {set:#b} with players {i} and {j}")]
    NotSubmodular { set: PlayerSet, i: usize, j: usize },
    #[error("f(empty set) = {0}, expected 0")]
    NonZeroEmpty(f64),
    #[error("{0} values for a set function over {1} players")]
    LengthMismatch(usize, usize),
    #[error("at most {MAX_PLAYERS} players are supported, got {0}")]
    TooManyPlayers(usize),
    #[error("table must have 2^n = {expected} entries, got {got}")]
    BadTable { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}

/// Capacity of every subset of players.
pub trait SetFunction: Sync {
    fn n(&self) -> usize;
    fn eval(&self, set: PlayerSet) -> f64;
}

impl<F: SetFunction + ?Sized> SetFunction for &F {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn eval(&self, set: PlayerSet) -> f64 {
        (**self).eval(set)
    }
}

/// Explicit table indexed by the subset mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableFunction {
    n: usize,
    table: Vec<f64>,
}

impl TableFunction {
    pub fn new(n: usize, table: Vec<f64>) -> Result<Self, VcgError> {
        if n > EXHAUSTIVE_LIMIT {
            return Err(VcgError::TooManyPlayers(n));
        }
        if table.len() != 1 << n {
            return Err(VcgError::BadTable {
                expected: 1 << n,
                got: table.len(),
            });
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(VcgError::InvalidInput("table entries must be finite"));
        }
        Ok(Self { n, table })
    }

    /// Tabulates any set function.
    pub fn from_fn(f: &impl SetFunction) -> Result<Self, VcgError> {
        let n = f.n();
        if n > EXHAUSTIVE_LIMIT {
            return Err(VcgError::TooManyPlayers(n));
        }
        Ok(Self {
            n,
            table: (0..1u64 << n).map(|s| f.eval(s)).collect(),
        })
    }
}

impl SetFunction for TableFunction {
    fn n(&self) -> usize {
        self.n
    }
    fn eval(&self, set: PlayerSet) -> f64 {
        self.table[set as usize]
    }
}

/// Weighted coverage: player `i` covers the elements in `covers[i]` and
/// `f(S)` is the total weight of elements covered by `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageFunction {
    covers: Vec<u64>,
    weights: Vec<f64>,
}

impl CoverageFunction {
    pub fn new(covers: Vec<u64>, weights: Vec<f64>) -> Result<Self, VcgError> {
        if weights.len() > 64 {
            return Err(VcgError::InvalidInput("at most 64 ground elements"));
        }
        if covers.len() > MAX_PLAYERS {
            return Err(VcgError::TooManyPlayers(covers.len()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(VcgError::InvalidInput("weights must be finite and non-negative"));
        }
        let mask = if weights.len() == 64 {
            u64::MAX
        } else {
            (1u64 << weights.len()) - 1
        };
        if covers.iter().any(|c| c & !mask != 0) {
            return Err(VcgError::InvalidInput("cover refers to a missing element"));
        }
        Ok(Self { covers, weights })
    }

    /// Random coverage function over `elements` ground elements with weights
    /// in `(0, 1]`; each player covers each element with probability 1/3.
    pub fn random<R: Rng + ?Sized>(n: usize, elements: usize, rng: &mut R) -> Self {
        let weights: Vec<f64> = (0..elements).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let covers = (0..n)
            .map(|_| {
                (0..elements)
                    .filter(|_| rng.gen_bool(1.0 / 3.0))
                    .fold(0u64, |m, e| m | 1 << e)
            })
            .collect();
        Self { covers, weights }
    }
}

impl SetFunction for CoverageFunction {
    fn n(&self) -> usize {
        self.covers.len()
    }
    fn eval(&self, set: PlayerSet) -> f64 {
        let covered = players(set).fold(0u64, |m, i| m | self.covers[i]);
        players(covered).map(|e| self.weights[e]).sum()
    }
}

/// Pure multi-unit supply: `f(S) = s` for every non-empty `S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiUnit {
    pub n: usize,
    pub supply: f64,
}

impl SetFunction for MultiUnit {
    fn n(&self) -> usize {
        self.n
    }
    fn eval(&self, set: PlayerSet) -> f64 {
        if set == 0 {
            0.0
        } else {
            self.supply
        }
    }
}

/// Supply `s` with per-player demand caps: `f(S) = min(s, sum_{i in S} C_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Capped {
    pub caps: Vec<f64>,
    pub supply: f64,
}

impl SetFunction for Capped {
    fn n(&self) -> usize {
        self.caps.len()
    }
    fn eval(&self, set: PlayerSet) -> f64 {
        let total: f64 = players(set).map(|i| self.caps[i]).sum();
        total.min(self.supply)
    }
}

/// Pointwise sum `f + g`, the rank function of the Minkowski sum of the two
/// polymatroids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sum<F, G>(pub F, pub G);

impl<F: SetFunction, G: SetFunction> SetFunction for Sum<F, G> {
    fn n(&self) -> usize {
        self.0.n()
    }
    fn eval(&self, set: PlayerSet) -> f64 {
        self.0.eval(set) + self.1.eval(set)
    }
}

/// Members of `set` in increasing order.
pub fn players(set: PlayerSet) -> impl Iterator<Item = usize> {
    let mut rest = set;
    std::iter::from_fn(move || {
        if rest == 0 {
            None
        } else {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(i)
        }
    })
}

/// Players sorted by value descending, ties by ascending index.
pub fn value_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

fn check_values(values: &[f64], n: usize) -> Result<(), VcgError> {
    if values.len() != n {
        return Err(VcgError::LengthMismatch(values.len(), n));
    }
    if n > MAX_PLAYERS {
        return Err(VcgError::TooManyPlayers(n));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(VcgError::InvalidInput("values must be finite and non-negative"));
    }
    Ok(())
}

fn monotone_step(f: &impl SetFunction, lo: PlayerSet, hi: PlayerSet) -> Result<(f64, f64), VcgError> {
    let (a, b) = (f.eval(lo), f.eval(hi));
    if b < a && a - b > tolerance_band(a, b, DEFAULT_TOLERANCE) {
        return Err(VcgError::OracleViolation {
            subset: lo,
            superset: hi,
            low: a,
            high: b,
        });
    }
    Ok((a, b))
}

/// VCG over the polymatroid defined by `f`.
///
/// Every marginal evaluated along the way is checked for monotonicity;
/// submodularity is not re-checked here (see [`check_submodular`]).
pub fn vcg_polymatroid(values: &[f64], f: &impl SetFunction) -> Result<Outcome, VcgError> {
    let n = f.n();
    check_values(values, n)?;
    let empty = f.eval(0);
    if empty.abs() > tolerance_band(empty, 0.0, DEFAULT_TOLERANCE) {
        return Err(VcgError::NonZeroEmpty(empty));
    }
    let order = value_order(values);
    let mut prefix = vec![0u64; n + 1];
    for (k, &i) in order.iter().enumerate() {
        prefix[k + 1] = prefix[k] | 1 << i;
    }
    let mut out = Outcome::zero(n);
    for k in 0..n {
        let (lo, hi) = monotone_step(f, prefix[k], prefix[k + 1])?;
        out.allocation[order[k]] = hi - lo;
    }
    for k in 0..n {
        let me = 1u64 << order[k];
        let mut pay = 0.0;
        for j in k + 1..n {
            let pj = order[j];
            let (lo, hi) = monotone_step(f, prefix[j] & !me, prefix[j + 1] & !me)?;
            pay += values[pj] * (hi - lo - out.allocation[pj]);
        }
        out.payments[order[k]] = pay;
    }
    Ok(out)
}

/// Second-price multi-unit VCG: all supply to the highest value (ties by
/// index) at the second-highest value per unit.
pub fn vcg_multiunit(values: &[f64], supply: f64) -> Result<Outcome, VcgError> {
    check_values(values, values.len())?;
    if !(supply.is_finite() && supply >= 0.0) {
        return Err(VcgError::InvalidInput("supply must be finite and non-negative"));
    }
    let mut out = Outcome::zero(values.len());
    let order = value_order(values);
    if let Some(&top) = order.first() {
        out.allocation[top] = supply;
        out.payments[top] = order.get(1).map_or(0.0, |&j| values[j]) * supply;
    }
    Ok(out)
}

/// VCG with per-player demand caps `C_i` (utility `v_i min(x_i, C_i) -
/// pi_i`), as the polymatroid `min(s, sum C)`.
pub fn vcg_capacity_demo(values: &[f64], caps: &[f64], supply: f64) -> Result<Outcome, VcgError> {
    if caps.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(VcgError::InvalidInput("caps must be finite and non-negative"));
    }
    if !(supply.is_finite() && supply >= 0.0) {
        return Err(VcgError::InvalidInput("supply must be finite and non-negative"));
    }
    vcg_polymatroid(
        values,
        &Capped {
            caps: caps.to_vec(),
            supply,
        },
    )
}

/// Two environments `f <= f'` (pointwise) where VCG gives the second player
/// less under the larger environment.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveOrderCounterexample {
    pub values: Vec<f64>,
    pub smaller: TableFunction,
    pub larger: TableFunction,
    pub outcome_smaller: Outcome,
    pub outcome_larger: Outcome,
}

pub fn naive_order_counterexample() -> NaiveOrderCounterexample {
    let values = vec![2.0, 1.0];
    let smaller = TableFunction::new(2, vec![0.0, 2.0, 2.0, 3.0]).expect("valid table");
    let larger = TableFunction::new(2, vec![0.0, 4.0, 4.0, 4.0]).expect("valid table");
    let outcome_smaller = vcg_polymatroid(&values, &smaller).expect("monotone");
    let outcome_larger = vcg_polymatroid(&values, &larger).expect("monotone");
    NaiveOrderCounterexample {
        values,
        smaller,
        larger,
        outcome_smaller,
        outcome_larger,
    }
}

/// Checks `f(empty) = 0`, monotonicity and submodularity. Exhaustive for
/// `n <= 12`; otherwise `samples` random checks drawn from `rng`.
pub fn check_submodular<R: Rng + ?Sized>(f: &impl SetFunction, samples: usize, rng: &mut R) -> Result<(), VcgError> {
    let n = f.n();
    if n > MAX_PLAYERS {
        return Err(VcgError::TooManyPlayers(n));
    }
    let empty = f.eval(0);
    if empty.abs() > tolerance_band(empty, 0.0, DEFAULT_TOLERANCE) {
        return Err(VcgError::NonZeroEmpty(empty));
    }
    let check = |set: PlayerSet, i: usize, j: usize| -> Result<(), VcgError> {
        let (bi, bj) = (1u64 << i, 1u64 << j);
        monotone_step(f, set, set | bi)?;
        monotone_step(f, set, set | bj)?;
        let lhs = f.eval(set | bi) + f.eval(set | bj);
        let rhs = f.eval(set | bi | bj) + f.eval(set);
        if lhs < rhs && rhs - lhs > tolerance_band(lhs, rhs, DEFAULT_TOLERANCE) {
            return Err(VcgError::NotSubmodular { set, i, j });
        }
        Ok(())
    };
    if n <= EXHAUSTIVE_LIMIT {
        for set in 0..1u64 << n {
            for i in (0..n).filter(|&i| set & 1 << i == 0) {
                monotone_step(f, set, set | 1 << i)?;
                for j in (i + 1..n).filter(|&j| set & 1 << j == 0) {
                    check(set, i, j)?;
                }
            }
        }
    } else {
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        for _ in 0..samples {
            let set = rng.gen::<u64>() & full;
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j || set & (1 << i | 1 << j) != 0 {
                continue;
            }
            check(set, i, j)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct MinLinear;
    impl SetFunction for MinLinear {
        fn n(&self) -> usize {
            2
        }
        fn eval(&self, set: PlayerSet) -> f64 {
            (2.0 * set.count_ones() as f64).min(3.0)
        }
    }

    #[test]
    fn polymatroid_formula_example() {
        let out = vcg_polymatroid(&[3.0, 1.0], &MinLinear).unwrap();
        assert_eq!(out.allocation, vec![2.0, 1.0]);
        assert_eq!(out.payments, vec![1.0, 0.0]);
    }

    #[test]
    fn multiunit_examples() {
        let out = vcg_multiunit(&[1.0, 2.0], 1.0).unwrap();
        assert_eq!(out.allocation, vec![0.0, 1.0]);
        assert_eq!(out.payments, vec![0.0, 1.0]);
        let out = vcg_multiunit(&[2.0], 3.0).unwrap();
        assert_eq!(out.allocation, vec![3.0]);
        assert_eq!(out.payments, vec![0.0]);
    }

    #[test]
    fn multiunit_matches_polymatroid() {
        let v = [0.5, 3.0, 3.0, 1.0];
        let a = vcg_multiunit(&v, 2.5).unwrap();
        let b = vcg_polymatroid(&v, &MultiUnit { n: 4, supply: 2.5 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn capacity_demo() {
        let out = vcg_capacity_demo(&[1.0, 2.0], &[1.0, 1.0], 1.0).unwrap();
        assert_eq!(out.allocation, vec![0.0, 1.0]);
        assert_eq!(out.payments, vec![0.0, 1.0]);
        let out = vcg_capacity_demo(&[1.0, 2.0], &[1.0, 1.0], 2.0).unwrap();
        assert_eq!(out.allocation, vec![1.0, 1.0]);
        assert_eq!(out.payments, vec![0.0, 0.0]);
        let out = vcg_capacity_demo(&[1.0, 2.0], &[1.0, 1.0], 0.0).unwrap();
        assert_eq!(out, Outcome::zero(2));
    }

    #[test]
    fn counterexample_fixture() {
        let c = naive_order_counterexample();
        assert_eq!(c.outcome_smaller.allocation, vec![2.0, 1.0]);
        assert_eq!(c.outcome_larger.allocation, vec![4.0, 0.0]);
    }

    #[test]
    fn non_monotone_oracle_rejected() {
        let t = TableFunction::new(2, vec![0.0, 2.0, 1.0, 1.5]).unwrap();
        assert!(matches!(
            vcg_polymatroid(&[2.0, 1.0], &t),
            Err(VcgError::OracleViolation { .. })
        ));
    }

    #[test]
    fn submodularity_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        check_submodular(&MinLinear, 0, &mut rng).unwrap();
        let sup = TableFunction::new(2, vec![0.0, 1.0, 1.0, 3.0]).unwrap();
        assert!(matches!(
            check_submodular(&sup, 0, &mut rng),
            Err(VcgError::NotSubmodular { .. })
        ));
        let cov = CoverageFunction::random(6, 10, &mut rng);
        check_submodular(&cov, 0, &mut rng).unwrap();
    }

    #[test]
    fn players_iterates_bits() {
        assert_eq!(players(0b1011).collect::<Vec<_>>(), vec![0, 1, 3]);
        assert_eq!(players(0).count(), 0);
    }

    #[test]
    fn table_size_checked() {
        assert!(matches!(
            TableFunction::new(2, vec![0.0; 3]),
            Err(VcgError::BadTable { expected: 4, got: 3 })
        ));
    }
}
