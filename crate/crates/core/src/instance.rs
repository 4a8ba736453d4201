//! Auction inputs, outcomes and validation.
//!
//! All money and supply comparisons in the crate go through [`approx_eq`]:
//! a relative tolerance scaled by `max(1, |a|, |b|)` with an absolute floor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used for money/supply equality tests.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Absolute floor applied under every scaled tolerance.
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

/// Tolerance band for comparing quantities of magnitude `a` and `b`.
#[inline]
pub fn tolerance_band(a: f64, b: f64, tau: f64) -> f64 {
    (tau * 1f64.max(a.abs()).max(b.abs())).max(ABSOLUTE_FLOOR)
}

/// `|a - b| <= tau * max(1, |a|, |b|)`, never tighter than [`ABSOLUTE_FLOOR`].
#[inline]
pub fn approx_eq(a: f64, b: f64, tau: f64) -> bool {
    (a - b).abs() <= tolerance_band(a, b, tau)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("instance has no players")]
    EmptyInstance,
    #[error("values has length {values} but budgets has length {budgets}")]
    LengthMismatch { values: usize, budgets: usize },
    #[error("{field}[{index}] is not finite")]
    NonFinite { field: &'static str, index: usize },
    #[error("{field}[{index}] = {value} is negative")]
    NegativeEntry {
        field: &'static str,
        index: usize,
        value: f64,
    },
    #[error("player {player} pays {payment} which exceeds budget {budget}")]
    BudgetExceeded { player: usize, payment: f64, budget: f64 },
    #[error("player index {player} out of range for {n} players")]
    PlayerOutOfRange { player: usize, n: usize },
}

/// Immutable problem input: per-unit values, budgets and total supply.
///
/// Serialized as `{"values": [...], "budgets": [...], "supply": s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionInstance {
    pub values: Vec<f64>,
    pub budgets: Vec<f64>,
    pub supply: f64,
}

impl AuctionInstance {
    pub fn new(values: Vec<f64>, budgets: Vec<f64>, supply: f64) -> Self {
        Self {
            values,
            budgets,
            supply,
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<ValidatedInstance, InstanceError> {
        validate_instance(self)
    }

    /// Same bidders with a different supply.
    pub fn with_supply(&self, supply: f64) -> Self {
        Self { supply, ..self.clone() }
    }

    /// Same instance with bidder `player` reporting `value` instead.
    pub fn with_value(&self, player: usize, value: f64) -> Self {
        let mut values = self.values.clone();
        values[player] = value;
        Self { values, ..self.clone() }
    }
}

/// A validated instance plus derived ordering metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedInstance {
    instance: AuctionInstance,
    exit_order: Vec<usize>,
    tie_groups: Vec<Vec<usize>>,
}

impl ValidatedInstance {
    pub fn instance(&self) -> &AuctionInstance {
        &self.instance
    }

    pub fn values(&self) -> &[f64] {
        &self.instance.values
    }

    pub fn budgets(&self) -> &[f64] {
        &self.instance.budgets
    }

    pub fn supply(&self) -> f64 {
        self.instance.supply
    }

    pub fn n(&self) -> usize {
        self.instance.n()
    }

    /// Player indices sorted by ascending value, ties by ascending index.
    /// This is the order in which bidders leave the active set.
    pub fn exit_order(&self) -> &[usize] {
        &self.exit_order
    }

    /// Groups (size >= 2) of players whose values are bit-identical.
    pub fn tie_groups(&self) -> &[Vec<usize>] {
        &self.tie_groups
    }

    pub fn has_repeated_values(&self) -> bool {
        !self.tie_groups.is_empty()
    }
}

/// Checks the instance and derives exit order and repeated-value groups.
///
/// Repeated values are detected by exact equality of the represented numbers;
/// near-equal values are distinct.
pub fn validate_instance(inst: &AuctionInstance) -> Result<ValidatedInstance, InstanceError> {
    if inst.values.is_empty() && inst.budgets.is_empty() {
        return Err(InstanceError::EmptyInstance);
    }
    if inst.values.len() != inst.budgets.len() {
        return Err(InstanceError::LengthMismatch {
            values: inst.values.len(),
            budgets: inst.budgets.len(),
        });
    }
    let check = |field: &'static str, index: usize, value: f64| {
        if !value.is_finite() {
            Err(InstanceError::NonFinite { field, index })
        } else if value < 0.0 {
            Err(InstanceError::NegativeEntry { field, index, value })
        } else {
            Ok(())
        }
    };
    for (i, &v) in inst.values.iter().enumerate() {
        check("values", i, v)?;
    }
    for (i, &b) in inst.budgets.iter().enumerate() {
        check("budgets", i, b)?;
    }
    check("supply", 0, inst.supply)?;

    // -0.0 and 0.0 compare equal but are different bit patterns; normalise.
    let mut instance = inst.clone();
    for v in instance.values.iter_mut().chain(instance.budgets.iter_mut()) {
        if *v == 0.0 {
            *v = 0.0;
        }
    }
    if instance.supply == 0.0 {
        instance.supply = 0.0;
    }

    let mut exit_order: Vec<usize> = (0..instance.n()).collect();
    exit_order.sort_by(|&a, &b| instance.values[a].total_cmp(&instance.values[b]).then(a.cmp(&b)));

    let mut tie_groups = Vec::new();
    let mut start = 0;
    while start < exit_order.len() {
        let v = instance.values[exit_order[start]];
        let mut end = start + 1;
        while end < exit_order.len() && instance.values[exit_order[end]].to_bits() == v.to_bits() {
            end += 1;
        }
        if end - start > 1 {
            tie_groups.push(exit_order[start..end].to_vec());
        }
        start = end;
    }

    Ok(ValidatedInstance {
        instance,
        exit_order,
        tie_groups,
    })
}

/// Final allocation (units) and payments (money) per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    #[serde(rename = "x")]
    pub allocation: Vec<f64>,
    #[serde(rename = "pi")]
    pub payments: Vec<f64>,
}

impl Outcome {
    pub fn zero(n: usize) -> Self {
        Self {
            allocation: vec![0.0; n],
            payments: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.allocation.len()
    }

    pub fn total_allocated(&self) -> f64 {
        self.allocation.iter().sum()
    }

    pub fn revenue(&self) -> f64 {
        self.payments.iter().sum()
    }

    /// Quasi-linear utilities `v_i x_i - pi_i` ignoring budgets.
    pub fn utilities(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(&self.allocation)
            .zip(&self.payments)
            .map(|((v, x), p)| v * x - p)
            .collect()
    }

    /// Componentwise maximum absolute difference in allocations and payments.
    pub fn max_abs_diff(&self, other: &Outcome) -> f64 {
        self.allocation
            .iter()
            .zip(&other.allocation)
            .chain(self.payments.iter().zip(&other.payments))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// True when every component agrees under [`approx_eq`] with tolerance `tau`.
    pub fn approx_eq(&self, other: &Outcome, tau: f64) -> bool {
        self.n() == other.n()
            && self
                .allocation
                .iter()
                .zip(&other.allocation)
                .chain(self.payments.iter().zip(&other.payments))
                .all(|(a, b)| approx_eq(*a, *b, tau))
    }
}

/// Budget-constrained utility `v_i x_i - pi_i`.
///
/// An over-budget payment is the `-inf` branch of the utility; it is
/// reported as [`InstanceError::BudgetExceeded`] instead of returned.
pub fn utility(inst: &AuctionInstance, outcome: &Outcome, i: usize) -> Result<f64, InstanceError> {
    let n = inst.n();
    if i >= n || i >= outcome.n() {
        return Err(InstanceError::PlayerOutOfRange { player: i, n });
    }
    let (payment, budget) = (outcome.payments[i], inst.budgets[i]);
    if payment > budget + tolerance_band(payment, budget, DEFAULT_TOLERANCE) {
        return Err(InstanceError::BudgetExceeded {
            player: i,
            payment,
            budget,
        });
    }
    Ok(inst.values[i] * outcome.allocation[i] - payment)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_bidders_is_valid_without_ties() {
        let inst = AuctionInstance::new(vec![9.0, 10.0, 11.0, 5.7], vec![3.0, 2.0, 1.0, 0.5], 1.0);
        let v = validate_instance(&inst).unwrap();
        assert!(!v.has_repeated_values());
        assert_eq!(v.exit_order(), &[3, 0, 1, 2]);
    }

    #[test]
    fn repeated_values_grouped() {
        let inst = AuctionInstance::new(vec![1.0, 1.0], vec![1.0, 1.0], 1.0);
        let v = validate_instance(&inst).unwrap();
        assert_eq!(v.tie_groups(), &[vec![0, 1]]);
    }

    #[test]
    fn near_equal_values_are_distinct() {
        let inst = AuctionInstance::new(vec![1.0, 1.0 + f64::EPSILON], vec![1.0, 1.0], 1.0);
        assert!(!validate_instance(&inst).unwrap().has_repeated_values());
    }

    #[test]
    fn rejects_bad_input() {
        let neg = AuctionInstance::new(vec![1.0, -2.0], vec![1.0, 1.0], 1.0);
        assert!(matches!(
            validate_instance(&neg),
            Err(InstanceError::NegativeEntry {
                field: "values",
                index: 1,
                ..
            })
        ));
        let nan = AuctionInstance::new(vec![1.0, 2.0], vec![f64::NAN, 1.0], 1.0);
        assert!(matches!(
            validate_instance(&nan),
            Err(InstanceError::NonFinite {
                field: "budgets",
                index: 0
            })
        ));
        let len = AuctionInstance::new(vec![1.0, 2.0], vec![1.0], 1.0);
        assert!(matches!(
            validate_instance(&len),
            Err(InstanceError::LengthMismatch { values: 2, budgets: 1 })
        ));
        let empty = AuctionInstance::new(vec![], vec![], 1.0);
        assert_eq!(validate_instance(&empty), Err(InstanceError::EmptyInstance));
        let inf_supply = AuctionInstance::new(vec![1.0], vec![1.0], f64::INFINITY);
        assert!(matches!(
            validate_instance(&inf_supply),
            Err(InstanceError::NonFinite { field: "supply", .. })
        ));
    }

    #[test]
    fn validation_is_idempotent() {
        let inst = AuctionInstance::new(vec![3.0, 1.0, 3.0, -0.0], vec![1.0, 2.0, 0.5, 1.0], 2.0);
        let once = validate_instance(&inst).unwrap();
        let twice = validate_instance(once.instance()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn utility_examples() {
        let inst = AuctionInstance::new(vec![2.0, 1.0], vec![5.0, 2.0], 1.0);
        let out = Outcome {
            allocation: vec![1.0, 0.5],
            payments: vec![1.0, 1.0],
        };
        assert_eq!(utility(&inst, &out, 0).unwrap(), 1.0);
        assert_eq!(utility(&inst, &out, 1).unwrap(), -0.5);
        assert_eq!(utility(&inst, &Outcome::zero(2), 0).unwrap(), 0.0);
    }

    #[test]
    fn utility_signals_budget_violation() {
        let inst = AuctionInstance::new(vec![2.0], vec![1.0], 1.0);
        let out = Outcome {
            allocation: vec![1.0],
            payments: vec![1.5],
        };
        assert!(matches!(
            utility(&inst, &out, 0),
            Err(InstanceError::BudgetExceeded { player: 0, .. })
        ));
        assert!(matches!(
            utility(&inst, &out, 3),
            Err(InstanceError::PlayerOutOfRange { player: 3, n: 1 })
        ));
    }

    #[test]
    fn instance_json_schema() {
        let inst: AuctionInstance =
            serde_json::from_str(r#"{"values":[9,10,11,5.7],"budgets":[3,2,1,0.5],"supply":1}"#).unwrap();
        assert_eq!(inst.values[3], 5.7);
        assert_eq!(inst.supply, 1.0);
    }
}
