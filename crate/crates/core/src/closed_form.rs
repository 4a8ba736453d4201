//! Explicit two-bidder solution and its marginal rates in the supply.
//!
//! The formulas are written for the bidder with the larger budget as "1"
//! (`B1 >= B2`); inputs are relabelled on the way in and out. With
//! `B1' = B2 exp(B1/B2 - 1)` and `v_min` the value of whichever bidder leaves
//! the active set first, six regimes cover the parameter space:
//!
//! | row | exit order | condition on `s v_min` |
//! |-----|------------|------------------------|
//! | 1 | 1 leaves first | `<= B2` |
//! | 2 | 1 leaves first | `(B2, B1']` |
//! | 3 | 1 leaves first | `> B1'` |
//! | 4 | 2 leaves first | `<= B2` |
//! | 5 | 2 leaves first | `(B2, B1']` |
//! | 6 | 2 leaves first | `> B1'` |
//!
//! Each condition is inclusive on its upper bound, so a boundary point
//! belongs to the lower-numbered row. The outcome is continuous across
//! boundaries, so this only affects the reported label.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{self, EngineError};
use crate::instance::{tolerance_band, AuctionInstance, InstanceError, Outcome, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosedFormError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("s * v_min = {supply_value} lies on the regime boundary {boundary}")]
    OnRegimeBoundary { supply_value: f64, boundary: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Small-budget bidder has the higher value and buys everything at the
    /// other's value.
    SmallBudgetVcg,
    /// Small budget exhausted; large-budget bidder clinches the rest.
    SmallBudgetDepleted,
    /// Both budgets bind and the supply is split.
    SmallBudgetSplit,
    /// Large-budget bidder has the higher value and buys everything at the
    /// other's value.
    LargeBudgetVcg,
    /// Large-budget bidder keeps winning at a discounted rate.
    LargeBudgetDiscounted,
    /// Large budget exhausted; supply is split.
    LargeBudgetSplit,
}

impl Regime {
    pub fn row(self) -> u8 {
        match self {
            Regime::SmallBudgetVcg => 1,
            Regime::SmallBudgetDepleted => 2,
            Regime::SmallBudgetSplit => 3,
            Regime::LargeBudgetVcg => 4,
            Regime::LargeBudgetDiscounted => 5,
            Regime::LargeBudgetSplit => 6,
        }
    }

    pub fn all() -> [Regime; 6] {
        [
            Regime::SmallBudgetVcg,
            Regime::SmallBudgetDepleted,
            Regime::SmallBudgetSplit,
            Regime::LargeBudgetVcg,
            Regime::LargeBudgetDiscounted,
            Regime::LargeBudgetSplit,
        ]
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row{}", self.row())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeLabel {
    pub regime: Regime,
    /// `B1' = exp(B1/B2 - 1 + ln B2)`; `+inf` when `B2 = 0`.
    pub b1_prime: f64,
    /// Input order was swapped so that bidder "1" has the larger budget.
    pub swapped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalRates {
    /// `d x / d s` per input player.
    pub allocation: [f64; 2],
    /// `d pi / d s` per input player.
    pub payments: [f64; 2],
    pub label: RegimeLabel,
}

/// Inputs relabelled so that bidder 1 holds the larger budget.
struct Relabelled {
    v1: f64,
    v2: f64,
    b1: f64,
    b2: f64,
    s: f64,
    swapped: bool,
    first_leaves_first: bool,
}

impl Relabelled {
    fn new(v: [f64; 2], b: [f64; 2], s: f64) -> Self {
        let swapped = b[0] < b[1];
        let (big, small) = if swapped { (1, 0) } else { (0, 1) };
        let (v1, v2) = (v[big], v[small]);
        // ties in value leave in index order
        let first_leaves_first = v1 < v2 || (v1 == v2 && big < small);
        Self {
            v1,
            v2,
            b1: b[big],
            b2: b[small],
            s,
            swapped,
            first_leaves_first,
        }
    }

    fn b1_prime(&self) -> f64 {
        if self.b2 > 0.0 {
            self.b2 * (self.b1 / self.b2 - 1.0).exp()
        } else {
            f64::INFINITY
        }
    }

    fn v_min(&self) -> f64 {
        if self.first_leaves_first {
            self.v1
        } else {
            self.v2
        }
    }

    fn label(&self) -> RegimeLabel {
        let b1p = self.b1_prime();
        let sv = self.s * self.v_min();
        let tier = if sv <= self.b2 {
            0
        } else if sv <= b1p {
            1
        } else {
            2
        };
        let regime = if self.first_leaves_first {
            [
                Regime::SmallBudgetVcg,
                Regime::SmallBudgetDepleted,
                Regime::SmallBudgetSplit,
            ][tier]
        } else {
            [
                Regime::LargeBudgetVcg,
                Regime::LargeBudgetDiscounted,
                Regime::LargeBudgetSplit,
            ][tier]
        };
        RegimeLabel {
            regime,
            b1_prime: b1p,
            swapped: self.swapped,
        }
    }

    fn unswap(&self, a: [f64; 2]) -> [f64; 2] {
        if self.swapped {
            [a[1], a[0]]
        } else {
            a
        }
    }
}

/// Outcome of the two-bidder auction from the explicit formulas.
pub fn solve_n2(v1: f64, v2: f64, b1: f64, b2: f64, s: f64) -> Result<(Outcome, RegimeLabel), ClosedFormError> {
    let inst = AuctionInstance::new(vec![v1, v2], vec![b1, b2], s).validate()?;
    let r = Relabelled::new([v1, v2], [b1, b2], s);
    let label = r.label();
    if r.b2 == 0.0 || (r.v1 == 0.0 && r.v2 == 0.0) {
        return Ok((engine::solve(&inst)?, label));
    }
    let (x, pi) = row_outcome(&r, label);
    Ok((
        Outcome {
            allocation: r.unswap(x).to_vec(),
            payments: r.unswap(pi).to_vec(),
        },
        label,
    ))
}

fn row_outcome(r: &Relabelled, label: RegimeLabel) -> ([f64; 2], [f64; 2]) {
    let Relabelled { v1, v2, b1, b2, s, .. } = *r;
    let b1p = label.b1_prime;
    match label.regime {
        Regime::SmallBudgetVcg => ([0.0, s], [0.0, s * v1]),
        Regime::SmallBudgetDepleted => {
            let q = b2 / v1;
            ([s - q, q], [b2 * ((s * v1).ln() - b2.ln()), b2])
        }
        Regime::SmallBudgetSplit => {
            let ratio = b1p / (s * v1);
            let q = s * b2 / (2.0 * b1p) * (1.0 + ratio * ratio);
            // ln B1' - ln B2 = B1/B2 - 1
            ([s - q, q], [b2 * (1.0 - ratio) + b2 * (b1 / b2 - 1.0), b2])
        }
        Regime::LargeBudgetVcg => ([s, 0.0], [s * v2, 0.0]),
        Regime::LargeBudgetDiscounted => ([s, 0.0], [b2 + b2 * ((s * v2).ln() - b2.ln()), 0.0]),
        Regime::LargeBudgetSplit => {
            let ratio = b1p / (s * v2);
            let q = s * b2 / (2.0 * b1p) * (1.0 - ratio * ratio);
            ([s - q, q], [b1, b2 - b2 * ratio])
        }
    }
}

/// Derivative of the two-bidder outcome with respect to the supply.
///
/// Only defined in the interior of a regime; points within tolerance of a
/// boundary fail with [`ClosedFormError::OnRegimeBoundary`].
pub fn marginal_rates_n2(v1: f64, v2: f64, b1: f64, b2: f64, s: f64) -> Result<MarginalRates, ClosedFormError> {
    AuctionInstance::new(vec![v1, v2], vec![b1, b2], s).validate()?;
    let r = Relabelled::new([v1, v2], [b1, b2], s);
    let label = r.label();
    let sv = s * r.v_min();
    for boundary in [r.b2, label.b1_prime] {
        if boundary.is_finite() && (sv - boundary).abs() <= tolerance_band(sv, boundary, DEFAULT_TOLERANCE) {
            return Err(ClosedFormError::OnRegimeBoundary {
                supply_value: sv,
                boundary,
            });
        }
    }
    let Relabelled { v1, v2, b2, .. } = r;
    let b1p = label.b1_prime;
    let (dx, dpi) = match label.regime {
        Regime::SmallBudgetVcg => ([0.0, 1.0], [0.0, v1]),
        Regime::SmallBudgetDepleted => ([1.0, 0.0], [b2 / s, 0.0]),
        Regime::SmallBudgetSplit => {
            let d2 = b2 / (2.0 * b1p) - b2 * b1p / (2.0 * v1 * v1 * s * s);
            ([1.0 - d2, d2], [b1p * b2 / (s * s * v1), 0.0])
        }
        Regime::LargeBudgetVcg => ([1.0, 0.0], [v2, 0.0]),
        Regime::LargeBudgetDiscounted => ([1.0, 0.0], [b2 / s, 0.0]),
        Regime::LargeBudgetSplit => {
            let d2 = b2 / (2.0 * b1p) + b2 * b1p / (2.0 * v2 * v2 * s * s);
            ([1.0 - d2, d2], [0.0, b1p * b2 / (s * s * v2)])
        }
    };
    Ok(MarginalRates {
        allocation: r.unswap(dx),
        payments: r.unswap(dpi),
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn row_one_example() {
        let (out, label) = solve_n2(1.0, 2.0, 3.0, 2.0, 1.0).unwrap();
        assert_eq!(label.regime, Regime::SmallBudgetVcg);
        assert_eq!(label.regime.to_string(), "row1");
        assert_eq!(out.allocation, vec![0.0, 1.0]);
        assert_eq!(out.payments, vec![0.0, 1.0]);
    }

    #[test]
    fn row_four_example() {
        let (out, label) = solve_n2(5.0, 2.0, 3.0, 2.0, 0.5).unwrap();
        assert_eq!(label.regime, Regime::LargeBudgetVcg);
        assert_eq!(out.allocation, vec![0.5, 0.0]);
        assert_eq!(out.payments, vec![1.0, 0.0]);
    }

    #[test]
    fn row_two_example() {
        let (out, label) = solve_n2(1.0, 2.0, 3.0, 1.0, 2.0).unwrap();
        assert_eq!(label.regime, Regime::SmallBudgetDepleted);
        assert!(close(&out.allocation, &[1.0, 1.0], 1e-15));
        assert!(close(&out.payments, &[2f64.ln(), 1.0], 1e-15));
    }

    #[test]
    fn b1_prime_value() {
        let (_, label) = solve_n2(1.0, 2.0, 3.0, 1.0, 2.0).unwrap();
        assert!((label.b1_prime - (2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_supply() {
        let (out, label) = solve_n2(1.0, 2.0, 3.0, 2.0, 0.0).unwrap();
        assert_eq!(out, Outcome::zero(2));
        assert_eq!(label.regime, Regime::SmallBudgetVcg);
        let (out, label) = solve_n2(3.0, 2.0, 3.0, 2.0, 0.0).unwrap();
        assert_eq!(out, Outcome::zero(2));
        assert_eq!(label.regime, Regime::LargeBudgetVcg);
    }

    #[test]
    fn relabels_when_first_budget_smaller() {
        let (a, la) = solve_n2(1.0, 2.0, 3.0, 1.0, 2.0).unwrap();
        let (b, lb) = solve_n2(2.0, 1.0, 1.0, 3.0, 2.0).unwrap();
        assert!(lb.swapped && !la.swapped);
        assert_eq!(la.regime, lb.regime);
        assert_eq!(a.allocation, vec![b.allocation[1], b.allocation[0]]);
        assert_eq!(a.payments, vec![b.payments[1], b.payments[0]]);
    }

    #[test]
    fn boundary_goes_to_lower_row() {
        // s v1 = B2 exactly
        let (_, label) = solve_n2(1.0, 2.0, 3.0, 2.0, 2.0).unwrap();
        assert_eq!(label.regime, Regime::SmallBudgetVcg);
    }

    #[test]
    fn equal_values_follow_index_exit_order() {
        // big budget first in input: it leaves first, rows 1-3
        let (out, label) = solve_n2(1.0, 1.0, 3.0, 2.0, 1.0).unwrap();
        assert_eq!(label.regime, Regime::SmallBudgetVcg);
        assert_eq!(out.allocation, vec![0.0, 1.0]);
        // big budget second in input: the small-budget bidder leaves first, rows 4-6
        let (out, label) = solve_n2(1.0, 1.0, 2.0, 3.0, 1.0).unwrap();
        assert_eq!(label.regime, Regime::LargeBudgetVcg);
        assert_eq!(out.allocation, vec![0.0, 1.0]);
        assert_eq!(out.payments, vec![0.0, 1.0]);
    }

    #[test]
    fn degenerate_small_budget_uses_engine() {
        let (out, label) = solve_n2(1.0, 2.0, 3.0, 0.0, 2.0).unwrap();
        assert_eq!(label.b1_prime, f64::INFINITY);
        assert_eq!(label.regime, Regime::SmallBudgetDepleted);
        assert_eq!(out.allocation, vec![2.0, 0.0]);
        assert_eq!(out.payments, vec![0.0, 0.0]);
    }

    #[test]
    fn vcg_regime_rates() {
        let r = marginal_rates_n2(1.0, 2.0, 3.0, 2.0, 1.0).unwrap();
        assert_eq!(r.allocation, [0.0, 1.0]);
        assert_eq!(r.payments, [0.0, 1.0]);
    }

    #[test]
    fn split_rates_sum_to_one() {
        let r = marginal_rates_n2(1.0, 2.0, 3.0, 1.0, 20.0).unwrap();
        assert_eq!(r.label.regime, Regime::SmallBudgetSplit);
        assert!((r.allocation[0] + r.allocation[1] - 1.0).abs() < 1e-15);
        let r = marginal_rates_n2(3.0, 2.0, 3.0, 1.0, 20.0).unwrap();
        assert_eq!(r.label.regime, Regime::LargeBudgetSplit);
        assert!((r.allocation[0] + r.allocation[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rates_on_boundary_rejected() {
        assert!(matches!(
            marginal_rates_n2(1.0, 2.0, 3.0, 2.0, 2.0),
            Err(ClosedFormError::OnRegimeBoundary { .. })
        ));
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(matches!(
            solve_n2(-1.0, 2.0, 3.0, 2.0, 1.0),
            Err(ClosedFormError::Instance(InstanceError::NegativeEntry { .. }))
        ));
    }
}
