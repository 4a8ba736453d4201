//! Forward-Euler integration of the ascending process.
//!
//! This is a reference solver kept deliberately separate from the engine: it
//! never uses the closed-form evolution, only the raw differential rules
//! `dx_i/dp = S/p`, `dB_i/dp = -S` for clinchers, and its own copy of the
//! exit procedure. Accuracy is first order in `h`.
//!
//! With `k` clinchers the price advances by `h min(1, (p / k)^2)` per step.
//! The step never exceeds `h`; below `p = k` it shrinks so that the local
//! error of the remnant, which scales with `(k dp / p)^2`, stays even where
//! clinching starts at a low price and `S/p` is steep.

#![allow(clippy::needless_range_loop)]

use thiserror::Error;

use crate::instance::{Outcome, ValidatedInstance};

/// Clinchers whose slack exceeds `DROP_FACTOR * h * s` leave the clinching
/// set. Euler drift in the slack is bounded by `h * s`.
const DROP_FACTOR: f64 = 10.0;

/// Membership changes allowed per player per inter-value interval.
const MAX_FLIPS: u32 = 2;

const SUPPLY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("integration needs at least two bidders with positive value and budget")]
    TooFewBidders,
    #[error("clinching set oscillates for player {player} near p = {price}; reduce the step")]
    StepTooLarge { player: usize, price: f64 },
}

struct Market<'a> {
    values: &'a [f64],
    h: f64,
    drop_tol: f64,
    p: f64,
    x: Vec<f64>,
    b: Vec<f64>,
    s: f64,
    active: Vec<bool>,
    clinch: Vec<bool>,
}

impl Market<'_> {
    fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.x.len()).filter(|&i| self.active[i])
    }

    fn budget_sum(&self) -> f64 {
        self.members().map(|i| self.b[i]).sum()
    }

    fn join_tol(&self) -> f64 {
        1e-9 * self.budget_sum().max(1.0)
    }

    /// Money slack of the clinching condition for `i`.
    fn slack(&self, total: f64, i: usize, p: f64, s: f64) -> f64 {
        total - self.b[i] - p * s
    }

    fn integrate_to(&mut self, level: f64) -> Result<(), OracleError> {
        let n = self.x.len();
        let mut flips = vec![0u32; n];
        while self.p < level {
            if self.s <= SUPPLY_FLOOR {
                self.p = level;
                break;
            }
            let k = self.members().filter(|&i| self.clinch[i]).count();
            let total = self.budget_sum();
            if k == 0 {
                // nothing moves; the slacks fall linearly at rate S
                let top = self.members().map(|i| self.b[i]).fold(0.0, f64::max);
                let p_enter = (total - top) / self.s;
                if p_enter >= level {
                    self.p = level;
                    break;
                }
                self.p = p_enter.max(self.p);
                let tol = self.join_tol();
                let entering: Vec<usize> = self
                    .members()
                    .filter(|&i| self.slack(total, i, self.p, self.s) <= tol)
                    .collect();
                for i in entering {
                    self.clinch[i] = true;
                    flips[i] += 1;
                }
                continue;
            }

            let full = level - self.p;
            let dp = (self.h * (self.p / k as f64).powi(2).min(1.0)).min(full);
            if k as f64 * dp >= self.p {
                return Err(OracleError::StepTooLarge {
                    player: self.members().find(|&i| self.clinch[i]).unwrap_or(0),
                    price: self.p,
                });
            }
            // slack of each waiting player at the end of a full step
            let rate = self.s / self.p;
            let total_end = total - k as f64 * self.s * dp;
            let s_end = self.s - k as f64 * rate * dp;
            let mut crossing: Vec<(usize, f64)> = Vec::new();
            for i in self.members().filter(|&i| !self.clinch[i]) {
                let now = self.slack(total, i, self.p, self.s);
                let end = total_end - self.b[i] - (self.p + dp) * s_end;
                if end < 0.0 {
                    let t = if now <= 0.0 { 0.0 } else { now / (now - end) };
                    crossing.push((i, t));
                }
            }
            let theta = crossing.iter().map(|c| c.1).fold(1.0, f64::min);
            let step = dp * theta;
            for i in 0..n {
                if self.active[i] && self.clinch[i] {
                    self.x[i] += rate * step;
                    self.b[i] -= self.s * step;
                }
            }
            self.s -= k as f64 * rate * step;
            self.p = if crossing.is_empty() && dp == full {
                level
            } else {
                self.p + step
            };
            for (i, t) in crossing {
                if t <= theta + 1e-9 {
                    self.clinch[i] = true;
                    flips[i] += 1;
                }
            }

            let total = self.budget_sum();
            for i in 0..n {
                if self.active[i] && self.clinch[i] && self.slack(total, i, self.p, self.s) > self.drop_tol {
                    self.clinch[i] = false;
                    flips[i] += 1;
                }
            }
            if let Some(i) = (0..n).find(|&i| flips[i] > MAX_FLIPS) {
                return Err(OracleError::StepTooLarge {
                    player: i,
                    price: self.p,
                });
            }
        }
        Ok(())
    }

    /// Price reaches `level`: bidders valued exactly there leave one by one
    /// (lowest index first). After each departure every remaining bidder
    /// clinches whatever the others can no longer afford.
    fn exit_at(&mut self, level: f64) {
        self.p = level;
        let n = self.x.len();
        let leaving: Vec<usize> = (0..n).filter(|&i| self.active[i] && self.values[i] == level).collect();
        for j in leaving {
            self.active[j] = false;
            self.clinch[j] = false;
            let total = self.budget_sum();
            let grabs: Vec<f64> = (0..n)
                .map(|k| {
                    if self.active[k] {
                        (self.s - (total - self.b[k]) / level).max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            for k in 0..n {
                self.x[k] += grabs[k];
                self.b[k] = (self.b[k] - level * grabs[k]).max(0.0);
            }
            self.s = (self.s - grabs.iter().sum::<f64>()).max(0.0);

            let total = self.budget_sum();
            let tol = self.join_tol();
            for k in 0..n {
                if !self.active[k] {
                    continue;
                }
                let slack = self.slack(total, k, level, self.s);
                self.clinch[k] = grabs[k] > 0.0 || slack <= tol || (self.clinch[k] && slack <= self.drop_tol);
            }
        }
    }
}

/// Terminal outcome by forward-Euler integration with relative step `h`.
pub fn solve_euler(inst: &ValidatedInstance, h: f64) -> Result<Outcome, OracleError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(OracleError::InvalidStep(h));
    }
    let n = inst.n();
    let supply = inst.supply();
    if supply == 0.0 {
        return Ok(Outcome::zero(n));
    }
    let values = inst.values();
    let budgets = inst.budgets();
    let eligible = (0..n).filter(|&i| values[i] > 0.0 && budgets[i] > 0.0).count();
    if eligible < 2 {
        return Err(OracleError::TooFewBidders);
    }

    let mut market = Market {
        values,
        h,
        drop_tol: DROP_FACTOR * h * supply + 1e-9 * supply.max(1.0),
        p: 0.0,
        x: vec![0.0; n],
        b: budgets.to_vec(),
        s: supply,
        active: values.iter().map(|&v| v > 0.0).collect(),
        clinch: vec![false; n],
    };
    let mut levels: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    for level in levels {
        if market.s <= SUPPLY_FLOOR {
            break;
        }
        market.integrate_to(level)?;
        market.exit_at(level);
    }
    Ok(Outcome {
        allocation: market.x,
        payments: budgets.iter().zip(&market.b).map(|(b0, b)| b0 - b).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::AuctionInstance;

    fn validated(v: &[f64], b: &[f64], s: f64) -> ValidatedInstance {
        AuctionInstance::new(v.to_vec(), b.to_vec(), s).validate().unwrap()
    }

    #[test]
    fn pure_exit_instance_is_exact() {
        for h in [1e-2, 1e-4] {
            let out = solve_euler(&validated(&[1.0, 2.0], &[3.0, 2.0], 1.0), h).unwrap();
            assert_eq!(out.allocation, vec![0.0, 1.0]);
            assert_eq!(out.payments, vec![0.0, 1.0]);
        }
    }

    #[test]
    fn zero_supply() {
        let out = solve_euler(&validated(&[1.0, 2.0], &[3.0, 2.0], 0.0), 0.1).unwrap();
        assert_eq!(out, Outcome::zero(2));
    }

    #[test]
    fn rejects_bad_step_and_lone_bidder() {
        let inst = validated(&[1.0, 2.0], &[3.0, 2.0], 1.0);
        assert_eq!(solve_euler(&inst, 0.0), Err(OracleError::InvalidStep(0.0)));
        assert_eq!(
            solve_euler(&validated(&[1.0, 2.0], &[0.0, 2.0], 1.0), 0.1),
            Err(OracleError::TooFewBidders)
        );
    }

    #[test]
    fn first_clinch_of_four_bidders() {
        // before anyone clinches nothing moves, so a coarse step is exact up
        // to the first entry at 3.5
        let inst = validated(&[9.0, 10.0, 11.0, 5.7], &[3.0, 2.0, 1.0, 0.5], 1.0);
        let out = solve_euler(&inst, 1e-3).unwrap();
        assert!((out.total_allocated() - 1.0).abs() < 1e-9);
    }
}
