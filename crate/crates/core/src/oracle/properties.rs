//! Property checkers: truthfulness, individual rationality, budget
//! feasibility, Pareto optimality and monotonicity in the supply.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::corpus::CorpusSpec;
use super::euler::solve_euler;
use super::invariants::{adaptive_simpson, check_trace_invariants};
use super::report::{Check, PropertyReport};
use crate::engine::{self, EngineConfig, EventTrace};
use crate::instance::{AuctionInstance, Outcome, DEFAULT_TOLERANCE};

/// A mechanism under test.
pub type Solver<'a> = &'a (dyn Fn(&AuctionInstance) -> Result<Outcome, String> + Sync);

/// The engine with the default configuration.
pub fn engine_solver(inst: &AuctionInstance) -> Result<Outcome, String> {
    let v = inst.validate().map_err(|e| e.to_string())?;
    engine::solve(&v).map_err(|e| e.to_string())
}

fn engine_trace(inst: &AuctionInstance) -> Result<EventTrace, String> {
    let v = inst.validate().map_err(|e| e.to_string())?;
    engine::trace_with(&v, EngineConfig::default()).map_err(|e| e.to_string())
}

/// Largest gain from misreporting that still counts as truthful.
pub const IC_SLACK: f64 = 1e-6;
/// Error allowed between the Euler oracle at `h = 1e-4` and the engine.
pub const ORACLE_SLACK: f64 = 1e-3;
/// Step used by the oracle property.
pub const ORACLE_STEP: f64 = 1e-4;
/// Slack for comparing outcomes across supplies.
pub const MONOTONE_SLACK: f64 = 1e-8;
/// Error allowed in the payment identity and in tie limits.
pub const QUADRATURE_SLACK: f64 = 1e-4;

fn scaled(excess: f64, scale: f64) -> f64 {
    (excess / scale.abs().max(1.0)).max(0.0)
}

/// Misreports tried for every player: 50 evenly spaced points on
/// `[0, 2 max v]` plus every value and its neighbours at distance `tau`.
pub fn default_grid(inst: &AuctionInstance, tau: f64) -> Vec<f64> {
    let top = inst.values.iter().copied().fold(0.0, f64::max);
    let mut grid: Vec<f64> = (0..50).map(|k| 2.0 * top * k as f64 / 49.0).collect();
    for &v in &inst.values {
        let d = tau * v.max(1.0);
        grid.extend([v - d, v, v + d]);
    }
    grid.retain(|g| *g >= 0.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Largest utility gain any player gets from reporting a grid value instead
/// of the truth.
pub fn check_ic_with(inst: &AuctionInstance, grid: &[f64], solver: Solver) -> Check {
    let truth = match solver(inst) {
        Ok(o) => o,
        Err(e) => return Check::failed(e),
    };
    let mut check = Check::clean();
    for i in 0..inst.n() {
        let v = inst.values[i];
        let u = v * truth.allocation[i] - truth.payments[i];
        for &report in grid {
            match solver(&inst.with_value(i, report)) {
                Ok(o) => {
                    let gain = v * o.allocation[i] - o.payments[i] - u;
                    check.observe(gain, || format!("player {i} gains {gain:e} by reporting {report}"));
                }
                Err(e) => check.merge(Check::failed(e)),
            }
        }
    }
    check
}

pub fn check_ic(inst: &AuctionInstance) -> Check {
    check_ic_with(inst, &default_grid(inst, DEFAULT_TOLERANCE), &engine_solver)
}

/// Negative utility, relative to the player's gross value.
pub fn check_ir(inst: &AuctionInstance, out: &Outcome) -> Check {
    let mut check = Check::clean();
    for i in 0..inst.n() {
        let gross = inst.values[i] * out.allocation[i];
        let u = gross - out.payments[i];
        check.observe(scaled(-u, gross), || format!("player {i} has utility {u:e}"));
    }
    check
}

/// Payments above budget, relative to the budget.
pub fn check_budget(inst: &AuctionInstance, out: &Outcome) -> Check {
    let mut check = Check::clean();
    for i in 0..inst.n() {
        let (pi, b) = (out.payments[i], inst.budgets[i]);
        check.observe(scaled(pi - b, b), || format!("player {i} pays {pi} with budget {b}"));
    }
    check
}

/// The no-improving-trade conditions: all supply is sold, and whenever a
/// player holds goods, every player with a strictly higher value has spent
/// its whole budget.
pub fn pareto_characterization(inst: &AuctionInstance, out: &Outcome, tau: f64) -> Check {
    let mut check = Check::clean();
    let n = inst.n();
    let s = inst.supply;
    if n >= 2 && inst.values.iter().all(|&v| v > 0.0) {
        let sold = out.total_allocated();
        check.observe(scaled((s - sold).abs(), s), || format!("{sold} of {s} units sold"));
    }
    let held = tau * s.max(1.0);
    for j in (0..n).filter(|&j| out.allocation[j] > held) {
        for i in (0..n).filter(|&i| inst.values[i] > inst.values[j]) {
            let slack = inst.budgets[i] - out.payments[i];
            check.observe(scaled(slack, inst.budgets[i]), || {
                format!(
                    "player {i} (v = {}) has {slack:e} budget left while player {j} (v = {}) holds {}",
                    inst.values[i], inst.values[j], out.allocation[j]
                )
            });
        }
    }
    check
}

/// An alternative outcome that weakly improves every bidder and the
/// seller's revenue, with a strict gain for someone.
#[derive(Debug, Clone, PartialEq)]
pub struct Improvement {
    pub allocation: Vec<f64>,
    pub payments: Vec<f64>,
    /// Largest strict gain among bidders and seller.
    pub gain: f64,
}

/// Scale used for "strict" gains in the randomized search.
fn money_scale(inst: &AuctionInstance) -> f64 {
    let top = inst.values.iter().copied().fold(0.0, f64::max);
    (inst.supply * top).max(inst.budgets.iter().sum::<f64>()).max(1.0)
}

fn improvement(inst: &AuctionInstance, out: &Outcome, x: &[f64], pi: &[f64], strict: f64) -> Option<Improvement> {
    let eps = 1e-12;
    if x.iter().any(|&a| a < -eps) || x.iter().sum::<f64>() > inst.supply + eps {
        return None;
    }
    let mut best = pi.iter().sum::<f64>() - out.revenue();
    if best < -eps {
        return None;
    }
    for i in 0..inst.n() {
        if pi[i] > inst.budgets[i] + eps {
            return None;
        }
        let v = inst.values[i];
        let du = (v * x[i] - pi[i]) - (v * out.allocation[i] - out.payments[i]);
        if du < -eps {
            return None;
        }
        best = best.max(du);
    }
    (best > strict).then(|| Improvement {
        allocation: x.to_vec(),
        payments: pi.to_vec(),
        gain: best,
    })
}

/// Randomized search for a Pareto improvement: pairwise trades at a price
/// between the two values, sales of unsold supply, and random joint
/// perturbations. Payments may become negative (refunds); only budgets bind.
pub fn find_pareto_improvement<R: Rng + ?Sized>(
    inst: &AuctionInstance,
    out: &Outcome,
    tries: usize,
    rng: &mut R,
) -> Option<Improvement> {
    let n = inst.n();
    let strict = 10.0 * DEFAULT_TOLERANCE * money_scale(inst);
    let unsold = (inst.supply - out.total_allocated()).max(0.0);
    let holders: Vec<usize> = (0..n).filter(|&j| out.allocation[j] > 0.0).collect();
    for _ in 0..tries {
        let mut x = out.allocation.clone();
        let mut pi = out.payments.clone();
        match rng.gen_range(0..3) {
            0 if !holders.is_empty() && n >= 2 => {
                let j = holders[rng.gen_range(0..holders.len())];
                let i = (j + rng.gen_range(1..n)) % n;
                let (vi, vj) = (inst.values[i], inst.values[j]);
                if vi <= vj {
                    continue;
                }
                let r = vj + rng.gen::<f64>() * (vi - vj);
                let room = inst.budgets[i] - pi[i];
                let mut t = rng.gen::<f64>() * x[j];
                if r > 0.0 {
                    t = t.min(room.max(0.0) / r);
                }
                x[i] += t;
                x[j] -= t;
                pi[i] += r * t;
                pi[j] -= r * t;
            }
            1 if unsold > 0.0 => {
                let i = rng.gen_range(0..n);
                let r = rng.gen::<f64>() * inst.values[i];
                let mut t = rng.gen::<f64>() * unsold;
                if r > 0.0 {
                    t = t.min((inst.budgets[i] - pi[i]).max(0.0) / r);
                }
                x[i] += t;
                pi[i] += r * t;
            }
            _ => {
                let size = rng.gen::<f64>().powi(3);
                for k in 0..n {
                    let lo = -x[k];
                    let hi = x[k] + unsold;
                    let dx = size * (lo + rng.gen::<f64>() * (hi - lo));
                    let keep = rng.gen::<f64>() * 1e-3 * size;
                    x[k] += dx;
                    pi[k] += inst.values[k] * dx - keep * inst.values[k] * dx.abs();
                    if pi[k] > inst.budgets[k] {
                        pi[k] = inst.budgets[k];
                    }
                }
                let total: f64 = x.iter().sum();
                if total > inst.supply {
                    continue;
                }
            }
        }
        if let Some(imp) = improvement(inst, out, &x, &pi, strict) {
            return Some(imp);
        }
    }
    None
}

/// Characterization plus 1,000 random improvement attempts. A found
/// improvement is reported as a violation of its relative size, so the two
/// checks must agree for the instance to pass.
pub fn check_pareto(inst: &AuctionInstance, out: &Outcome, tau: f64, seed: u64) -> Check {
    let mut check = pareto_characterization(inst, out, tau);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(imp) = find_pareto_improvement(inst, out, 1000, &mut rng) {
        let g = imp.gain / money_scale(inst);
        check.observe(g.max(2.0 * tau), || {
            format!(
                "improvement x = {:?}, pi = {:?} gains {:e}",
                imp.allocation, imp.payments, imp.gain
            )
        });
    }
    check
}

/// Compares outcomes at each supply pair `s <= s'` (allocation, payment and
/// utility must not fall) and the wishful allocation and remaining budgets
/// at every event price of both runs.
pub fn check_supply_monotonicity(values: &[f64], budgets: &[f64], pairs: &[(f64, f64)]) -> Check {
    let mut check = Check::clean();
    for &(s, s2) in pairs {
        let base = AuctionInstance::new(values.to_vec(), budgets.to_vec(), s);
        let aug = base.with_supply(s2);
        let (tb, ta) = match (engine_trace(&base), engine_trace(&aug)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return Check::failed(e),
        };
        let (ob, oa) = (tb.outcome(), ta.outcome());
        let (ub, ua) = (ob.utilities(values), oa.utilities(values));
        for i in 0..values.len() {
            for (what, lo, hi) in [
                ("x", ob.allocation[i], oa.allocation[i]),
                ("pi", ob.payments[i], oa.payments[i]),
                ("u", ub[i], ua[i]),
            ] {
                check.observe(scaled(lo - hi, lo.abs().max(hi.abs())), || {
                    format!("{what}[{i}] falls from {lo} to {hi} as supply grows {s} -> {s2}")
                });
            }
        }
        if tb.meta.degenerate || ta.meta.degenerate {
            continue;
        }
        let prices = tb.points().chain(ta.points()).map(|st| st.price).filter(|&p| p > 0.0);
        for p in prices {
            let (sb, sa) = match (tb.state_at(p), ta.state_at(p)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return Check::failed(e.to_string()),
            };
            for i in 0..values.len() {
                let psi_b = sb.allocation[i] + sb.budgets[i] / p;
                let psi_a = sa.allocation[i] + sa.budgets[i] / p;
                check.observe(scaled(psi_b - psi_a, psi_a.abs().max(psi_b.abs())), || {
                    format!("wishful allocation of {i} at p = {p}: {psi_b} (s = {s}) > {psi_a} (s = {s2})")
                });
                let (bb, ba) = (sb.budgets[i], sa.budgets[i]);
                check.observe(scaled(ba - bb, ba.abs().max(bb.abs())), || {
                    format!("budget of {i} at p = {p}: {ba} (s = {s2}) > {bb} (s = {s})")
                });
            }
        }
    }
    check
}

/// Supply pairs used by the corpus monotonicity property.
pub fn supply_pairs(s: f64) -> Vec<(f64, f64)> {
    let levels = [0.25 * s, 0.5 * s, s, 1.5 * s];
    let mut out = Vec::new();
    for a in 0..levels.len() {
        for b in a..levels.len() {
            out.push((levels[a], levels[b]));
        }
    }
    out
}

/// Componentwise distance between the Euler oracle at step `h` and the
/// engine.
pub fn check_oracle(inst: &AuctionInstance, h: f64) -> Check {
    let v = match inst.validate() {
        Ok(v) => v,
        Err(e) => return Check::failed(e.to_string()),
    };
    match (solve_euler(&v, h), engine::solve(&v)) {
        (Ok(a), Ok(b)) => {
            let mut c = Check::clean();
            let d = a.max_abs_diff(&b);
            c.observe(d, || format!("euler {a:?} vs engine {b:?}"));
            c
        }
        (Err(e), _) => Check::failed(e.to_string()),
        (_, Err(e)) => Check::failed(e.to_string()),
    }
}

/// Payment identity `pi_i = v_i x_i - int_0^{v_i} x_i(u) du`. The integral
/// uses adaptive Simpson quadrature on pieces split at the other players'
/// values, where `x_i` may jump; inside a piece it can still be steep.
pub fn check_myerson(inst: &AuctionInstance) -> Check {
    let truth = match engine_solver(inst) {
        Ok(o) => o,
        Err(e) => return Check::failed(e),
    };
    let mut check = Check::clean();
    for i in 0..inst.n() {
        let vi = inst.values[i];
        let mut cuts: Vec<f64> = inst
            .values
            .iter()
            .copied()
            .filter(|&v| v > 0.0 && v < vi)
            .chain([0.0, vi])
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let x = |u: f64| engine_solver(&inst.with_value(i, u)).map_or(f64::NAN, |o| o.allocation[i]);
        let eps = 1e-9 * inst.supply.max(1.0);
        let mut integral = 0.0;
        for w in cuts.windows(2) {
            let nudge = 1e-9 * (w[1] - w[0]);
            integral += adaptive_simpson(&x, w[0] + nudge, w[1] - nudge, eps, 40);
        }
        if integral.is_nan() {
            return Check::failed(format!("solver failed while integrating the allocation of {i}"));
        }
        let expected = vi * truth.allocation[i] - integral;
        let diff = (expected - truth.payments[i]).abs();
        check.observe(diff, || {
            format!(
                "player {i} pays {} but the payment identity gives {expected}",
                truth.payments[i]
            )
        });
    }
    check
}

/// For instances with repeated values: the outcome must match the limit of
/// instances where each tie is split so that the lower index has the lower
/// value. Compares against gaps of 1e-6 and 1e-9.
pub fn check_tie_limit(inst: &AuctionInstance) -> Check {
    let v = match inst.validate() {
        Ok(v) => v,
        Err(e) => return Check::failed(e.to_string()),
    };
    if !v.has_repeated_values() {
        return Check::clean();
    }
    let tied = match engine::solve(&v) {
        Ok(o) => o,
        Err(e) => return Check::failed(e.to_string()),
    };
    let mut check = Check::clean();
    for gap in [1e-6, 1e-9] {
        let mut perturbed = inst.clone();
        for group in v.tie_groups() {
            for (rank, &i) in group.iter().enumerate() {
                perturbed.values[i] += rank as f64 * gap;
            }
        }
        match engine_solver(&perturbed) {
            Ok(o) => {
                let d = o.max_abs_diff(&tied);
                check.observe(d, || format!("gap {gap:e}: perturbed outcome differs by {d:e}"));
            }
            Err(e) => check.merge(Check::failed(e)),
        }
    }
    check
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Ic,
    Ir,
    Budget,
    Pareto,
    Monotone,
    Oracle,
    Invariants,
}

impl Property {
    pub fn all() -> [Property; 7] {
        use Property::*;
        [Ic, Ir, Budget, Pareto, Monotone, Oracle, Invariants]
    }

    pub fn name(self) -> &'static str {
        match self {
            Property::Ic => "ic",
            Property::Ir => "ir",
            Property::Budget => "budget",
            Property::Pareto => "pareto",
            Property::Monotone => "monotone",
            Property::Oracle => "oracle",
            Property::Invariants => "invariants",
        }
    }

    /// Largest violation that still passes.
    pub fn threshold(self, tau: f64) -> f64 {
        match self {
            Property::Ic => IC_SLACK,
            Property::Ir | Property::Budget | Property::Pareto => tau,
            Property::Monotone | Property::Invariants => MONOTONE_SLACK,
            Property::Oracle => ORACLE_SLACK,
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Property::all()
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown property {s:?}"))
    }
}

/// Checks one property on a single instance.
pub fn check_instance(property: Property, inst: &AuctionInstance, tau: f64, seed: u64) -> Check {
    let outcome = || engine_solver(inst);
    match property {
        Property::Ic => check_ic(inst),
        Property::Ir => outcome().map_or_else(Check::failed, |o| check_ir(inst, &o)),
        Property::Budget => outcome().map_or_else(Check::failed, |o| check_budget(inst, &o)),
        Property::Pareto => outcome().map_or_else(Check::failed, |o| check_pareto(inst, &o, tau, seed)),
        Property::Monotone => check_supply_monotonicity(&inst.values, &inst.budgets, &supply_pairs(inst.supply)),
        Property::Oracle => check_oracle(inst, ORACLE_STEP),
        Property::Invariants => engine_trace(inst).map_or_else(Check::failed, |t| check_trace_invariants(&t)),
    }
}

/// Runs `property` over a list of instances in parallel; results are merged
/// in index order.
pub fn run_on(property: Property, instances: &[AuctionInstance], corpus: &str, tau: f64, seed: u64) -> PropertyReport {
    let checks: Vec<Check> = instances
        .par_iter()
        .enumerate()
        .map(|(k, inst)| check_instance(property, inst, tau, seed.wrapping_add(k as u64)))
        .collect();
    PropertyReport::from_checks(property.name(), corpus, property.threshold(tau), instances, checks)
}

/// Runs `property` over the corpus described by `spec`.
pub fn run_property(property: Property, spec: &CorpusSpec, tau: f64) -> PropertyReport {
    let instances = spec.generate();
    run_on(property, &instances, &spec.to_string(), tau, spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_bidders() -> AuctionInstance {
        AuctionInstance::new(vec![9.0, 10.0, 11.0, 5.7], vec![3.0, 2.0, 1.0, 0.5], 1.0)
    }

    #[test]
    fn grid_contains_values_and_neighbours() {
        let g = default_grid(&four_bidders(), 1e-9);
        assert!(g.contains(&0.0) && g.contains(&22.0) && g.contains(&5.7));
        assert!(g.iter().any(|&x| x > 5.7 && x - 5.7 < 1e-8));
        assert!(g.len() >= 50);
    }

    #[test]
    fn slack_budget_with_low_value_holder_fails() {
        let inst = AuctionInstance::new(vec![2.0, 1.0], vec![10.0, 10.0], 1.0);
        let out = Outcome {
            allocation: vec![0.0, 1.0],
            payments: vec![0.0, 0.0],
        };
        let c = check_pareto(&inst, &out, 1e-9, 1);
        assert!(c.violation > 1e-9);
        assert!(c.detail.unwrap().contains("budget left"));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(find_pareto_improvement(&inst, &out, 1000, &mut rng).is_some());
    }

    #[test]
    fn unsold_supply_fails() {
        let inst = AuctionInstance::new(vec![2.0, 1.0], vec![1.0, 1.0], 2.0);
        let out = Outcome {
            allocation: vec![0.5, 0.5],
            payments: vec![1.0, 0.5],
        };
        assert!(pareto_characterization(&inst, &out, 1e-9).violation > 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(find_pareto_improvement(&inst, &out, 1000, &mut rng).is_some());
    }

    #[test]
    fn property_names_round_trip() {
        for p in Property::all() {
            assert_eq!(p.name().parse::<Property>().unwrap(), p);
        }
        assert!("speed".parse::<Property>().is_err());
    }
}
