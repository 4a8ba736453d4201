//! Structural checks on an engine trace.
//!
//! At every recorded state (and a few interior prices per interval):
//!
//! - remnant supply equals initial supply minus everything allocated;
//! - the active set lies between `{v > p}` and `{v >= p}`;
//! - remaining supply never exceeds what the other active bidders can
//!   afford, `p S <= sum_{j in A \ i} B_j`;
//! - clinchers share the top remaining budget and every other active bidder
//!   still holds its starting budget, so `B_i = min(B_i(0), B_*)`;
//! - a bidder that starts clinching keeps clinching until it leaves;
//! - a bidder that picks up a positive amount at an exit joins the
//!   clinching set;
//! - allocations only grow, budgets only shrink;
//! - the wishful allocation `Psi_i = x_i + B_i / p` never increases, is
//!   continuous across exits and satisfies `Psi_i(q) - Psi_i(p) =
//!   -int_p^q B_i / r^2 dr`;
//! - total payments equal `int k S dp` over the continuous stretches plus
//!   the exit purchases.

use super::report::Check;
use crate::engine::{EventKind, EventTrace, PriceState};

/// Relative slack used by every invariant.
pub const INVARIANT_SLACK: f64 = 1e-8;

/// Interior prices sampled between consecutive trace points.
const INTERIOR_SAMPLES: usize = 3;

struct Checker<'a> {
    trace: &'a EventTrace,
    scale: f64,
    check: Check,
}

impl Checker<'_> {
    fn flag(&mut self, excess: f64, what: impl FnOnce() -> String) {
        let v = excess / self.scale;
        if v > 0.0 {
            self.check.observe(v, what);
        }
    }

    fn state(&mut self, st: &PriceState, label: &str) {
        let tr = self.trace;
        let p = st.price;
        let sold: f64 = st.allocation.iter().sum();
        self.flag((st.remnant - (tr.supply - sold)).abs(), || {
            format!(
                "{label} p = {p}: remnant {} but {} of {} sold",
                st.remnant, sold, tr.supply
            )
        });
        for (i, &v) in tr.values.iter().enumerate() {
            let active = st.is_active(i);
            if active && !(v >= p && v > 0.0) {
                self.flag(self.scale, || {
                    format!("{label} p = {p}: player {i} with value {v} still active")
                });
            }
            if !active && v > p {
                self.flag(self.scale, || {
                    format!("{label} p = {p}: player {i} with value {v} inactive")
                });
            }
        }
        if p > 0.0 {
            let total = st.active_budget_sum();
            for &i in &st.active {
                let others = total - st.budgets[i];
                self.flag(p * st.remnant - others, || {
                    format!(
                        "{label} p = {p}: supply {} exceeds what others of {i} afford",
                        st.remnant
                    )
                });
            }
        }
        {
            let top = st.max_budget();
            for &i in &st.active {
                let b = st.budgets[i];
                let b0 = tr.initial_budgets[i];
                self.flag((b - b0.min(top)).abs(), || {
                    format!("{label} p = {p}: budget of {i} is {b}, expected min({b0}, {top})")
                });
                if st.is_clinching(i) {
                    self.flag((top - b).abs(), || {
                        format!("{label} p = {p}: clincher {i} has budget {b} below the top {top}")
                    });
                }
            }
        }
    }

    fn step(&mut self, a: &PriceState, b: &PriceState) {
        let p = b.price;
        for i in 0..a.n() {
            self.flag(a.allocation[i] - b.allocation[i], || {
                format!(
                    "allocation of {i} falls from {} to {} at p = {p}",
                    a.allocation[i], b.allocation[i]
                )
            });
            self.flag(b.budgets[i] - a.budgets[i], || {
                format!(
                    "budget of {i} rises from {} to {} at p = {p}",
                    a.budgets[i], b.budgets[i]
                )
            });
            if a.is_clinching(i) && b.is_active(i) && !b.is_clinching(i) {
                self.flag(self.scale, || format!("player {i} stops clinching at p = {p}"));
            }
            if a.price > 0.0 && b.price > 0.0 {
                let pa = a.allocation[i] + a.budgets[i] / a.price;
                let pb = b.allocation[i] + b.budgets[i] / b.price;
                self.flag(pb - pa, || {
                    format!("wishful allocation of {i} rises from {pa} to {pb} at p = {p}")
                });
            }
        }
    }

    /// Compares the change in `Psi` over a continuous stretch with
    /// quadrature of its rate.
    fn interval(&mut self, a: &PriceState, b: &PriceState) {
        let (p, q) = (a.price, b.price);
        if !(q > p && p > 0.0) || a.active.is_empty() {
            return;
        }
        for i in 0..a.n() {
            let pa = a.allocation[i] + a.budgets[i] / p;
            let pb = b.allocation[i] + b.budgets[i] / q;
            let integral = integrate(self.trace, p, q, self.scale, &|st, r| st.budgets[i] / (r * r));
            self.flag(((pb - pa) + integral).abs(), || {
                format!(
                    "wishful allocation of {i} changes by {} on ({p}, {q}), expected {}",
                    pb - pa,
                    -integral
                )
            });
        }
    }
}

/// Integral of `g(state, price)` over `[p, q)` along the trace; the upper
/// end uses the left limit.
fn integrate(trace: &EventTrace, p: f64, q: f64, scale: f64, g: &dyn Fn(&PriceState, f64) -> f64) -> f64 {
    let f = |r: f64| {
        let st = if r >= q {
            trace.left_limit_at(q)
        } else {
            trace.state_at(r)
        };
        st.map_or(f64::NAN, |st| g(&st, r))
    };
    adaptive_simpson(&f, p, q, 1e-11 * scale, 30)
}

fn state_diff(a: &PriceState, b: &PriceState) -> f64 {
    let mut d = (a.remnant - b.remnant).abs();
    for i in 0..a.n() {
        d = d
            .max((a.allocation[i] - b.allocation[i]).abs())
            .max((a.budgets[i] - b.budgets[i]).abs());
    }
    d
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), eps, depth)
}

/// Worst relative violation of the trace invariants. Traces produced by the
/// degenerate rule (fewer than two bidders with value and budget) are not
/// checked.
pub fn check_trace_invariants(trace: &EventTrace) -> Check {
    if trace.meta.degenerate {
        return Check::clean();
    }
    let scale = trace.supply.max(trace.initial_budgets.iter().sum::<f64>()).max(1.0);
    let mut c = Checker {
        trace,
        scale,
        check: Check::clean(),
    };

    // right-continuous points with interior samples in between
    let mut points: Vec<PriceState> = vec![trace.initial.clone()];
    let mut last = trace.initial.clone();
    for ev in &trace.events {
        let left = if ev.price > last.price {
            for k in 1..=INTERIOR_SAMPLES {
                let r = last.price + (ev.price - last.price) * k as f64 / (INTERIOR_SAMPLES + 1) as f64;
                match trace.state_at(r) {
                    Ok(st) => points.push(st),
                    Err(e) => return Check::failed(e.to_string()),
                }
            }
            match trace.left_limit_at(ev.price) {
                Ok(left) => {
                    c.interval(&last, &left);
                    left
                }
                Err(e) => return Check::failed(e.to_string()),
            }
        } else {
            last.clone()
        };
        if let Some(before) = &ev.before {
            let d = state_diff(&left, before);
            c.flag(d, || {
                format!("recorded state before the event at {} differs by {d:e}", ev.price)
            });
            c.state(before, "before");
        }
        if ev.kind == EventKind::Exit {
            for i in 0..left.n() {
                let pa = left.allocation[i] + left.budgets[i] / ev.price;
                let pb = ev.after.allocation[i] + ev.after.budgets[i] / ev.price;
                c.flag((pa - pb).abs(), || {
                    format!(
                        "wishful allocation of {i} jumps from {pa} to {pb} at exit p = {}",
                        ev.price
                    )
                });
            }
            for (i, &d) in ev.clinched.iter().enumerate() {
                if d > 1e-12 * scale && !ev.after.is_clinching(i) {
                    c.flag(scale, || {
                        format!("player {i} clinched {d} at p = {} but is not clinching", ev.price)
                    });
                }
            }
            // exit purchases are paid at the exit price
            let paid: f64 = ev.clinched.iter().sum::<f64>() * ev.price;
            let spent = left.budgets.iter().sum::<f64>() - ev.after.budgets.iter().sum::<f64>();
            c.flag((paid - spent).abs(), || {
                format!("exit at {} charges {spent} for {paid}", ev.price)
            });
        }
        points.push(ev.after.clone());
        last = ev.after.clone();
    }
    for st in &points {
        c.state(st, "state");
    }
    for w in points.windows(2) {
        c.step(&w[0], &w[1]);
    }

    // money conservation over the whole run
    let total_paid: f64 = trace.outcome().payments.iter().sum();
    let exits: f64 = trace
        .events
        .iter()
        .map(|e| e.price * e.clinched.iter().sum::<f64>())
        .sum();
    let mut flow = 0.0;
    let mut prev = &trace.initial;
    for ev in &trace.events {
        if ev.price > prev.price && !prev.clinching.is_empty() {
            flow += integrate(trace, prev.price, ev.price, scale, &|st, _| {
                st.clinching.len() as f64 * st.remnant
            });
        }
        prev = &ev.after;
    }
    c.flag((total_paid - exits - flow).abs(), || {
        format!("payments {total_paid} but flow {flow} plus exit purchases {exits}")
    });
    c.check
}
