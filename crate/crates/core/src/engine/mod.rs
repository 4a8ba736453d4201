//! Event-driven computation of the adaptive clinching auction.
//!
//! The price clock rises from zero. Between events the clinching set `C` and
//! active set `A` are fixed and the trajectory has a closed form: with
//! `k = |C|` clinchers the remnant supply decays as `S(p') = S(p) (p/p')^k`,
//! the clinched supply is split evenly among them and each clincher's budget
//! falls by the same amount. Two kinds of event interrupt this:
//!
//! - **clinch entry**: a non-clinching active player's clinching condition
//!   `S = sum_{j in A \ i} B_j / p` starts to bind (equivalently the
//!   clinchers' common budget has fallen to that player's budget);
//! - **exit**: the price reaches the smallest active value. Bidders with that
//!   value leave one at a time in index order and after each removal every
//!   remaining active player `k` clinches
//!   `delta_k = [S - sum_{l in A \ k} B_l / v]^+` at price `v`.
//!
//! There are at most `n` events of each kind, so [`solve`] runs in
//! `O(n^2)` arithmetic with no numerical integration.

mod state;
mod trace;

pub use state::PriceState;
pub use trace::{EventKind, EventTrace, TraceEvent, TraceMeta};

use thiserror::Error;

use crate::instance::{tolerance_band, Outcome, ValidatedInstance, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("event search did not advance the price: at p = {price}, next event at {next}")]
    NumericalDivergence { price: f64, next: f64 },
    #[error("clinching condition of player {player} crossed inside an interval ending at {price}")]
    EventSkipped { player: usize, price: f64 },
    #[error("no active players")]
    NoActivePlayers,
    #[error("remaining budget of player {player} became negative ({budget}) at p = {price}")]
    NegativeBudget { player: usize, budget: f64, price: f64 },
    #[error("wishful allocation is undefined at zero price")]
    ZeroPrice,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Relative tolerance for money/supply equalities.
    pub tolerance: f64,
    /// Remnant supply at or below this is treated as exhausted.
    pub supply_floor: f64,
    /// Keep the left-limit state of every event in the trace.
    pub record_states: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            supply_floor: 1e-12,
            record_states: true,
        }
    }
}

impl EngineConfig {
    pub fn new(tolerance: f64, supply_floor: f64) -> Result<Self, EngineError> {
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(EngineError::InvalidConfig("tolerance must be positive"));
        }
        if !(supply_floor > 0.0 && supply_floor.is_finite()) {
            return Err(EngineError::InvalidConfig("supply floor must be positive"));
        }
        Ok(Self {
            tolerance,
            supply_floor,
            record_states: true,
        })
    }

    pub fn quiet(self) -> Self {
        Self {
            record_states: false,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NextEvent {
    pub price: f64,
    pub kind: EventKind,
}

/// One removal inside an exit step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitSubstep {
    pub player: usize,
    pub clinched: Vec<f64>,
    pub after: PriceState,
}

/// Outcome of the auction with the default configuration.
pub fn solve(inst: &ValidatedInstance) -> Result<Outcome, EngineError> {
    solve_with(inst, EngineConfig::default().quiet())
}

pub fn solve_with(inst: &ValidatedInstance, config: EngineConfig) -> Result<Outcome, EngineError> {
    Ok(trace_with(inst, config.quiet())?.outcome())
}

/// Full event trace with the default configuration.
pub fn trace(inst: &ValidatedInstance) -> Result<EventTrace, EngineError> {
    trace_with(inst, EngineConfig::default())
}

pub fn trace_with(inst: &ValidatedInstance, config: EngineConfig) -> Result<EventTrace, EngineError> {
    AuctionProcess::new(inst.values(), inst.budgets(), config).run(inst.supply())
}

/// The ascending process for fixed values and starting budgets.
#[derive(Debug, Clone, Copy)]
pub struct AuctionProcess<'a> {
    values: &'a [f64],
    initial_budgets: &'a [f64],
    config: EngineConfig,
}

impl<'a> AuctionProcess<'a> {
    pub fn new(values: &'a [f64], initial_budgets: &'a [f64], config: EngineConfig) -> Self {
        Self {
            values,
            initial_budgets,
            config,
        }
    }

    fn band(&self, a: f64, b: f64) -> f64 {
        tolerance_band(a, b, self.config.tolerance)
    }

    /// Tolerance on clinching gaps. The gap moves at rate `-S` in the price,
    /// so a price tie within `band(p, p)` shifts it by up to `S band(p, p)`.
    fn gap_band(&self, st: &PriceState) -> f64 {
        self.band(st.active_budget_sum(), st.price * st.remnant)
            .max(st.remnant * self.band(st.price, st.price))
    }

    /// Price and kind of the next event after `st`.
    ///
    /// Entry and exit prices that agree within tolerance resolve to the exit;
    /// the exit step re-derives clinching membership from left limits.
    pub fn next_event(&self, st: &PriceState) -> Result<NextEvent, EngineError> {
        let v_next = st.active.iter().map(|&i| self.values[i]).fold(f64::INFINITY, f64::min);
        if !v_next.is_finite() {
            return Err(EngineError::NoActivePlayers);
        }
        let mut entry = self.entry_price(st);
        if entry < st.price {
            if st.price - entry > self.band(entry, st.price) {
                return Err(EngineError::NumericalDivergence {
                    price: st.price,
                    next: entry,
                });
            }
            entry = st.price;
        }
        if entry < v_next && (v_next - entry) > self.band(entry, v_next) {
            Ok(NextEvent {
                price: entry,
                kind: EventKind::ClinchEntry,
            })
        } else {
            Ok(NextEvent {
                price: v_next,
                kind: EventKind::Exit,
            })
        }
    }

    /// Price at which the next non-clinching active player would start to
    /// clinch if no exit intervened; `+inf` if that never happens.
    fn entry_price(&self, st: &PriceState) -> f64 {
        let outside = st
            .non_clinching()
            .map(|i| st.budgets[i])
            .fold(None, |m: Option<f64>, b| Some(m.map_or(b, |m| m.max(b))));
        let Some(m) = outside else {
            return f64::INFINITY;
        };
        if st.remnant <= 0.0 {
            return f64::INFINITY;
        }
        let k = st.clinching.len();
        if k == 0 {
            return (st.active_budget_sum() - st.max_budget()) / st.remnant;
        }
        let lead = st.max_budget();
        let gap = (lead - m).max(0.0);
        let flow = st.price * st.remnant;
        if k == 1 {
            // B_*(p') = B_* - p S ln(p'/p)
            let log_ratio = gap / flow;
            let log_price = st.price.ln() + log_ratio;
            if log_price >= f64::MAX.ln() {
                f64::INFINITY
            } else {
                st.price * log_ratio.exp()
            }
        } else {
            // B_*(p') = B_* - p S / (k-1) * (1 - (p/p')^(k-1))
            let km1 = (k - 1) as f64;
            let d = 1.0 - km1 * gap / flow;
            if d <= 0.0 {
                f64::INFINITY
            } else {
                let log_ratio = -d.ln() / km1;
                if st.price.ln() + log_ratio >= f64::MAX.ln() {
                    f64::INFINITY
                } else {
                    st.price * log_ratio.exp()
                }
            }
        }
    }

    /// Closed-form evolution from `st` to `p_new` with `A` and `C` held fixed.
    /// Fails with [`EngineError::EventSkipped`] if a non-clincher's clinching
    /// condition was crossed on the way.
    pub fn evolve(&self, st: &PriceState, p_new: f64) -> Result<PriceState, EngineError> {
        let out = self.evolve_unchecked(st, p_new);
        let band = self.gap_band(&out);
        for i in out.non_clinching() {
            if out.clinch_gap(i) < -band {
                return Err(EngineError::EventSkipped {
                    player: i,
                    price: p_new,
                });
            }
        }
        Ok(out)
    }

    pub(crate) fn evolve_unchecked(&self, st: &PriceState, p_new: f64) -> PriceState {
        let mut out = st.clone();
        out.left_limit = false;
        if p_new <= st.price {
            return out;
        }
        out.price = p_new;
        let k = st.clinching.len();
        if k == 0 || st.remnant <= 0.0 {
            return out;
        }
        let ratio = st.price / p_new;
        let kf = k as f64;
        let new_remnant = st.remnant * ratio.powi(k as i32);
        let each = (st.remnant - new_remnant) / kf;
        let flow = st.price * st.remnant;
        let spent = if k == 1 {
            flow * (p_new / st.price).ln()
        } else {
            flow / (kf - 1.0) * (1.0 - ratio.powi(k as i32 - 1))
        };
        for &i in &st.clinching {
            out.allocation[i] += each;
            out.budgets[i] -= spent;
        }
        out.remnant = new_remnant;
        out
    }

    /// Applies the discrete exit step at `value` to the left-limit state
    /// `left`, removing every active player with exactly this value in index
    /// order and letting the others clinch after each removal.
    pub fn exit_step(&self, left: &PriceState, value: f64) -> Result<Vec<ExitSubstep>, EngineError> {
        let leaving: Vec<usize> = left
            .active
            .iter()
            .copied()
            .filter(|&i| self.values[i].to_bits() == value.to_bits())
            .collect();
        // an entry tied with this exit may have been overshot by up to the
        // gap band; the resulting budget deficit is clamped, not an error
        let slack = self.gap_band(left);
        let mut st = left.clone();
        st.price = value;
        st.left_limit = false;
        let mut steps = Vec::with_capacity(leaving.len());
        for j in leaving {
            st.active.retain(|&i| i != j);
            st.clinching.retain(|&i| i != j);
            let total: f64 = st.active_budget_sum();
            let mut clinched = vec![0.0; st.n()];
            for &k in &st.active {
                let others = (total - st.budgets[k]) / value;
                clinched[k] = (st.remnant - others).max(0.0);
            }
            let mut sold: f64 = clinched.iter().sum();
            if sold > st.remnant {
                // same overshoot as above; never sell more than is left
                let scale = st.remnant / sold;
                clinched.iter_mut().for_each(|d| *d *= scale);
                sold = st.remnant;
            }
            for &k in &st.active {
                let d = clinched[k];
                if d == 0.0 {
                    continue;
                }
                st.allocation[k] += d;
                let b = st.budgets[k] - value * d;
                if b < 0.0 {
                    if -b > self.band(st.budgets[k], value * d).max(slack) {
                        return Err(EngineError::NegativeBudget {
                            player: k,
                            budget: b,
                            price: value,
                        });
                    }
                    st.budgets[k] = 0.0;
                } else {
                    st.budgets[k] = b;
                }
            }
            st.remnant -= sold;
            if st.remnant < 0.0 {
                st.remnant = 0.0;
            }
            self.refresh_clinching(&mut st, &clinched);
            steps.push(ExitSubstep {
                player: j,
                clinched,
                after: st.clone(),
            });
        }
        Ok(steps)
    }

    /// Clinching membership after an exit: previous clinchers that are still
    /// active stay, anyone who clinched a positive amount joins, and so does
    /// any player whose clinching condition holds within tolerance.
    fn refresh_clinching(&self, st: &mut PriceState, clinched: &[f64]) {
        let band = self.gap_band(st);
        let mut c: Vec<usize> = st
            .active
            .iter()
            .copied()
            .filter(|&i| {
                st.is_clinching(i) || clinched[i] > self.band(clinched[i], st.remnant) || st.clinch_gap(i) <= band
            })
            .collect();
        c.sort_unstable();
        st.clinching = c;
    }

    /// Runs the process for supply `supply` and records the trace.
    pub fn run(&self, supply: f64) -> Result<EventTrace, EngineError> {
        let n = self.values.len();
        let initial = PriceState::initial(self.values, self.initial_budgets, supply);
        let mut trace = EventTrace {
            values: self.values.to_vec(),
            initial_budgets: self.initial_budgets.to_vec(),
            supply,
            config: self.config,
            initial: initial.clone(),
            events: Vec::new(),
            final_state: initial.clone(),
            meta: TraceMeta::default(),
        };
        if supply <= 0.0 {
            return Ok(trace);
        }

        let effective: Vec<usize> = (0..n)
            .filter(|&i| self.values[i] > 0.0 && self.initial_budgets[i] > 0.0)
            .collect();
        if effective.len() < 2 {
            self.degenerate(&mut trace, &effective);
            return Ok(trace);
        }

        let mut st = initial;
        let max_events = 4 * n + 8;
        while !st.active.is_empty() && st.remnant > self.config.supply_floor {
            if trace.events.len() > max_events {
                return Err(EngineError::NumericalDivergence {
                    price: st.price,
                    next: st.price,
                });
            }
            let ev = self.next_event(&st)?;
            let mut left = self.evolve(&st, ev.price)?;
            left.left_limit = true;
            match ev.kind {
                EventKind::ClinchEntry => {
                    let mut after = left.clone();
                    after.left_limit = false;
                    let entrants = self.entrants(&after);
                    after.clinching.extend(&entrants);
                    after.clinching.sort_unstable();
                    trace.events.push(TraceEvent {
                        kind: EventKind::ClinchEntry,
                        price: ev.price,
                        players: entrants,
                        clinched: vec![0.0; n],
                        before: self.config.record_states.then(|| left.clone()),
                        after: after.clone(),
                    });
                    st = after;
                }
                EventKind::Exit => {
                    let steps = self.exit_step(&left, ev.price)?;
                    let mut before = left;
                    for step in steps {
                        trace.events.push(TraceEvent {
                            kind: EventKind::Exit,
                            price: ev.price,
                            players: vec![step.player],
                            clinched: step.clinched,
                            before: self.config.record_states.then(|| before.clone()),
                            after: step.after.clone(),
                        });
                        before = step.after;
                    }
                    st = before;
                    st.left_limit = false;
                }
            }
        }
        trace.meta.discarded_supply = st.remnant.max(0.0);
        trace.final_state = st;
        Ok(trace)
    }

    /// Non-clinching active players whose budget has reached the clinchers'
    /// level (or the top budget when nobody clinches yet). The top candidate
    /// is always included so an entry event always makes progress.
    fn entrants(&self, st: &PriceState) -> Vec<usize> {
        let lead = if st.clinching.is_empty() {
            st.max_budget()
        } else {
            st.clinching.iter().map(|&i| st.budgets[i]).fold(0.0, f64::max)
        };
        let mut best: Option<usize> = None;
        let mut out = Vec::new();
        for i in st.non_clinching() {
            let b = st.budgets[i];
            if best.is_none_or(|j| b > st.budgets[j]) {
                best = Some(i);
            }
            if lead - b <= self.band(lead, b) {
                out.push(i);
            }
        }
        if out.is_empty() {
            out.extend(best);
        }
        out
    }

    /// Outcomes for fewer than two bidders with positive value and budget,
    /// where the clinching condition can never bind: a lone effective bidder
    /// takes all supply at price zero; with none, supply is split evenly among
    /// positive-value bidders, again at price zero.
    fn degenerate(&self, trace: &mut EventTrace, effective: &[usize]) {
        let supply = trace.supply;
        let mut st = trace.initial.clone();
        let receivers: Vec<usize> = if effective.len() == 1 {
            effective.to_vec()
        } else {
            st.active.clone()
        };
        trace.meta.degenerate = true;
        if receivers.is_empty() {
            trace.meta.discarded_supply = supply;
            trace.meta.note = Some("no bidder with positive value; supply discarded".into());
        } else {
            let share = supply / receivers.len() as f64;
            for &i in &receivers {
                st.allocation[i] = share;
            }
            st.remnant = 0.0;
            trace.meta.note = Some(if effective.len() == 1 {
                "single bidder with positive value and budget receives all supply at price zero".into()
            } else {
                "no bidder has positive budget; supply split evenly at price zero".into()
            });
        }
        trace.final_state = st;
    }
}
