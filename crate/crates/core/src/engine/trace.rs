use serde::Serialize;

use super::{AuctionProcess, EngineConfig, EngineError, PriceState};
use crate::instance::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    /// One or more players join the clinching set.
    ClinchEntry,
    /// The price reaches a player's value and the player leaves the active set.
    Exit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub kind: EventKind,
    pub price: f64,
    /// Entering players for `ClinchEntry`, the single exiting player for `Exit`.
    pub players: Vec<usize>,
    /// Discrete amounts clinched at this event (all zero for entries).
    pub clinched: Vec<f64>,
    /// Left limit at the event price; recorded when the engine runs verbose.
    pub before: Option<PriceState>,
    pub after: PriceState,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceMeta {
    /// Outcome produced by a rule outside the differential process (fewer than
    /// two bidders with positive value and budget).
    pub degenerate: bool,
    /// Supply left unsold when the loop stopped.
    pub discarded_supply: f64,
    pub note: Option<String>,
}

/// Full price trajectory of one run: initial state, events in price order and
/// the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub values: Vec<f64>,
    pub initial_budgets: Vec<f64>,
    pub supply: f64,
    pub config: EngineConfig,
    pub initial: PriceState,
    pub events: Vec<TraceEvent>,
    pub final_state: PriceState,
    pub meta: TraceMeta,
}

impl EventTrace {
    pub fn outcome(&self) -> Outcome {
        Outcome {
            allocation: self.final_state.allocation.clone(),
            payments: self.final_state.payments(&self.initial_budgets),
        }
    }

    /// Every recorded right-continuous state: the initial state followed by
    /// each event's post-state.
    pub fn points(&self) -> impl Iterator<Item = &PriceState> {
        std::iter::once(&self.initial).chain(self.events.iter().map(|e| &e.after))
    }

    fn process(&self) -> AuctionProcess<'_> {
        AuctionProcess::new(&self.values, &self.initial_budgets, self.config)
    }

    /// State at price `p` (right-continuous), reconstructed from the closest
    /// recorded point at or below `p` with the closed-form evolution.
    pub fn state_at(&self, p: f64) -> Result<PriceState, EngineError> {
        let base = self.points().filter(|st| st.price <= p).last().unwrap_or(&self.initial);
        self.extend(base, p)
    }

    /// Left limit at price `p`.
    pub fn left_limit_at(&self, p: f64) -> Result<PriceState, EngineError> {
        let base = self.points().filter(|st| st.price < p).last().unwrap_or(&self.initial);
        let mut st = self.extend(base, p)?;
        st.left_limit = true;
        Ok(st)
    }

    fn extend(&self, base: &PriceState, p: f64) -> Result<PriceState, EngineError> {
        if self.meta.degenerate || base.active.is_empty() || p <= base.price {
            let mut st = base.clone();
            st.price = p.max(base.price);
            return Ok(st);
        }
        let mut st = self.process().evolve_unchecked(base, p);
        st.left_limit = false;
        Ok(st)
    }

    /// JSON-lines rendering: one object per event with the change since the
    /// previous trace point and the post-event state.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        let mut prev = &self.initial;
        for ev in &self.events {
            let delta_x: Vec<f64> = ev
                .after
                .allocation
                .iter()
                .zip(&prev.allocation)
                .map(|(a, b)| a - b)
                .collect();
            let delta_pi: Vec<f64> = prev.budgets.iter().zip(&ev.after.budgets).map(|(a, b)| a - b).collect();
            let line = TraceLine {
                kind: ev.kind,
                price: ev.price,
                players: &ev.players,
                delta_x,
                delta_pi,
                state_after: &ev.after,
            };
            out.push_str(&crate::json::to_string(&line));
            out.push('\n');
            prev = &ev.after;
        }
        out
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    kind: EventKind,
    price: f64,
    players: &'a [usize],
    delta_x: Vec<f64>,
    delta_pi: Vec<f64>,
    state_after: &'a PriceState,
}
