//! Incremental supply: a state machine that accepts supply as it arrives and
//! emits the change in allocation and payments each time.
//!
//! Every increment re-solves at the new cumulative supply. The auction's
//! outcome is monotone in the supply, so the emitted deltas are never
//! negative; a negative delta beyond tolerance is reported as
//! [`StreamError::MonotonicityViolation`].

use serde::Serialize;
use thiserror::Error;

use crate::engine::{self, EngineConfig, EngineError};
use crate::instance::{tolerance_band, AuctionInstance, InstanceError, Outcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("supply increment must be positive and finite, got {0}")]
    NonPositiveIncrement(f64),
    #[error("{field}[{player}] decreased by {amount} when supply grew to {s_cum}")]
    MonotonicityViolation {
        field: &'static str,
        player: usize,
        amount: f64,
        s_cum: f64,
    },
}

/// Change emitted for one supply increment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaOutcome {
    pub delta_x: Vec<f64>,
    pub delta_pi: Vec<f64>,
    pub s_cum: f64,
}

#[derive(Debug, Clone)]
pub struct SupplyStream {
    values: Vec<f64>,
    budgets: Vec<f64>,
    config: EngineConfig,
    s_cum: f64,
    last: Outcome,
    log: Vec<DeltaOutcome>,
}

impl SupplyStream {
    pub fn new(values: Vec<f64>, budgets: Vec<f64>) -> Result<Self, StreamError> {
        Self::with_config(values, budgets, EngineConfig::default().quiet())
    }

    pub fn with_config(values: Vec<f64>, budgets: Vec<f64>, config: EngineConfig) -> Result<Self, StreamError> {
        let inst = AuctionInstance::new(values, budgets, 0.0).validate()?;
        let n = inst.n();
        let inst = inst.instance().clone();
        Ok(Self {
            values: inst.values,
            budgets: inst.budgets,
            config: config.quiet(),
            s_cum: 0.0,
            last: Outcome::zero(n),
            log: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn supply(&self) -> f64 {
        self.s_cum
    }

    /// Cumulative outcome at the current supply.
    pub fn outcome(&self) -> &Outcome {
        &self.last
    }

    /// Every delta emitted so far, in order.
    pub fn log(&self) -> &[DeltaOutcome] {
        &self.log
    }

    /// Accepts `ds` more units of supply and returns the change in outcome.
    /// On error the stream is left unchanged.
    pub fn on_supply(&mut self, ds: f64) -> Result<DeltaOutcome, StreamError> {
        if !(ds > 0.0 && ds.is_finite()) {
            return Err(StreamError::NonPositiveIncrement(ds));
        }
        let s_cum = self.s_cum + ds;
        let inst = AuctionInstance::new(self.values.clone(), self.budgets.clone(), s_cum).validate()?;
        let next = engine::solve_with(&inst, self.config)?;
        let tau = self.config.tolerance;
        let diff = |field: &'static str, new: &[f64], old: &[f64]| -> Result<Vec<f64>, StreamError> {
            new.iter()
                .zip(old)
                .enumerate()
                .map(|(player, (&a, &b))| {
                    let d = a - b;
                    let band = tolerance_band(a, b, tau);
                    if d < -band {
                        Err(StreamError::MonotonicityViolation {
                            field,
                            player,
                            amount: -d,
                            s_cum,
                        })
                    } else if d.abs() <= band {
                        Ok(0.0)
                    } else {
                        Ok(d)
                    }
                })
                .collect()
        };
        let delta_x = diff("x", &next.allocation, &self.last.allocation)?;
        let delta_pi = diff("pi", &next.payments, &self.last.payments)?;
        let delta = DeltaOutcome {
            delta_x,
            delta_pi,
            s_cum,
        };
        self.s_cum = s_cum;
        self.last = next;
        self.log.push(delta.clone());
        Ok(delta)
    }

    /// `u_i = v_i x_i - pi_i` at the current supply.
    pub fn utility_snapshot(&self) -> Vec<f64> {
        self.last.utilities(&self.values)
    }
}
