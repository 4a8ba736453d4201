//! Seeded random instance corpora.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::closed_form::Regime;
use crate::instance::AuctionInstance;

/// Parameters of a random corpus. Values, budgets and supplies are drawn
/// uniformly from `(0, max]`; a fraction of instances has values rounded up
/// to a multiple of 0.5 so that ties occur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusSpec {
    pub size: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub v_max: f64,
    pub b_max: f64,
    pub s_max: f64,
    pub tie_fraction: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            size: 1000,
            n_min: 2,
            n_max: 8,
            v_max: 10.0,
            b_max: 5.0,
            s_max: 20.0,
            tie_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Uniform on `(0, max]`.
fn open_closed<R: Rng + ?Sized>(rng: &mut R, max: f64) -> f64 {
    max * (1.0 - rng.gen::<f64>())
}

impl CorpusSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_size(self, size: usize) -> Self {
        Self { size, ..self }
    }

    pub fn with_players(self, n_min: usize, n_max: usize) -> Self {
        Self { n_min, n_max, ..self }
    }

    pub fn generate(&self) -> Vec<AuctionInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.size).map(|_| self.sample(&mut rng)).collect()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AuctionInstance {
        let n = rng.gen_range(self.n_min..=self.n_max);
        let ties = rng.gen_bool(self.tie_fraction.clamp(0.0, 1.0));
        let values = (0..n)
            .map(|_| {
                let v = open_closed(rng, self.v_max);
                if ties {
                    ((v / 0.5).ceil() * 0.5).min(self.v_max.max(0.5))
                } else {
                    v
                }
            })
            .collect();
        let budgets = (0..n).map(|_| open_closed(rng, self.b_max)).collect();
        let supply = open_closed(rng, self.s_max);
        AuctionInstance::new(values, budgets, supply)
    }
}

impl fmt::Display for CorpusSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "size={},nmin={},nmax={},vmax={},bmax={},smax={},ties={},seed={}",
            self.size, self.n_min, self.n_max, self.v_max, self.b_max, self.s_max, self.tie_fraction, self.seed
        )
    }
}

impl FromStr for CorpusSpec {
    type Err = String;

    /// Parses `key=value` pairs separated by commas; missing keys keep their
    /// defaults.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = CorpusSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got {part:?}"))?;
            let float = || {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v > 0.0)
                    .ok_or_else(|| format!("{key} must be a positive number"))
            };
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| format!("{key} must be a non-negative integer"))
            };
            match key {
                "size" => spec.size = int()?,
                "nmin" => spec.n_min = int()?,
                "nmax" => spec.n_max = int()?,
                "vmax" => spec.v_max = float()?,
                "bmax" => spec.b_max = float()?,
                "smax" => spec.s_max = float()?,
                "ties" => {
                    spec.tie_fraction = value
                        .parse::<f64>()
                        .ok()
                        .filter(|t| (0.0..=1.0).contains(t))
                        .ok_or("ties must be in [0, 1]")?
                }
                "seed" => spec.seed = value.parse().map_err(|_| "seed must be an integer")?,
                _ => return Err(format!("unknown corpus key {key:?}")),
            }
        }
        if spec.n_min == 0 || spec.n_min > spec.n_max {
            return Err("need 1 <= nmin <= nmax".into());
        }
        Ok(spec)
    }
}

/// A two-bidder instance drawn inside a given regime.
#[derive(Debug, Clone, PartialEq)]
pub struct N2Sample {
    pub instance: AuctionInstance,
    pub regime: Regime,
}

/// `count` two-bidder instances, cycling through the six regimes. Budget
/// ratios lie in `[1, 5]`, the larger budget is placed at a random index, and
/// the supply is chosen strictly inside the regime's interval for `s v_min`.
pub fn n2_stratified(count: usize, seed: u64) -> Vec<N2Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regimes = Regime::all();
    (0..count)
        .map(|k| {
            let regime = regimes[k % regimes.len()];
            let b2 = open_closed(&mut rng, 5.0);
            let b1 = b2 * rng.gen_range(1.0..=5.0);
            let b1_prime = b2 * (b1 / b2 - 1.0).exp();
            let v_lo = 0.1 + 9.8 * rng.gen::<f64>();
            let v_hi = v_lo + (10.0 - v_lo) * rng.gen_range(0.05..=1.0);
            let u = rng.gen_range(0.02..0.98);
            let s = match regime.row() {
                1 | 4 => u * b2 / v_lo,
                2 | 5 => (b2 + u * (b1_prime - b2)) / v_lo,
                _ => b1_prime * (1.0 + 3.0 * u) / v_lo,
            };
            // rows 1-3: the larger budget has the lower value
            let (v_big, v_small) = if regime.row() <= 3 { (v_lo, v_hi) } else { (v_hi, v_lo) };
            let instance = if rng.gen_bool(0.5) {
                AuctionInstance::new(vec![v_big, v_small], vec![b1, b2], s)
            } else {
                AuctionInstance::new(vec![v_small, v_big], vec![b2, b1], s)
            };
            N2Sample { instance, regime }
        })
        .collect()
}
