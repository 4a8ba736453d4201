use serde::Serialize;

use crate::instance::AuctionInstance;

/// Result of checking one property on one instance: the worst violation
/// found (0 when clean) and a description of where it occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub violation: f64,
    pub detail: Option<String>,
}

impl Check {
    pub fn clean() -> Self {
        Self {
            violation: 0.0,
            detail: None,
        }
    }

    /// Records `amount` if it is the largest so far.
    pub fn observe(&mut self, amount: f64, detail: impl FnOnce() -> String) {
        if amount > self.violation || (amount.is_nan() && !self.violation.is_nan()) {
            self.violation = amount;
            self.detail = Some(detail());
        }
    }

    pub fn merge(&mut self, other: Check) {
        if other.violation > self.violation || (other.violation.is_nan() && !self.violation.is_nan()) {
            *self = other;
        }
    }

    pub fn failed(message: String) -> Self {
        Self {
            violation: f64::INFINITY,
            detail: Some(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub index: usize,
    pub instance: AuctionInstance,
    pub detail: String,
}

/// Outcome of checking one property over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub corpus: String,
    pub instances: usize,
    pub passed: bool,
    pub threshold: f64,
    pub worst_violation: f64,
    pub witness: Option<Witness>,
}

impl PropertyReport {
    /// Merges per-instance checks in index order. The witness is the first
    /// instance attaining the worst violation, present only on failure.
    pub fn from_checks(
        property: &str,
        corpus: &str,
        threshold: f64,
        instances: &[AuctionInstance],
        checks: Vec<Check>,
    ) -> Self {
        let mut worst = 0.0;
        let mut at: Option<(usize, String)> = None;
        for (k, c) in checks.into_iter().enumerate() {
            let v = if c.violation.is_nan() {
                f64::INFINITY
            } else {
                c.violation
            };
            if v > worst || (at.is_none() && v > threshold) {
                worst = v;
                at = Some((k, c.detail.unwrap_or_default()));
            }
        }
        let passed = worst <= threshold;
        Self {
            property: property.into(),
            corpus: corpus.into(),
            instances: instances.len(),
            passed,
            threshold,
            worst_violation: worst,
            witness: if passed {
                None
            } else {
                at.map(|(index, detail)| Witness {
                    index,
                    instance: instances[index].clone(),
                    detail,
                })
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn witness_only_on_failure() {
        let insts = vec![
            AuctionInstance::new(vec![1.0], vec![1.0], 1.0),
            AuctionInstance::new(vec![2.0], vec![1.0], 1.0),
        ];
        let ok = PropertyReport::from_checks("ir", "t", 1e-9, &insts, vec![Check::clean(), Check::clean()]);
        assert!(ok.passed && ok.witness.is_none());
        let mut bad = Check::clean();
        bad.observe(0.5, || "player 0".into());
        let r = PropertyReport::from_checks("ir", "t", 1e-9, &insts, vec![Check::clean(), bad]);
        assert!(!r.passed);
        assert_eq!(r.worst_violation, 0.5);
        let w = r.witness.unwrap();
        assert_eq!((w.index, w.detail.as_str()), (1, "player 0"));
    }
}
