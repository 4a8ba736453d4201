use serde::Serialize;

use super::EngineError;

/// Snapshot of the ascending process at one price.
///
/// `active` and `clinching` are sorted player indices. When `left_limit` is
/// set the snapshot is the limit from below at `price`, so bidders whose value
/// equals the price are still listed as active.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceState {
    pub price: f64,
    #[serde(rename = "x")]
    pub allocation: Vec<f64>,
    #[serde(rename = "B")]
    pub budgets: Vec<f64>,
    #[serde(rename = "S")]
    pub remnant: f64,
    #[serde(rename = "A")]
    pub active: Vec<usize>,
    #[serde(rename = "C")]
    pub clinching: Vec<usize>,
    #[serde(skip)]
    pub left_limit: bool,
}

impl PriceState {
    /// State at `p = 0`: nothing allocated, full budgets, every bidder with a
    /// positive value active, nobody clinching.
    pub fn initial(values: &[f64], budgets: &[f64], supply: f64) -> Self {
        Self {
            price: 0.0,
            allocation: vec![0.0; values.len()],
            budgets: budgets.to_vec(),
            remnant: supply,
            active: (0..values.len()).filter(|&i| values[i] > 0.0).collect(),
            clinching: Vec::new(),
            left_limit: false,
        }
    }

    pub fn n(&self) -> usize {
        self.allocation.len()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active.binary_search(&i).is_ok()
    }

    pub fn is_clinching(&self, i: usize) -> bool {
        self.clinching.binary_search(&i).is_ok()
    }

    /// Active players that are not clinching.
    pub fn non_clinching(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().copied().filter(|&i| !self.is_clinching(i))
    }

    /// Sum of remaining budgets over the active set.
    pub fn active_budget_sum(&self) -> f64 {
        self.active.iter().map(|&i| self.budgets[i]).sum()
    }

    /// `B_*`: the largest remaining budget among active players (0 if none).
    pub fn max_budget(&self) -> f64 {
        self.active.iter().map(|&i| self.budgets[i]).fold(0.0, f64::max)
    }

    /// Slack of the clinching condition for active player `i`, in money:
    /// `sum_{j in A \ i} B_j - p S`. It is non-negative along the process and
    /// zero exactly for clinching players.
    pub fn clinch_gap(&self, i: usize) -> f64 {
        self.active_budget_sum() - self.budgets[i] - self.price * self.remnant
    }

    /// Payments so far relative to the starting budgets.
    pub fn payments(&self, initial_budgets: &[f64]) -> Vec<f64> {
        initial_budgets
            .iter()
            .zip(&self.budgets)
            .map(|(b0, b)| b0 - b)
            .collect()
    }

    /// Wishful allocation `x_i + B_i / p`: allocation so far plus the most the
    /// player could still afford at the current price.
    pub fn wishful_allocation(&self) -> Result<Vec<f64>, EngineError> {
        if self.price <= 0.0 {
            return Err(EngineError::ZeroPrice);
        }
        Ok(self
            .allocation
            .iter()
            .zip(&self.budgets)
            .map(|(x, b)| x + b / self.price)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_state_excludes_zero_values() {
        let st = PriceState::initial(&[0.0, 2.0, 1.0], &[1.0, 1.0, 1.0], 3.0);
        assert_eq!(st.active, vec![1, 2]);
        assert!(st.clinching.is_empty());
        assert_eq!(st.remnant, 3.0);
    }

    #[test]
    fn wishful_before_clinching_is_budget_over_price() {
        let mut st = PriceState::initial(&[1.0, 2.0], &[3.0, 2.0], 1.0);
        assert_eq!(st.wishful_allocation(), Err(EngineError::ZeroPrice));
        st.price = 0.5;
        assert_eq!(st.wishful_allocation().unwrap(), vec![6.0, 4.0]);
    }

    #[test]
    fn wishful_equals_allocation_when_budget_exhausted() {
        let st = PriceState {
            price: 2.0,
            allocation: vec![0.25, 0.75],
            budgets: vec![0.0, 0.0],
            remnant: 0.0,
            active: vec![],
            clinching: vec![],
            left_limit: false,
        };
        assert_eq!(st.wishful_allocation().unwrap(), st.allocation);
    }

    #[test]
    fn gap_matches_definition() {
        let mut st = PriceState::initial(&[9.0, 10.0, 11.0, 5.7], &[3.0, 2.0, 1.0, 0.5], 1.0);
        st.price = 3.5;
        assert_eq!(st.clinch_gap(0), 0.0);
        assert!(st.clinch_gap(1) > 0.0);
    }
}
