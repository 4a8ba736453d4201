use clinch_core::closed_form::{marginal_rates_n2, solve_n2, ClosedFormError, Regime};
use clinch_core::engine;
use clinch_core::oracle::n2_stratified;
use clinch_core::{AuctionInstance, Outcome};

fn close(a: &Outcome, x: [f64; 2], pi: [f64; 2]) -> bool {
    a.max_abs_diff(&Outcome {
        allocation: x.to_vec(),
        payments: pi.to_vec(),
    }) < 1e-12
}

#[test]
fn golden_values() {
    let (o, l) = solve_n2(1.0, 2.0, 3.0, 2.0, 1.0).unwrap();
    assert_eq!(l.regime, Regime::SmallBudgetVcg);
    assert!(close(&o, [0.0, 1.0], [0.0, 1.0]));

    let (o, l) = solve_n2(5.0, 2.0, 3.0, 2.0, 0.5).unwrap();
    assert_eq!(l.regime, Regime::LargeBudgetVcg);
    assert!(close(&o, [0.5, 0.0], [1.0, 0.0]));

    let (o, l) = solve_n2(1.0, 2.0, 3.0, 1.0, 2.0).unwrap();
    assert_eq!(l.regime, Regime::SmallBudgetDepleted);
    assert!(close(&o, [1.0, 1.0], [2f64.ln(), 1.0]));

    let (o, _) = solve_n2(1.0, 2.0, 3.0, 1.0, 0.0).unwrap();
    assert!(close(&o, [0.0, 0.0], [0.0, 0.0]));
}

#[test]
fn b1_prime_and_labels() {
    let (_, l) = solve_n2(1.0, 2.0, 3.0, 1.0, 2.0).unwrap();
    assert!((l.b1_prime - 2f64.exp()).abs() < 1e-12);
    assert!(!l.swapped);
    let (_, l) = solve_n2(2.0, 1.0, 1.0, 3.0, 2.0).unwrap();
    assert!(l.swapped);
    assert_eq!(l.regime.to_string(), "row2");
}

#[test]
fn agrees_with_engine() {
    for s in n2_stratified(600, 9) {
        let i = &s.instance;
        let (closed, label) = solve_n2(i.values[0], i.values[1], i.budgets[0], i.budgets[1], i.supply).unwrap();
        assert_eq!(label.regime, s.regime);
        let exact = engine::solve(&i.validate().unwrap()).unwrap();
        assert!(closed.max_abs_diff(&exact) <= 1e-9 * (1.0 + i.supply * 10.0), "{i:?}");
    }
}

fn finite_difference(v: [f64; 2], b: [f64; 2], s: f64, h: f64) -> ([f64; 2], [f64; 2]) {
    let (up, _) = solve_n2(v[0], v[1], b[0], b[1], s + h).unwrap();
    let (down, _) = solve_n2(v[0], v[1], b[0], b[1], s - h).unwrap();
    let d = |k: usize, a: &[f64], c: &[f64]| (a[k] - c[k]) / (2.0 * h);
    (
        [
            d(0, &up.allocation, &down.allocation),
            d(1, &up.allocation, &down.allocation),
        ],
        [d(0, &up.payments, &down.payments), d(1, &up.payments, &down.payments)],
    )
}

#[test]
fn rates_match_finite_differences() {
    for sample in n2_stratified(300, 17) {
        let AuctionInstance {
            values: v,
            budgets: b,
            supply: s,
        } = &sample.instance;
        let rates = marginal_rates_n2(v[0], v[1], b[0], b[1], *s).unwrap();
        let (dx, dpi) = finite_difference([v[0], v[1]], [b[0], b[1]], *s, 1e-6);
        for k in 0..2 {
            for (exact, approx) in [(rates.allocation[k], dx[k]), (rates.payments[k], dpi[k])] {
                let scale = exact.abs().max(approx.abs()).max(1.0);
                assert!(
                    (exact - approx).abs() <= 1e-4 * scale,
                    "{:?}: {exact} vs {approx}",
                    sample.instance
                );
            }
        }
    }
}

#[test]
fn vcg_and_deep_supply_rates() {
    let r = marginal_rates_n2(1.0, 2.0, 3.0, 2.0, 1.0).unwrap();
    assert_eq!((r.allocation, r.payments), ([0.0, 1.0], [0.0, 1.0]));
    let r = marginal_rates_n2(1.0, 2.0, 3.0, 1.0, 20.0).unwrap();
    assert_eq!(r.label.regime, Regime::SmallBudgetSplit);
    assert!((r.allocation[0] + r.allocation[1] - 1.0).abs() < 1e-12);
}

#[test]
fn rates_refused_on_boundaries() {
    // s v_min = B2
    assert!(matches!(
        marginal_rates_n2(1.0, 2.0, 3.0, 1.0, 1.0),
        Err(ClosedFormError::OnRegimeBoundary { .. })
    ));
    // s v_min = B1'
    assert!(matches!(
        marginal_rates_n2(1.0, 2.0, 3.0, 1.0, 2f64.exp()),
        Err(ClosedFormError::OnRegimeBoundary { .. })
    ));
}

#[test]
fn continuous_across_boundaries() {
    let cases: [([f64; 2], [f64; 2]); 3] = [
        ([1.0, 2.0], [3.0, 1.0]),
        ([2.0, 1.0], [3.0, 1.0]),
        ([1.5, 4.0], [2.0, 1.6]),
    ];
    for (v, b) in cases {
        let b1p = b[1] * (b[0] / b[1] - 1.0).exp();
        let vmin = v[0].min(v[1]);
        for edge in [b[1] / vmin, b1p / vmin] {
            let eps = 1e-9 * edge;
            let (lo, _) = solve_n2(v[0], v[1], b[0], b[1], edge - eps).unwrap();
            let (hi, _) = solve_n2(v[0], v[1], b[0], b[1], edge + eps).unwrap();
            assert!(lo.max_abs_diff(&hi) < 1e-7, "{v:?} {b:?} at {edge}");
        }
    }
}

#[test]
fn rejects_invalid_input() {
    assert!(matches!(
        solve_n2(-1.0, 2.0, 1.0, 1.0, 1.0),
        Err(ClosedFormError::Instance(_))
    ));
    assert!(solve_n2(1.0, 2.0, 1.0, 1.0, f64::INFINITY).is_err());
}
