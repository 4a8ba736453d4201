use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clinch_core::vcg::{
    check_submodular, naive_order_counterexample, players, vcg_capacity_demo, vcg_multiunit, vcg_polymatroid,
    CoverageFunction, MultiUnit, PlayerSet, SetFunction, Sum, TableFunction, VcgError,
};

#[test]
fn multiunit_second_price() {
    let o = vcg_multiunit(&[1.0, 2.0], 1.0).unwrap();
    assert_eq!((o.allocation, o.payments), (vec![0.0, 1.0], vec![0.0, 1.0]));
    let o = vcg_multiunit(&[2.0], 3.0).unwrap();
    assert_eq!((o.allocation, o.payments), (vec![3.0], vec![0.0]));
    let poly = vcg_polymatroid(&[4.0, 1.5, 3.0], &MultiUnit { n: 3, supply: 2.5 }).unwrap();
    assert_eq!(poly, vcg_multiunit(&[4.0, 1.5, 3.0], 2.5).unwrap());
}

#[test]
fn capped_two_per_player() {
    let f = TableFunction::new(2, vec![0.0, 2.0, 2.0, 3.0]).unwrap();
    let o = vcg_polymatroid(&[3.0, 1.0], &f).unwrap();
    assert_eq!(o.allocation, [2.0, 1.0]);
    assert_eq!(o.payments, [1.0, 0.0]);
}

#[test]
fn capacity_example() {
    let one = vcg_capacity_demo(&[1.0, 2.0], &[1.0, 1.0], 1.0).unwrap();
    assert_eq!((one.allocation, one.payments), (vec![0.0, 1.0], vec![0.0, 1.0]));
    let two = vcg_capacity_demo(&[1.0, 2.0], &[1.0, 1.0], 2.0).unwrap();
    assert_eq!((two.allocation, two.payments), (vec![1.0, 1.0], vec![0.0, 0.0]));
    let none = vcg_capacity_demo(&[1.0, 2.0], &[1.0, 1.0], 0.0).unwrap();
    assert!(none.allocation.iter().chain(&none.payments).all(|&v| v == 0.0));
}

#[test]
fn naive_order_fixture() {
    let c = naive_order_counterexample();
    assert!((0..4).all(|s| c.smaller.eval(s) <= c.larger.eval(s)));
    assert_eq!(c.outcome_smaller.allocation, [2.0, 1.0]);
    assert_eq!(c.outcome_larger.allocation, [4.0, 0.0]);
    assert!(c.outcome_larger.allocation[1] < c.outcome_smaller.allocation[1]);
}

#[test]
fn allocation_lies_in_polymatroid() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let n = rng.gen_range(2..=8);
        let f = CoverageFunction::random(n, rng.gen_range(2..=12), &mut rng);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let o = vcg_polymatroid(&values, &f).unwrap();
        let full: PlayerSet = (1 << n) - 1;
        assert!((o.total_allocated() - f.eval(full)).abs() < 1e-9);
        for _ in 0..1000 {
            let set: PlayerSet = rng.gen_range(0..=full);
            let got: f64 = players(set).map(|i| o.allocation[i]).sum();
            assert!(got <= f.eval(set) + 1e-9, "{set:b}: {got} > {}", f.eval(set));
        }
        assert!(o.payments.iter().all(|&p| p >= -1e-9));
    }
}

/// Best welfare over integer points of the polymatroid restricted to `set`.
fn best_welfare(f: &impl SetFunction, values: &[f64], set: PlayerSet, top: u32) -> (f64, Vec<u32>) {
    let members: Vec<usize> = players(set).collect();
    let mut best = (0.0, vec![0; values.len()]);
    let mut x = vec![0u32; values.len()];
    fn feasible(f: &impl SetFunction, x: &[u32]) -> bool {
        let n = x.len();
        (1..1u64 << n).all(|s| players(s).map(|i| x[i] as f64).sum::<f64>() <= f.eval(s) + 1e-9)
    }
    fn rec(
        f: &impl SetFunction,
        values: &[f64],
        members: &[usize],
        k: usize,
        top: u32,
        x: &mut Vec<u32>,
        best: &mut (f64, Vec<u32>),
    ) {
        if k == members.len() {
            if feasible(f, x) {
                let w: f64 = members.iter().map(|&i| values[i] * x[i] as f64).sum();
                if w > best.0 + 1e-12 {
                    *best = (w, x.clone());
                }
            }
            return;
        }
        for q in 0..=top {
            x[members[k]] = q;
            rec(f, values, members, k + 1, top, x, best);
        }
        x[members[k]] = 0;
    }
    rec(f, values, &members, 0, top, &mut x, &mut best);
    best
}

#[test]
fn matches_brute_force_vcg() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..30 {
        let n = rng.gen_range(2..=3);
        let elements = rng.gen_range(1..=4);
        let covers: Vec<u64> = (0..n).map(|_| rng.gen_range(0..1u64 << elements)).collect();
        let weights: Vec<f64> = (0..elements).map(|_| rng.gen_range(1..=2) as f64).collect();
        let f = CoverageFunction::new(covers, weights).unwrap();
        // distinct values so the welfare optimum is unique
        let values: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 + rng.gen::<f64>() * 0.5).collect();
        let top = f.eval((1 << n) - 1) as u32;
        let full: PlayerSet = (1 << n) - 1;
        let (_, x) = best_welfare(&f, &values, full, top);
        let o = vcg_polymatroid(&values, &f).unwrap();
        for i in 0..n {
            assert!((o.allocation[i] - x[i] as f64).abs() < 1e-9, "{values:?} {x:?} {o:?}");
            let (without, _) = best_welfare(&f, &values, full & !(1 << i), top);
            let others: f64 = (0..n).filter(|&j| j != i).map(|j| values[j] * x[j] as f64).sum();
            assert!((o.payments[i] - (without - others)).abs() < 1e-9, "{values:?} {o:?}");
        }
    }
}

#[test]
fn minkowski_sum_adds_outcomes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.gen_range(1..=6);
        let f = CoverageFunction::random(n, 6, &mut rng);
        let g = CoverageFunction::random(n, 4, &mut rng);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let (a, b) = (
            vcg_polymatroid(&values, &f).unwrap(),
            vcg_polymatroid(&values, &g).unwrap(),
        );
        let sum = vcg_polymatroid(&values, &Sum(&f, &g)).unwrap();
        for i in 0..n {
            assert!((sum.allocation[i] - a.allocation[i] - b.allocation[i]).abs() < 1e-9);
            assert!((sum.payments[i] - a.payments[i] - b.payments[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn rejects_bad_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // f({0}) > f({0, 1})
    let not_monotone = TableFunction::new(2, vec![0.0, 3.0, 1.0, 2.0]).unwrap();
    assert!(matches!(
        vcg_polymatroid(&[2.0, 1.0], &not_monotone),
        Err(VcgError::OracleViolation { .. })
    ));
    assert!(check_submodular(&not_monotone, 0, &mut rng).is_err());
    // supermodular: f({0,1}) > f({0}) + f({1})
    let super_ = TableFunction::new(2, vec![0.0, 1.0, 1.0, 3.0]).unwrap();
    assert!(matches!(
        check_submodular(&super_, 0, &mut rng),
        Err(VcgError::NotSubmodular { .. })
    ));
    assert!(check_submodular(&CoverageFunction::random(5, 8, &mut rng), 0, &mut rng).is_ok());
    assert!(matches!(
        TableFunction::new(2, vec![0.0; 3]),
        Err(VcgError::BadTable { .. })
    ));
    assert!(vcg_multiunit(&[1.0, -1.0], 1.0).is_err());
}
