//! Monte Carlo against closed forms and the mean semigroup.

use tumor_branching::chain::build_sparse_rates;
use tumor_branching::linalg::{expm_action, Side};
use tumor_branching::simulator::{run_ensemble, Outcome, RunConfig};
use tumor_branching::{BranchingModel, TailPolicy};

const REPLICAS: usize = 4000;

fn linear_bd(b: f64, d: f64) -> BranchingModel {
    let q = build_sparse_rates(&[(1, 0, d)], 1, TailPolicy::Kill).unwrap();
    BranchingModel::new(q, vec![b]).unwrap()
}

#[test]
fn linear_birth_death_extinction_by_time_t() {
    for (b, d, t) in [(1.0, 2.0, 1.0), (2.0, 1.0, 1.5)] {
        let m = linear_bd(b, d);
        let rc = RunConfig::new(1, t, vec![t], REPLICAS, 11);
        let trs = run_ensemble(&m, &rc).unwrap();
        let dead = trs
            .iter()
            .filter(|tr| matches!(tr.outcome, Outcome::Extinct { .. }))
            .count() as f64
            / REPLICAS as f64;
        let e = ((b - d) * t).exp();
        let want = d * (e - 1.0) / (b * e - d);
        let se = (want * (1.0 - want) / REPLICAS as f64).sqrt();
        assert!((dead - want).abs() < 5.0 * se, "b={b} d={d}: {dead} vs {want}");
    }
}

#[test]
fn mean_counts_follow_mean_semigroup() {
    let t3 = [
        (1, 2, 2.0),
        (2, 3, 2.0),
        (2, 1, 1.0),
        (3, 2, 3.0),
        (1, 0, 1.0),
        (3, 0, 1.0),
    ];
    let q = build_sparse_rates(&t3, 3, TailPolicy::Kill).unwrap();
    let m = BranchingModel::new(q, vec![0.5, 0.5, 0.5]).unwrap();
    let t = 1.0;
    let a = m.mean_rates().unwrap().a;
    let mean = expm_action(&a, &[1.0, 0.0, 0.0], t, Side::Left, 1e-14, 100_000)
        .unwrap()
        .unscaled();
    let rc = RunConfig::new(3, t, vec![t], REPLICAS, 5);
    let trs = run_ensemble(&m, &rc).unwrap();
    for (y, &want) in mean.iter().enumerate() {
        let xs: Vec<f64> = trs.iter().map(|tr| tr.snapshots[0].counts[y] as f64).collect();
        let mu = xs.iter().sum::<f64>() / REPLICAS as f64;
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (REPLICAS - 1) as f64;
        let se = (var / REPLICAS as f64).sqrt();
        assert!((mu - want).abs() < 5.0 * se, "type {}: {mu} vs {want}", y + 1);
    }
}

#[test]
fn zero_horizon_keeps_initial_state() {
    let m = linear_bd(1.0, 1.0);
    let rc = RunConfig::new(1, 0.0, vec![0.0], 3, 0);
    let trs = run_ensemble(&m, &rc).unwrap();
    for tr in trs {
        assert_eq!(tr.snapshots.len(), 1);
        assert_eq!(tr.snapshots[0].counts, vec![1]);
        assert_eq!(tr.outcome, Outcome::Survived);
    }
}
