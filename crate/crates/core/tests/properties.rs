use proptest::prelude::*;
use tumor_branching::chain::{build_sparse_rates, GreenSide};
use tumor_branching::config::ExperimentConfig;
use tumor_branching::simulator::{run_ensemble, Engine, PopulationState, RunConfig};
use tumor_branching::spectral::perron_triple;
use tumor_branching::{fmt_sig, AbsorbedRates, BranchingModel, DistributionOverTypes, TailPolicy};

/// Irreducible chain on 1..=k: a nearest-neighbour backbone plus random
/// extra jumps, absorption at type 1 at least.
fn chain() -> impl Strategy<Value = AbsorbedRates> {
    (2usize..7)
        .prop_flat_map(|k| {
            (
                Just(k),
                prop::collection::vec(0.1f64..3.0, 2 * (k - 1)),
                prop::collection::vec((1usize..=k, 0usize..=k, 0.0f64..2.0), 0..6),
                0.05f64..2.0,
            )
        })
        .prop_map(|(k, backbone, extra, kill)| {
            let mut t = vec![(1, 0, kill)];
            for x in 1..k {
                t.push((x, x + 1, backbone[2 * (x - 1)]));
                t.push((x + 1, x, backbone[2 * (x - 1) + 1]));
            }
            t.extend(extra.into_iter().filter(|&(x, y, r)| x != y && r > 0.0));
            build_sparse_rates(&t, k, TailPolicy::Kill).unwrap()
        })
}

fn model() -> impl Strategy<Value = BranchingModel> {
    chain().prop_flat_map(|q| {
        let k = q.size();
        prop::collection::vec(0.0f64..1.5, k).prop_map(move |b| BranchingModel::new(q.clone(), b).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rows_balance(q in chain()) {
        let g = q.generator();
        for x in 1..=q.size() {
            let out: f64 = q.transitions(x).map(|(_, r)| r).sum();
            prop_assert!((out + q.absorption(x) - q.total_rate(x)).abs() < 1e-12);
            prop_assert!((g.row_sum(x - 1) + q.absorption(x)).abs() < 1e-12);
            prop_assert!(q.row_balance(x).abs() < 1e-12);
        }
    }

    #[test]
    fn semigroup_is_substochastic_and_composes(q in chain(), s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let k = q.size();
        let (ps, _) = q.semigroup_row(1, s, 1e-14).unwrap();
        let (pst, _) = q.semigroup_row(1, s + t, 1e-14).unwrap();
        prop_assert!(ps.mass() <= 1.0 + 1e-12);
        prop_assert!(pst.mass() <= ps.mass() + 1e-12);
        prop_assert!(ps.weights.iter().all(|&w| w >= -1e-15));
        let composed = q.propagate(&ps.weights, t, 1e-14).unwrap();
        prop_assert_eq!(composed.len(), k);
        for (c, w) in composed.iter().zip(&pst.weights) {
            prop_assert!((c - w).abs() < 1e-10);
        }
    }

    #[test]
    fn green_solves_are_positive_and_agree(q in chain()) {
        let k = q.size();
        let occ = q.green_solve(&DistributionOverTypes::point_mass(k, 1), GreenSide::Occupation).unwrap();
        prop_assert!(occ.iter().all(|&v| v > 0.0));
        // expected lifetime from type 1 two ways
        let life = q.green_solve(&DistributionOverTypes::unnormalized(vec![1.0; k]), GreenSide::Reward).unwrap();
        let total: f64 = occ.iter().sum();
        prop_assert!((life[0] - total).abs() <= 1e-9 * total);
    }

    #[test]
    fn kappa0_routes_agree(m in model()) {
        let k = m.kappa0(1e-10).unwrap();
        prop_assert!((k.green - k.quadrature).abs() <= k.quadrature_error + 1e-9 * k.green.max(1.0));
    }

    #[test]
    fn mean_rates_are_q_plus_column_one(m in model()) {
        let mm = m.mean_rates().unwrap();
        let q = m.rates().generator();
        for x in 0..m.size() {
            for y in 0..m.size() {
                let extra = if y == 0 { m.beta()[x] } else { 0.0 };
                prop_assert!((mm.a.get(x, y) - q.get(x, y) - extra).abs() < 1e-12);
                let shift = if x == y { mm.beta_bar } else { 0.0 };
                prop_assert!((mm.a_shift.get(x, y) - mm.a.get(x, y) + shift).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perron_residuals_are_small(m in model()) {
        let a = m.mean_rates().unwrap().a;
        let tr = perron_triple(&a, 1e-11, 10_000_000).unwrap();
        prop_assert!(tr.residual_left < 1e-9 && tr.residual_right < 1e-9);
        prop_assert!(tr.nu.iter().all(|&v| v > 0.0));
        prop_assert!((tr.nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let dot: f64 = tr.nu.iter().zip(&tr.mu).map(|(a, b)| a * b).sum();
        prop_assert!((dot - 1.0).abs() < 1e-10);
        // sign of the growth rate matches criticality
        let k0 = m.kappa0_green().unwrap();
        if (k0 - 1.0).abs() > 1e-6 {
            prop_assert_eq!(tr.lambda_star > 0.0, k0 > 1.0);
        }
    }

    #[test]
    fn extinction_decreases_with_kappa(q in chain(), b in 0.1f64..3.0) {
        let k = q.size();
        let lo = BranchingModel::new(q.clone(), vec![b; k]).unwrap();
        let hi = BranchingModel::new(q, vec![2.0 * b; k]).unwrap();
        let el = lo.extinction_fixed_point(1e-12, 50_000_000).unwrap();
        let eh = hi.extinction_fixed_point(1e-12, 50_000_000).unwrap();
        for x in 0..k {
            prop_assert!(eh.q[x] <= el.q[x] + 1e-9);
            prop_assert!(el.q[x] <= 1.0 && eh.q[x] >= 0.0);
        }
    }

    #[test]
    fn simulator_accounting(m in model(), seed in any::<u64>(), steps in 1usize..300) {
        let engine = Engine::new(&m);
        let mut w = engine.start(PopulationState::single(m.size(), 1));
        let mut rng = tumor_branching::simulator::replica_rng(seed, 0);
        for _ in 0..steps {
            if w.state().is_extinct() {
                break;
            }
            w.step(&mut rng).unwrap();
        }
        let s = w.state();
        prop_assert_eq!(s.total, s.counts.iter().sum::<u64>());
        prop_assert_eq!(s.total as i64, 1 + s.events.creations as i64 - s.events.absorptions as i64);
        prop_assert!(s.time >= 0.0);
    }

    #[test]
    fn ensembles_are_reproducible(m in model(), seed in any::<u64>()) {
        let rc = RunConfig::new(m.size(), 1.0, vec![0.0, 0.5, 1.0], 4, seed);
        let a = run_ensemble(&m, &rc).unwrap();
        let b = run_ensemble(&m, &rc).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fmt_sig_keeps_twelve_digits(x in prop::num::f64::NORMAL) {
        let back: f64 = fmt_sig(x).parse().unwrap();
        prop_assert!(((back - x) / x).abs() < 1e-11);
    }

    #[test]
    fn tv_is_a_metric(a in prop::collection::vec(0.01f64..1.0, 5), b in prop::collection::vec(0.01f64..1.0, 5)) {
        let p = DistributionOverTypes::normalize(a).unwrap();
        let q = DistributionOverTypes::normalize(b).unwrap();
        let d = p.tv(&q);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - q.tv(&p)).abs() < 1e-15);
        prop_assert!(p.tv(&p) == 0.0);
    }
}

#[test]
fn config_round_trips_through_toml() {
    let text = "[model]\nbuilder = \"gompertz\"\na = 1.0\nn = 20\nk = 30\n\n[beta]\nfamily = \"power\"\nkappa = 0.01\nr = 1.0\n";
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(cfg, again);
}
