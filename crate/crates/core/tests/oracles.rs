//! Cross-checks against dense nalgebra computations.

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use tumor_branching::chain::{build_gompertz_bd, build_sparse_rates, GreenSide};
use tumor_branching::linalg::{expm_action, Side, SparseMatrix};
use tumor_branching::spectral::perron_triple;
use tumor_branching::{BranchingModel, DistributionOverTypes, TailPolicy};

const M3: [(usize, usize, f64); 6] = [
    (1, 2, 2.0),
    (2, 3, 2.0),
    (2, 1, 1.0),
    (3, 2, 3.0),
    (1, 0, 1.0),
    (3, 0, 1.0),
];

fn dense(m: &SparseMatrix) -> DMatrix<f64> {
    let n = m.dim();
    DMatrix::from_fn(n, n, |i, j| m.get(i, j))
}

fn models() -> Vec<BranchingModel> {
    let m3 = build_sparse_rates(&M3, 3, TailPolicy::Kill).unwrap();
    let g = build_gompertz_bd(1.0, 20.0, 12, TailPolicy::Kill).unwrap();
    let gr = build_gompertz_bd(0.5, 8.0, 10, TailPolicy::Reflect).unwrap();
    vec![
        BranchingModel::new(m3, vec![1.0, 0.5, 2.0]).unwrap(),
        BranchingModel::new(g, (1..=12).map(|x| 0.05 * x as f64).collect()).unwrap(),
        BranchingModel::new(gr, vec![0.3; 10]).unwrap(),
    ]
}

#[test]
fn expm_matches_dense_exponential() {
    for model in models() {
        let a = model.mean_rates().unwrap().a;
        let n = a.dim();
        let d = dense(&a);
        for t in [0.1, 1.0, 3.5] {
            let e = (&d * t).exp();
            for x in 0..n {
                let mut v = vec![0.0; n];
                v[x] = 1.0;
                let left = expm_action(&a, &v, t, Side::Left, 1e-14, 1_000_000).unwrap().unscaled();
                let right = expm_action(&a, &v, t, Side::Right, 1e-14, 1_000_000)
                    .unwrap()
                    .unscaled();
                for y in 0..n {
                    assert_relative_eq!(left[y], e[(x, y)], max_relative = 1e-9, epsilon = 1e-13);
                    assert_relative_eq!(right[y], e[(y, x)], max_relative = 1e-9, epsilon = 1e-13);
                }
            }
        }
    }
}

#[test]
fn green_solve_matches_dense_inverse() {
    for model in models() {
        let q = model.rates();
        let neg = -dense(q.generator());
        let g = neg.try_inverse().unwrap();
        let n = q.size();
        for x in 1..=n {
            let occ = q
                .green_solve(&DistributionOverTypes::point_mass(n, x), GreenSide::Occupation)
                .unwrap();
            for y in 0..n {
                assert_relative_eq!(occ[y], g[(x - 1, y)], max_relative = 1e-10);
            }
        }
        let kappa: f64 = (0..n).map(|y| g[(0, y)] * model.beta()[y]).sum();
        assert_relative_eq!(model.kappa0_green().unwrap(), kappa, max_relative = 1e-10);
        let k = model.kappa0(1e-10).unwrap();
        assert!((k.quadrature - kappa).abs() <= k.quadrature_error.max(1e-9 * kappa));
    }
}

#[test]
fn gamma1_matches_dense() {
    for model in models() {
        let q = dense(model.rates().generator());
        let beta = nalgebra::DVector::from_column_slice(model.beta());
        for t in [0.0, 0.7, 4.0] {
            let e = (&q * t).exp();
            let want = (e.row(0) * &beta)[(0, 0)];
            assert_relative_eq!(model.gamma1(t, 1e-13).unwrap(), want, max_relative = 1e-9);
        }
    }
}

#[test]
fn perron_triple_matches_dense_eigen() {
    for model in models() {
        let a = model.mean_rates().unwrap().a;
        let d = dense(&a);
        let eig = d.clone().complex_eigenvalues();
        let lambda = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let tr = perron_triple(&a, 1e-12, 10_000_000).unwrap();
        assert_relative_eq!(tr.lambda_star, lambda, epsilon = 1e-9);
        // eigenvectors from the null spaces of the shifted matrices
        let n = a.dim();
        let shifted = &d - DMatrix::identity(n, n) * lambda;
        let right = shifted.clone().svd(false, true).v_t.unwrap();
        let left = shifted.transpose().svd(false, true).v_t.unwrap();
        let last = |m: &DMatrix<f64>| {
            let r: Vec<f64> = m.row(n - 1).iter().copied().collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        let nu = last(&left);
        let mu_raw = last(&right);
        let scale: f64 = nu.iter().zip(&mu_raw).map(|(a, b)| a * b).sum();
        for x in 0..n {
            assert_relative_eq!(tr.nu[x], nu[x], epsilon = 1e-8);
            assert_relative_eq!(tr.mu[x], mu_raw[x] / scale, epsilon = 1e-7);
        }
    }
}

#[test]
fn skeleton_mean_is_pgf_jacobian() {
    for model in models() {
        let m = model.skeleton_mean();
        let n = model.size();
        let h = 1e-6;
        for y in 0..n {
            let mut s = vec![1.0; n];
            s[y] -= h;
            let lo = model.offspring_pgf(&s);
            let one = model.offspring_pgf(&vec![1.0; n]);
            for x in 0..n {
                let fd = (one[x] - lo[x]) / h;
                assert_relative_eq!(m.get(x, y), fd, epsilon = 1e-5, max_relative = 1e-5);
            }
        }
        for x in 0..n {
            assert_relative_eq!(model.offspring_pgf(&vec![1.0; n])[x], 1.0, epsilon = 1e-14);
        }
    }
}

#[test]
fn extinction_is_a_fixed_point_below_one_when_supercritical() {
    for model in models() {
        let k0 = model.kappa0_green().unwrap();
        let e = model.extinction_fixed_point(1e-12, 10_000_000).unwrap();
        let f = model.offspring_pgf(&e.q);
        for (a, b) in f.iter().zip(&e.q) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
        if k0 > 1.0 {
            assert!(e.q[0] < 1.0 - 1e-6, "q1 = {}", e.q[0]);
        } else {
            assert!(e.q[0] > 1.0 - 1e-6);
        }
    }
}
