//! End-to-end acceptance criteria, shared by the `verify` subcommand and
//! the `acceptance` test target.

use std::fmt;
use std::time::{Duration, Instant};

use crate::branching::{critical_kappa, Beta, BranchingModel};
use crate::certificates::{check_bd_conditions, check_doeblin, escape_prob_profile, killed_time_kernel};
use crate::chain::{build_gompertz_bd, build_sparse_rates, AbsorbedRates, TailPolicy};
use crate::error::Result;
use crate::linalg::{expm_action, Side, SparseMatrix};
use crate::simulator::{run_ensemble, survival_stats, RunConfig};
use crate::spectral::{perron_triple, SpectralTriple};

/// Models the criteria run on.
pub mod fixtures {
    use super::*;

    /// Three-type chain used throughout the tests.
    pub const M3_TRIPLES: [(usize, usize, f64); 6] = [
        (1, 2, 2.0),
        (2, 3, 2.0),
        (2, 1, 1.0),
        (3, 2, 3.0),
        (1, 0, 1.0),
        (3, 0, 1.0),
    ];

    /// Gompertz parameters of the branching fixtures.
    pub const GOMPERTZ_A: f64 = 1.0;
    pub const GOMPERTZ_N: f64 = 20.0;
    pub const GOMPERTZ_K: usize = 60;
    /// Truncation of the simulated supercritical fixture.
    pub const SIM_K: usize = 50;
    /// `κ / κ*` of the simulated supercritical fixture.
    pub const SIM_KAPPA_MULT: f64 = 100.0;
    pub const DOEBLIN_K: usize = 30;
    pub const DOEBLIN_KAPPA: f64 = 1.0;

    pub fn single(b: f64, d: f64) -> Result<BranchingModel> {
        let q = build_sparse_rates(&[(1, 0, d)], 1, TailPolicy::Kill)?;
        BranchingModel::with_beta(q, Beta::Constant { kappa: b })
    }

    pub fn m3_rates() -> Result<AbsorbedRates> {
        build_sparse_rates(&M3_TRIPLES, 3, TailPolicy::Kill)
    }

    pub fn m3(kappa: f64) -> Result<BranchingModel> {
        BranchingModel::with_beta(m3_rates()?, Beta::Constant { kappa })
    }

    /// `β(x) = κ min(x, N)` on the Gompertz chain, killed beyond `k`.
    pub fn gompertz(k: usize, kappa: f64) -> Result<BranchingModel> {
        let q = build_gompertz_bd(GOMPERTZ_A, GOMPERTZ_N, k, TailPolicy::Kill)?;
        BranchingModel::with_beta(
            q,
            Beta::Power {
                kappa,
                r: 1.0,
                x_cap: Some(GOMPERTZ_N),
            },
        )
    }

    pub fn gompertz_kappa_star(k: usize) -> Result<f64> {
        critical_kappa(|c| gompertz(k, c), 1e-13)
    }

    /// Constant `β` on the reflected Gompertz chain.
    pub fn doeblin(k: usize) -> Result<BranchingModel> {
        let q = build_gompertz_bd(GOMPERTZ_A, GOMPERTZ_N, k, TailPolicy::Reflect)?;
        BranchingModel::with_beta(q, Beta::Constant { kappa: DOEBLIN_KAPPA })
    }

    /// `q(x, x-1) = x²`, `q(x, x+1) = x`.
    pub fn fast_descent(k: usize) -> Result<AbsorbedRates> {
        let mut e = Vec::with_capacity(2 * k);
        for x in 1..=k {
            let xf = x as f64;
            e.push((x, x - 1, xf * xf));
            if x < k {
                e.push((x, x + 1, xf));
            }
        }
        build_sparse_rates(&e, k, TailPolicy::Kill)
    }
}

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    /// One line per individual check.
    pub checks: Vec<(bool, String)>,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl CriterionReport {
    pub fn summary_line(&self) -> String {
        format!(
            "criterion {:>2} {} {} ({:.2}s of {}s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }

    pub fn first_failure(&self) -> Option<&str> {
        self.checks.iter().find(|c| !c.0).map(|c| c.1.as_str())
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary_line())?;
        for (ok, line) in &self.checks {
            writeln!(f, "    [{}] {line}", if *ok { "ok" } else { "FAIL" })?;
        }
        Ok(())
    }
}

struct Checks(Vec<(bool, String)>);

impl Checks {
    fn new() -> Self {
        Self(Vec::new())
    }

    fn check(&mut self, ok: bool, line: String) -> bool {
        self.0.push((ok, line));
        ok
    }
}

fn run(id: u8, title: &'static str, budget_secs: u64, body: impl FnOnce(&mut Checks) -> Result<()>) -> CriterionReport {
    let start = Instant::now();
    let mut checks = Checks::new();
    if let Err(e) = body(&mut checks) {
        checks.check(false, format!("numerical error: {e}"));
    }
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_secs);
    checks.check(
        elapsed <= budget,
        format!("runtime {:.2}s within {budget_secs}s", elapsed.as_secs_f64()),
    );
    CriterionReport {
        id,
        title,
        pass: !checks.0.is_empty() && checks.0.iter().all(|c| c.0),
        checks: checks.0,
        elapsed,
        budget,
    }
}

const PERRON_TOL: f64 = 1e-12;
const PERRON_ITER: usize = 50_000_000;
const SEED: u64 = 20_240_901;

/// Left action `e_1ᵀ e^{tA}`.
fn mean_row(a: &SparseMatrix, t: f64) -> Result<Vec<f64>> {
    let k = a.dim();
    let shift = (0..k).map(|i| a.row_sum(i)).fold(0.0, f64::max);
    let uniform = (0..k).map(|i| shift - a.diag(i)).fold(0.0, f64::max);
    let cap = (2.0 * uniform * t + 50.0 * (uniform * t).sqrt() + 1000.0) as usize;
    let mut e = vec![0.0; k];
    e[0] = 1.0;
    Ok(expm_action(a, &e, t, Side::Left, 1e-15, cap)?.unscaled())
}

fn triple_of_a(model: &BranchingModel) -> Result<SpectralTriple> {
    perron_triple(&model.mean_rates()?.a, PERRON_TOL, PERRON_ITER)
}

/// Scalar closed forms.
pub fn criterion_1() -> CriterionReport {
    run(1, "scalar closed forms", 10, |c| {
        for (b, d) in [(1.0, 2.0), (2.0, 1.0)] {
            let m = fixtures::single(b, d)?;
            let k = m.kappa0(1e-12)?;
            let want = b / d;
            c.check(
                (k.green - want).abs() < 1e-10 && (k.quadrature - want).abs() < 1e-10,
                format!(
                    "b={b} d={d}: kappa0 green={} quadrature={} vs {want}",
                    k.green, k.quadrature
                ),
            );
            let q = m.extinction_fixed_point(1e-13, 10_000_000)?.q[0];
            let want = (d / b).min(1.0);
            c.check(
                (q - want).abs() < 1e-10,
                format!("b={b} d={d}: extinction {q} vs {want}"),
            );
        }
        let m = fixtures::single(2.0, 1.0)?;
        let mut cfg = RunConfig::new(1, 20.0, vec![20.0], 10_000, SEED);
        cfg.population_cap = 1000;
        let trs = run_ensemble(&m, &cfg)?;
        let row = &survival_stats(&trs, &cfg, None)[0];
        let sigma = (0.25 / cfg.replicas as f64).sqrt();
        c.check(
            (row.survival_fraction - 0.5).abs() <= 3.0 * sigma,
            format!(
                "b=2 d=1: survival fraction {} vs 0.5 (3 sigma = {:.4}, {} censored at cap)",
                row.survival_fraction,
                3.0 * sigma,
                row.censored
            ),
        );
        Ok(())
    })
}

/// Rank-one identity of the mean rates.
pub fn criterion_2() -> CriterionReport {
    run(2, "rank-one identity", 5, |c| {
        let ks = fixtures::gompertz_kappa_star(fixtures::GOMPERTZ_K)?;
        let models = [
            ("single", fixtures::single(1.0, 2.0)?),
            ("M3", fixtures::m3(1.0)?),
            ("gompertz", fixtures::gompertz(fixtures::GOMPERTZ_K, 2.0 * ks)?),
            ("gompertz-capped-uncapped", {
                let q = build_gompertz_bd(1.0, 20.0, 50, TailPolicy::Kill)?;
                BranchingModel::with_beta(
                    q,
                    Beta::Power {
                        kappa: 0.3,
                        r: 1.5,
                        x_cap: None,
                    },
                )?
            }),
            ("doeblin", fixtures::doeblin(fixtures::DOEBLIN_K)?),
        ];
        for (name, m) in &models {
            let mm = m.mean_rates()?;
            let q = m.rates().generator();
            let k = m.size();
            let mut exact = true;
            for x in 0..k {
                for y in 0..k {
                    let want = q.get(x, y) + if y == 0 { m.beta()[x] } else { 0.0 };
                    exact &= mm.a.get(x, y) == want;
                }
            }
            c.check(exact, format!("{name}: A equals Q plus beta in column 1 entrywise"));
        }
        Ok(())
    })
}

/// `sign(λ*) = sign(κ₀ - 1)` and the Laplace relation.
pub fn criterion_3() -> CriterionReport {
    run(3, "criticality equivalence", 60, |c| {
        type Build = Box<dyn Fn(f64) -> Result<BranchingModel>>;
        let families: Vec<(&str, Build)> = vec![
            ("single(d=1)", Box::new(|kappa| fixtures::single(kappa, 1.0))),
            ("M3", Box::new(fixtures::m3)),
            (
                "gompertz(1,20,60)",
                Box::new(|kappa| fixtures::gompertz(fixtures::GOMPERTZ_K, kappa)),
            ),
        ];
        for (name, build) in &families {
            let ks = critical_kappa(build, 1e-13)?;
            for mult in [0.5, 2.0] {
                let m = build(mult * ks)?;
                let lambda = triple_of_a(&m)?.lambda_star;
                let k0 = m.kappa0_green()?;
                c.check(
                    lambda.signum() == (k0 - 1.0).signum(),
                    format!("{name} kappa={mult}kappa*: lambda*={lambda:.6e} kappa0={k0:.9}"),
                );
                if lambda > 0.0 {
                    let l = m.laplace_gamma1(lambda, 1e-9)?;
                    c.check(
                        (l.value - 1.0).abs() < 1e-5,
                        format!("{name} kappa={mult}kappa*: int e^(-lambda* t) gamma1 = {:.12}", l.value),
                    );
                }
            }
        }
        Ok(())
    })
}

/// Extinction of the subcritical fixture, growth of the supercritical one.
pub fn criterion_4() -> CriterionReport {
    run(4, "extinction and exponential growth", 300, |c| {
        let ks = fixtures::gompertz_kappa_star(fixtures::GOMPERTZ_K)?;
        let sub = fixtures::gompertz(fixtures::GOMPERTZ_K, 0.5 * ks)?;
        let a = sub.mean_rates()?.a;
        let replicas = 1000;
        let mut horizon = 1.0;
        let mass = loop {
            let mass: f64 = mean_row(&a, horizon)?.iter().sum();
            if replicas as f64 * mass <= 0.01 || horizon > 1e6 {
                break mass;
            }
            horizon *= 2.0;
        };
        let cfg = RunConfig::new(fixtures::GOMPERTZ_K, horizon, vec![horizon], replicas, SEED);
        let trs = run_ensemble(&sub, &cfg)?;
        let alive = survival_stats(&trs, &cfg, None)[0].survivors;
        c.check(
            alive == 0,
            format!("subcritical: {alive}/{replicas} alive at adaptive horizon {horizon} (E|eta_T| = {mass:.3e})"),
        );

        let k = fixtures::SIM_K;
        let sup = fixtures::gompertz(k, fixtures::SIM_KAPPA_MULT * fixtures::gompertz_kappa_star(k)?)?;
        let triple = triple_of_a(&sup)?;
        let q1 = sup.extinction_fixed_point(1e-12, 10_000_000)?.q[0];
        let t = growth_horizon(&triple, q1);
        let cfg = RunConfig::new(k, t, vec![0.5 * t, 0.75 * t, t], 200, SEED + 1);
        let trs = run_ensemble(&sup, &cfg)?;
        let rows = survival_stats(&trs, &cfg, None);
        let last = rows.last().expect("three snapshots");
        c.check(
            last.survivors > 0,
            format!(
                "supercritical: surviving fraction {} (extinction q(1) = {q1:.4})",
                last.survival_fraction
            ),
        );
        let (lo, hi) = (last.ci_lo.unwrap_or(f64::NAN), last.ci_hi.unwrap_or(f64::NAN));
        c.check(
            lo <= triple.lambda_star && triple.lambda_star <= hi,
            format!(
                "supercritical: lambda*={:.6} in growth CI [{lo:.6}, {hi:.6}] over [{:.3}, {:.3}] ({} replicas)",
                triple.lambda_star, rows[1].time, last.time, last.growth_samples
            ),
        );
        Ok(())
    })
}

/// Horizon where the mean survivor population is `10⁴`.
fn growth_horizon(triple: &SpectralTriple, q1: f64) -> f64 {
    (1e4 * (1.0 - q1) / triple.mu[0]).ln() / triple.lambda_star
}

/// Survivor proportions approach `ν`.
pub fn criterion_5() -> CriterionReport {
    run(5, "proportions converge to nu", 600, |c| {
        let k = fixtures::SIM_K;
        let m = fixtures::gompertz(k, fixtures::SIM_KAPPA_MULT * fixtures::gompertz_kappa_star(k)?)?;
        let triple = triple_of_a(&m)?;
        let q1 = m.extinction_fixed_point(1e-12, 10_000_000)?.q[0];
        let t = growth_horizon(&triple, q1);
        let cfg = RunConfig::new(k, t, vec![0.5 * t, 0.75 * t, t], 200, SEED + 2);
        let trs = run_ensemble(&m, &cfg)?;
        let rows = survival_stats(&trs, &cfg, Some(&triple.nu));
        let mut sizes: Vec<u64> = trs
            .iter()
            .filter_map(|tr| tr.snapshots.last())
            .map(|s| s.total)
            .filter(|&n| n > 0)
            .collect();
        sizes.sort_unstable();
        let median = sizes.get(sizes.len() / 2).copied().unwrap_or(0);
        let tv: Vec<f64> = rows.iter().map(|r| r.tv_to_nu.unwrap_or(f64::NAN)).collect();
        c.check(
            tv[2] < 0.05,
            format!(
                "TV at T={t:.3}: {:.5} (median survivor size {median}, {} survivors)",
                tv[2], rows[2].survivors
            ),
        );
        c.check(
            tv[0] > tv[1] && tv[1] > tv[2],
            format!(
                "TV decreasing over T/2, 3T/4, T: {:.5}, {:.5}, {:.5}",
                tv[0], tv[1], tv[2]
            ),
        );
        Ok(())
    })
}

/// Doeblin route on the shifted mean rates.
pub fn criterion_6() -> CriterionReport {
    run(6, "Doeblin regime", 60, |c| {
        let k = fixtures::DOEBLIN_K;
        let mut ratios = Vec::new();
        for kk in [k, 2 * k] {
            let m = fixtures::doeblin(kk)?;
            let a_shift = m.mean_rates()?.a_shift;
            let cert = check_doeblin(&a_shift)?;
            let beta = m.beta();
            let sup_b = beta.iter().cloned().fold(f64::MIN, f64::max);
            let inf_b = beta.iter().cloned().fold(f64::MAX, f64::min);
            let inf_net = (1..=kk)
                .map(|x| beta[x - 1] - m.rates().absorption(x))
                .fold(f64::MAX, f64::min);
            c.check(
                sup_b - inf_net < inf_b,
                format!(
                    "K={kk}: sup beta - inf(beta - q(.,0)) = {:.6} < inf beta = {inf_b}",
                    sup_b - inf_net
                ),
            );
            c.check(
                cert.verdict.is_pass(),
                format!(
                    "K={kk}: doeblin alpha={:.6} C={:.6} verdict {}",
                    cert.alpha, cert.c, cert.verdict
                ),
            );
            let t = perron_triple(&a_shift, PERRON_TOL, PERRON_ITER)?;
            ratios.push(t.mu_ratio());
            if kk == k {
                let kernel = killed_time_kernel(&a_shift, &[1], 1.0, 1e-15)?;
                let prof = escape_prob_profile(&kernel, &[1], 1, 30)?;
                let bound = (-cert.alpha).exp() + 0.01;
                c.check(
                    prof.rho_hat <= bound,
                    format!(
                        "K={kk}: escape rho_hat={:.6} <= e^-alpha + 0.01 = {bound:.6}",
                        prof.rho_hat
                    ),
                );
                let shifted = AbsorbedRates::from_generator(&a_shift)?;
                let grid: Vec<f64> = (1..=20).map(|i| 5.0 * i as f64).collect();
                let d = shifted.decay_estimate(1, &grid, 1e-9)?;
                c.check(
                    d.gamma_hat <= cert.c + 1e-9,
                    format!("K={kk}: decay gamma_hat={:.6} <= C={:.6}", d.gamma_hat, cert.c),
                );
            }
        }
        let drift = (ratios[1] / ratios[0] - 1.0).abs();
        c.check(
            drift < 0.05,
            format!(
                "mu max/min ratio {:.6} -> {:.6} (drift {:.4})",
                ratios[0], ratios[1], drift
            ),
        );
        Ok(())
    })
}

/// Yaglom limit equals the quasi-stationary distribution.
pub fn criterion_7() -> CriterionReport {
    run(7, "Yaglom limit and QSD", 30, |c| {
        let tol = 1e-11;
        let chains = [
            ("M3", fixtures::m3_rates()?),
            (
                "gompertz(1,20,60)",
                build_gompertz_bd(
                    fixtures::GOMPERTZ_A,
                    fixtures::GOMPERTZ_N,
                    fixtures::GOMPERTZ_K,
                    TailPolicy::Kill,
                )?,
            ),
        ];
        for (name, q) in &chains {
            let nu = perron_triple(q.generator(), PERRON_TOL, PERRON_ITER)?.nu;
            let first = q.yaglom_iterate(1, 1.0, tol, 1_000_000)?;
            let last = q.yaglom_iterate(q.size(), 1.0, tol, 1_000_000)?;
            let dev = first
                .distribution
                .weights
                .iter()
                .zip(&nu)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            c.check(dev < 1e-8, format!("{name}: max |yaglom - nu| = {dev:.3e}"));
            let spread = first.distribution.tv(&last.distribution);
            c.check(
                spread < 2.0 * tol,
                format!(
                    "{name}: starts 1 and {} differ by TV {spread:.3e} (2 tol = {:.1e})",
                    q.size(),
                    2.0 * tol
                ),
            );
        }
        Ok(())
    })
}

/// Monte Carlo means against the mean semigroup.
pub fn criterion_8() -> CriterionReport {
    run(8, "mean semigroup link", 300, |c| {
        let k = fixtures::SIM_K;
        let m = fixtures::gompertz(k, fixtures::SIM_KAPPA_MULT * fixtures::gompertz_kappa_star(k)?)?;
        let t = 5.0;
        let exact = mean_row(&m.mean_rates()?.a, t)?;
        let total: f64 = exact.iter().sum();
        c.check(total <= 1e3, format!("E|eta_t| = {total:.4} at t={t}"));
        let cfg = RunConfig::new(k, t, vec![t], 10_000, SEED + 3);
        let trs = run_ensemble(&m, &cfg)?;
        let n = trs.len() as f64;
        for y in [1usize, 2, 5] {
            let xs: Vec<f64> = trs.iter().map(|tr| tr.snapshots[0].counts[y - 1] as f64).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            c.check(
                (mean - exact[y - 1]).abs() <= 3.0 * se,
                format!(
                    "y={y}: MC {mean:.5} vs e^(tA)(1,y) {:.5} (3 SE = {:.5})",
                    exact[y - 1],
                    3.0 * se
                ),
            );
        }
        Ok(())
    })
}

/// The second-moment condition is finite and stable in the truncation.
pub fn criterion_9() -> CriterionReport {
    run(9, "Moy condition", 30, |c| {
        let kappa = 2.0 * fixtures::gompertz_kappa_star(fixtures::GOMPERTZ_K)?;
        let mut values = Vec::new();
        for k in [fixtures::GOMPERTZ_K, 2 * fixtures::GOMPERTZ_K] {
            let m = fixtures::gompertz(k, kappa)?;
            let t = perron_triple(&m.skeleton_mean(), PERRON_TOL, PERRON_ITER)?;
            let v = m.moy_condition(&t.nu, &t.mu)?;
            c.check(
                v.value.is_finite() && !v.divergent,
                format!("K={k}: moy sum {:.9} (tail share {:.3e})", v.value, v.tail_fraction),
            );
            values.push(v.value);
        }
        let rel = (values[1] / values[0] - 1.0).abs();
        c.check(rel < 0.01, format!("relative change K -> 2K: {rel:.3e}"));
        Ok(())
    })
}

/// Birth–death certificate and hitting-time plateau.
pub fn criterion_10() -> CriterionReport {
    run(10, "birth-death certificate", 30, |c| {
        let g = build_gompertz_bd(1.0, 100.0, 1000, TailPolicy::Kill)?;
        let cert = check_bd_conditions(&g)?;
        c.check(
            cert.verdict_a.is_pass() && cert.verdict_b.is_pass() && cert.ratio_limit <= 0.05,
            format!(
                "gompertz(1,100,1000): (a) {} (b) {} ell={:.4} (raw tail max {:.4})",
                cert.verdict_a, cert.verdict_b, cert.ratio_limit, cert.ratio_tail_max
            ),
        );
        c.check(
            !cert.verdict_c.is_pass(),
            format!(
                "gompertz(1,100,1000): (c) {} (tail {:.4} of sum {:.4})",
                cert.verdict_c, cert.reciprocal_tail, cert.reciprocal_sum
            ),
        );
        let s = check_bd_conditions(&fixtures::fast_descent(1000)?)?;
        c.check(
            s.verdict.is_pass(),
            format!(
                "q(x,x-1)=x^2: (a) {} (b) {} (c) {} ell={:.4}",
                s.verdict_a, s.verdict_b, s.verdict_c, s.ratio_limit
            ),
        );
        let big = check_bd_conditions(&fixtures::fast_descent(10_000)?)?;
        let basel = std::f64::consts::PI.powi(2) / 6.0;
        c.check(
            (big.reciprocal_sum - basel).abs() < 1e-3,
            format!("q(x,x-1)=x^2, K=1e4: sum 1/x^2 = {:.6} vs pi^2/6", big.reciprocal_sum),
        );
        let h200 = build_gompertz_bd(1.0, 100.0, 200, TailPolicy::Reflect)?.expected_hitting_time(1)?;
        let h400 = build_gompertz_bd(1.0, 100.0, 400, TailPolicy::Reflect)?.expected_hitting_time(1)?;
        let base = h200[99];
        let top = h200[99..].iter().cloned().fold(f64::MIN, f64::max);
        c.check(
            top - base < 0.05 * base,
            format!(
                "hitting time plateau: max h(100..200) - h(100) = {:.4e}, h(100) = {base:.4}",
                top - base
            ),
        );
        let agree = h200
            .iter()
            .zip(&h400)
            .skip(1)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        c.check(
            agree < 0.01,
            format!("hitting times K=200 vs K=400: max relative gap {agree:.3e}"),
        );
        Ok(())
    })
}

/// Criteria in order.
pub const CRITERIA: [fn() -> CriterionReport; 10] = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
];

pub fn run_all() -> Vec<CriterionReport> {
    CRITERIA.iter().map(|f| f()).collect()
}
