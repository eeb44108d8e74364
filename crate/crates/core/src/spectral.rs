//! Perron triples `(λ*, ν, μ)` of truncated rates matrices.
//!
//! Normalization is fixed everywhere: `Σ ν = 1` and `Σ ν μ = 1`. The
//! continuous-time growth rate `λ*` and the skeleton growth `e^{λ*}` are
//! exposed separately; there is no bare "R".

use std::io::Write;

use crate::branching::BranchingModel;
use crate::chain::AbsorbedRates;
use crate::error::{Error, Result};
use crate::fmt_sig;
use crate::linalg::{expm_action, total_variation, Side, SparseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTriple {
    pub lambda_star: f64,
    pub nu: Vec<f64>,
    pub mu: Vec<f64>,
    /// `‖ν A - λ* ν‖₁`.
    pub residual_left: f64,
    /// `‖A μ - λ* μ‖∞`.
    pub residual_right: f64,
    pub k: usize,
    pub iterations: usize,
}

impl SpectralTriple {
    /// Growth factor of the unit-time (or one-generation) kernel.
    pub fn skeleton_growth(&self) -> f64 {
        self.lambda_star.exp()
    }

    pub fn mu_ratio(&self) -> f64 {
        let max = self.mu.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.mu.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    /// `Σ_{x > K/2} ν(x)`.
    pub fn upper_half_mass(&self) -> f64 {
        self.nu[self.k / 2..].iter().sum()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for x in 1..=self.k {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.k,
                fmt_sig(self.lambda_star),
                fmt_sig(self.residual_left),
                fmt_sig(self.residual_right),
                x,
                fmt_sig(self.nu[x - 1]),
                fmt_sig(self.mu[x - 1])
            )?;
        }
        Ok(())
    }
}

pub const TRIPLE_CSV_HEADER: &str = "K,lambda_star,residual_left,residual_right,x,nu_x,mu_x";

/// Which matrix of a model to analyze.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// Driving generator `Q`.
    Q,
    /// Mean rates `A`.
    #[default]
    A,
    /// Shifted `Ã = A - β̄ I`.
    AShift,
    /// Skeleton mean matrix `M`.
    Skeleton,
}

impl MatrixKind {
    pub fn select(self, model: &BranchingModel) -> Result<SparseMatrix> {
        Ok(match self {
            MatrixKind::Q => model.rates().generator().clone(),
            MatrixKind::A => model.mean_rates()?.a,
            MatrixKind::AShift => model.mean_rates()?.a_shift,
            MatrixKind::Skeleton => model.mean_rates()?.m,
        })
    }
}

struct PowerResult {
    vector: Vec<f64>,
    iterations: usize,
}

/// Power iteration on `B = M + sI`, stopped on the eigen-residual of `M`.
fn power_side(m: &SparseMatrix, shift: f64, side: Side, tol: f64, max_iter: usize) -> Result<PowerResult> {
    let n = m.dim();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mv = match side {
            Side::Left => m.vec_mul(v),
            Side::Right => m.mul_vec(v),
        };
        mv.iter().zip(v).map(|(a, b)| a + shift * b).collect()
    };
    let norm = |v: &[f64]| -> f64 {
        match side {
            Side::Left => v.iter().sum(),
            Side::Right => v.iter().cloned().fold(0.0, f64::max),
        }
    };
    let mut v = vec![1.0; n];
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut last = f64::INFINITY;
    for it in 1..=max_iter {
        let w = apply(&v);
        let rho = norm(&w) / norm(&v);
        let res = match side {
            Side::Left => w.iter().zip(&v).map(|(a, b)| (a - rho * b).abs()).sum::<f64>(),
            Side::Right => w.iter().zip(&v).map(|(a, b)| (a - rho * b).abs()).fold(0.0, f64::max),
        };
        let s = norm(&w);
        v = w.into_iter().map(|x| x / s).collect();
        last = res;
        if res < tol * 0.25 {
            return Ok(PowerResult {
                vector: v,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_change: last,
    })
}

/// Perron triple of a Metzler matrix irreducible on `1..=K`.
pub fn perron_triple(m: &SparseMatrix, tol: f64, max_iter: usize) -> Result<SpectralTriple> {
    let k = m.dim();
    if k == 0 {
        return Err(Error::EmptyChain);
    }
    if !m.is_metzler() {
        return Err(Error::InvalidParameter(
            "matrix has negative off-diagonal entries".into(),
        ));
    }
    if let Some(u) = m.first_unreachable() {
        return Err(Error::ReducibleChain {
            size: k,
            unreachable: u + 1,
        });
    }
    let shift = (0..k).map(|i| m.diag(i).abs()).fold(0.0, f64::max) + 1.0;
    let right = power_side(m, shift, Side::Right, tol, max_iter)?;
    let left = power_side(m, shift, Side::Left, tol, max_iter)?;
    let nu = left.vector;
    let mut mu = right.vector;
    let am = m.mul_vec(&mu);
    let num: f64 = nu.iter().zip(&am).map(|(a, b)| a * b).sum();
    let den: f64 = nu.iter().zip(&mu).map(|(a, b)| a * b).sum();
    let lambda_star = num / den;
    mu.iter_mut().for_each(|x| *x /= den);
    let residual_left: f64 = m
        .vec_mul(&nu)
        .iter()
        .zip(&nu)
        .map(|(a, b)| (a - lambda_star * b).abs())
        .sum();
    let mu_max = mu.iter().cloned().fold(0.0, f64::max);
    let residual_right = m
        .mul_vec(&mu)
        .iter()
        .zip(&mu)
        .map(|(a, b)| (a - lambda_star * b).abs())
        .fold(0.0, f64::max);
    if residual_left > tol || residual_right > tol * mu_max.max(1.0) {
        return Err(Error::NoConvergence {
            iterations: left.iterations.max(right.iterations),
            last_change: residual_left.max(residual_right),
        });
    }
    Ok(SpectralTriple {
        lambda_star,
        nu,
        mu,
        residual_left,
        residual_right,
        k,
        iterations: left.iterations.max(right.iterations),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub triples: Vec<SpectralTriple>,
    /// `TV(ν_{K_i}, ν_{K_{i+1}})`, zero-padding the shorter vector.
    pub tv_successive: Vec<f64>,
    pub mu_ratios: Vec<f64>,
    pub upper_half_mass: Vec<f64>,
}

impl SweepReport {
    pub fn lambda_nondecreasing(&self) -> bool {
        self.triples.windows(2).all(|w| w[1].lambda_star >= w[0].lambda_star)
    }
}

/// Perron triples of the chosen matrix for each truncation in `k_list`.
pub fn truncation_sweep<F>(
    build: F,
    k_list: &[usize],
    kind: MatrixKind,
    tol: f64,
    max_iter: usize,
) -> Result<SweepReport>
where
    F: Fn(usize) -> Result<BranchingModel>,
{
    if k_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("K_list must be nondecreasing".into()));
    }
    let triples = k_list
        .iter()
        .map(|&k| {
            let model = build(k)?;
            perron_triple(&kind.select(&model)?, tol, max_iter)
        })
        .collect::<Result<Vec<_>>>()?;
    let tv_successive = triples
        .windows(2)
        .map(|w| {
            let n = w[1].k.max(w[0].k);
            let pad = |v: &[f64]| {
                let mut p = v.to_vec();
                p.resize(n, 0.0);
                p
            };
            total_variation(&pad(&w[0].nu), &pad(&w[1].nu))
        })
        .collect();
    let mu_ratios = triples.iter().map(SpectralTriple::mu_ratio).collect();
    let upper_half_mass = triples.iter().map(SpectralTriple::upper_half_mass).collect();
    Ok(SweepReport {
        triples,
        tv_successive,
        mu_ratios,
        upper_half_mass,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvjRow {
    pub t: f64,
    /// `max_{x,y} |P_x(X_t = y | τ > t) - ν(y)|`.
    pub nu_deviation: f64,
    /// `max_x |e^{-λ* t} P_x(τ > t) - μ(x)|`.
    pub mu_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvjReport {
    pub rows: Vec<SvjRow>,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Checks the conditioned limits `P_x(X_t = ·| τ > t) → ν` and
/// `e^{-λ* t} P_x(τ > t) → μ(x)` along `t_grid` for every start `x`.
///
/// Works for any Metzler matrix; for super-Markovian rows, `P_x(τ > t)`
/// reads as the total mass of row `x` of `e^{tA}`.
pub fn svj_consistency(m: &SparseMatrix, triple: &SpectralTriple, t_grid: &[f64], tol: f64) -> Result<SvjReport> {
    let k = m.dim();
    if triple.k != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: triple.k,
        });
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] < 0.0 {
        return Err(Error::InvalidParameter("t_grid must be nonempty and increasing".into()));
    }
    let mut rows: Vec<SvjRow> = t_grid
        .iter()
        .map(|&t| SvjRow {
            t,
            nu_deviation: 0.0,
            mu_deviation: 0.0,
        })
        .collect();
    let shift = (0..k).map(|i| m.row_sum(i)).fold(0.0, f64::max);
    let uniform = (0..k).map(|i| shift - m.diag(i)).fold(0.0, f64::max).max(1.0);
    for x in 0..k {
        let mut phi = vec![0.0; k];
        phi[x] = 1.0;
        let mut log_mass = 0.0;
        let mut prev = 0.0;
        for (row, &t) in rows.iter_mut().zip(t_grid) {
            let dt = t - prev;
            let cap = (uniform * dt * 4.0 + 200.0 * (uniform * dt).sqrt() + 10_000.0) as usize;
            let r = expm_action(m, &phi, dt, Side::Left, 1e-16, cap)?;
            let s: f64 = r.vector.iter().sum();
            log_mass += r.log_scale + s.ln();
            phi = r.vector.into_iter().map(|v| v / s).collect();
            prev = t;
            let dev_nu = phi
                .iter()
                .zip(&triple.nu)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let scaled = (log_mass - triple.lambda_star * t).exp();
            row.nu_deviation = row.nu_deviation.max(dev_nu);
            row.mu_deviation = row.mu_deviation.max((scaled - triple.mu[x]).abs());
        }
    }
    let last = rows.last().expect("nonempty grid");
    let max_deviation = last.nu_deviation.max(last.mu_deviation);
    Ok(SvjReport {
        pass: max_deviation < tol,
        max_deviation,
        rows,
    })
}

/// Perron triple of the sub-Markovian generator of an absorbed chain.
pub fn chain_triple(q: &AbsorbedRates, tol: f64, max_iter: usize) -> Result<SpectralTriple> {
    perron_triple(q.generator(), tol, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_triple() {
        let m = SparseMatrix::from_rows(1, vec![vec![(0, 0.75)]]);
        let t = perron_triple(&m, 1e-12, 100).unwrap();
        assert!((t.lambda_star - 0.75).abs() < 1e-15);
        assert_eq!(t.nu, vec![1.0]);
        assert!((t.mu[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_two_state() {
        let m = SparseMatrix::from_rows(2, vec![vec![(0, -3.0), (1, 2.0)], vec![(0, 2.0), (1, -3.0)]]);
        let t = perron_triple(&m, 1e-12, 10_000).unwrap();
        assert!((t.nu[0] - 0.5).abs() < 1e-12);
        assert!((t.lambda_star + 1.0).abs() < 1e-12);
    }

    #[test]
    fn reducible_rejected() {
        let m = SparseMatrix::from_rows(2, vec![vec![(0, -1.0), (1, 1.0)], vec![(1, -1.0)]]);
        assert!(matches!(
            perron_triple(&m, 1e-10, 10),
            Err(Error::ReducibleChain { .. })
        ));
    }

    #[test]
    fn scalar_svj() {
        let m = SparseMatrix::from_rows(1, vec![vec![(0, -2.0)]]);
        let t = perron_triple(&m, 1e-12, 100).unwrap();
        let r = svj_consistency(&m, &t, &[1.0, 5.0, 10.0], 1e-10).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
