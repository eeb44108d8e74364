//! Finite-truncation verdicts for the R-positivity criteria.
//!
//! Every verdict is a statement about `1..=K` only. Callers that want an
//! overall answer re-run at `2K` and require the verdict to be stable.

use std::fmt::Write as _;

use crate::chain::AbsorbedRates;
use crate::error::{Error, Result};
use crate::fmt_sig;
use crate::linalg::{expm_action, linear_fit, DenseMatrix, Side, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Flat `key=value` rendering.
pub trait KeyValue {
    fn pairs(&self) -> Vec<(String, String)>;

    fn to_kv(&self, prefix: &str) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(s, "{prefix}{k}={v}");
        }
        s
    }
}

fn list<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub v: Vec<f64>,
    /// `(x, V̇(x)/V(x))` for every evaluated type.
    pub ratio_tail: Vec<(usize, f64)>,
    pub u1: Vec<usize>,
    pub rho: f64,
    pub verdict: Verdict,
    /// Types that break the tail requirements.
    pub offending: Vec<usize>,
}

impl KeyValue for LyapunovCertificate {
    fn pairs(&self) -> Vec<(String, String)> {
        let last = self.ratio_tail.last().map_or(f64::NAN, |r| r.1);
        vec![
            ("verdict".into(), self.verdict.to_string()),
            ("rho".into(), fmt_sig(self.rho)),
            ("u1_max".into(), self.u1.last().map_or("none".into(), |x| x.to_string())),
            ("u1_size".into(), self.u1.len().to_string()),
            ("evaluated".into(), self.ratio_tail.len().to_string()),
            ("ratio_last".into(), fmt_sig(last)),
            ("offending".into(), list(&self.offending)),
        ]
    }
}

/// Checks `V(x) → ∞` and `V̇(x)/V(x) → -∞` on the truncation, where
/// `V̇(x) = Σ_y a(x, y) V(y)` with `V(0) = 0`.
///
/// Types in `excluded` (e.g. rows whose rates were folded at the
/// truncation boundary) are not evaluated.
pub fn check_lyapunov(a: &SparseMatrix, v: &[f64], rho_target: f64, excluded: &[usize]) -> Result<LyapunovCertificate> {
    let k = a.dim();
    if v.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: v.len(),
        });
    }
    if let Some((i, &val)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::NonpositiveV { x: i + 1, value: val });
    }
    if !(rho_target > 0.0 && rho_target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho_target must lie in (0, 1), got {rho_target}"
        )));
    }
    let drift = a.mul_vec(v);
    let ratio_tail: Vec<(usize, f64)> = (1..=k)
        .filter(|x| !excluded.contains(x))
        .map(|x| (x, drift[x - 1] / v[x - 1]))
        .collect();
    let log_rho = rho_target.ln();
    let n = ratio_tail.len();
    let last_above = ratio_tail.iter().rposition(|&(_, r)| r > log_rho);
    let witness_len = last_above.map_or(1, |p| p + 1).min(n);
    let u1: Vec<usize> = ratio_tail[..witness_len].iter().map(|&(x, _)| x).collect();
    let end = (n / 10).max(2).min(n.saturating_sub(1));
    let strict_end = ratio_tail.windows(2).rev().take(end).all(|w| w[1].1 < w[0].1);
    let mut offending = Vec::new();
    let verdict = if n < 2 {
        Verdict::Inconclusive
    } else if witness_len == n {
        // V̇/V never drops below log ρ inside the truncation
        offending.extend(ratio_tail.iter().filter(|&&(_, r)| r > log_rho).map(|&(x, _)| x));
        if strict_end {
            Verdict::Inconclusive
        } else {
            Verdict::Fail
        }
    } else {
        let tail = &ratio_tail[witness_len - 1..];
        offending.extend(tail.windows(2).filter(|w| w[1].1 > w[0].1).map(|w| w[1].0));
        let v_increasing = tail.windows(2).all(|w| v[w[1].0 - 1] > v[w[0].0 - 1]);
        if offending.is_empty() && strict_end && v_increasing && tail.len() >= 3 {
            Verdict::Pass
        } else {
            if !strict_end {
                offending.extend(ratio_tail.iter().rev().take(end + 1).map(|&(x, _)| x));
            }
            if tail.len() < 3 || !v_increasing {
                // too few states past the witness set to see V̇/V diverge
                offending.extend(tail.iter().map(|&(x, _)| x));
            }
            offending.sort_unstable();
            offending.dedup();
            Verdict::Fail
        }
    };
    Ok(LyapunovCertificate {
        v: v.to_vec(),
        ratio_tail,
        u1,
        rho: rho_target,
        verdict,
        offending,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoeblinCertificate {
    pub alpha: f64,
    pub c: f64,
    /// `a(z) = min_{x≠z} a(x, z)` per type.
    pub per_state_alpha: Vec<f64>,
    pub verdict: Verdict,
    /// Types with `a(z) > 0`.
    pub carriers: Vec<usize>,
    /// Some carrier sits in the top 10% of the truncation.
    pub tail_carried: bool,
    /// `K = 1`: no other type can feed `z`, so `α = 0`.
    pub degenerate: bool,
}

impl KeyValue for DoeblinCertificate {
    fn pairs(&self) -> Vec<(String, String)> {
        vec![
            ("verdict".into(), self.verdict.to_string()),
            ("alpha".into(), fmt_sig(self.alpha)),
            ("C".into(), fmt_sig(self.c)),
            ("carriers".into(), list(&self.carriers)),
            ("tail_carried".into(), self.tail_carried.to_string()),
            ("degenerate".into(), self.degenerate.to_string()),
        ]
    }
}

/// `α = Σ_z min_{x≠z} a(x, z)` against `C = max_x a(x, 0)`.
pub fn check_doeblin(a: &SparseMatrix) -> Result<DoeblinCertificate> {
    let k = a.dim();
    if k == 0 {
        return Err(Error::EmptyChain);
    }
    if !a.is_metzler() {
        return Err(Error::InvalidParameter(
            "rates have negative off-diagonal entries".into(),
        ));
    }
    let per_state_alpha: Vec<f64> = if k == 1 {
        vec![0.0]
    } else {
        (0..k)
            .map(|z| {
                (0..k)
                    .filter(|&x| x != z)
                    .map(|x| a.get(x, z))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let alpha: f64 = per_state_alpha.iter().sum();
    let c = (0..k).map(|x| -a.row_sum(x)).fold(0.0, f64::max);
    let carriers: Vec<usize> = per_state_alpha
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, _)| i + 1)
        .collect();
    let cutoff = k - k / 10;
    let tail_carried = k >= 10 && carriers.iter().any(|&z| z > cutoff);
    Ok(DoeblinCertificate {
        alpha,
        c,
        per_state_alpha,
        verdict: Verdict::from_bool(alpha > c),
        carriers,
        tail_carried,
        degenerate: k == 1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathCertificate {
    pub monotone_down_rates: bool,
    pub first_nonmonotone: Option<usize>,
    /// Largest `q(x,x+1)/q(x,x-1)` over the last 10% of the truncation.
    pub ratio_tail_max: f64,
    /// Extrapolated `ℓ` (intercept of the tail ratios against `1/ln(x+1)`).
    pub ratio_limit: f64,
    /// `Σ_{x≤K} 1/q(x,x-1)`.
    pub reciprocal_sum: f64,
    /// `Σ_{K/2≤x≤K} 1/q(x,x-1)`.
    pub reciprocal_tail: f64,
    /// Ratio of consecutive reciprocal terms at the end of the truncation.
    pub ratio_test: f64,
    pub verdict_a: Verdict,
    pub verdict_b: Verdict,
    pub verdict_c: Verdict,
    pub verdict: Verdict,
}

impl KeyValue for BirthDeathCertificate {
    fn pairs(&self) -> Vec<(String, String)> {
        vec![
            ("verdict".into(), self.verdict.to_string()),
            ("a_monotone".into(), self.verdict_a.to_string()),
            ("b_ratio_limit".into(), self.verdict_b.to_string()),
            ("c_reciprocal_sum".into(), self.verdict_c.to_string()),
            ("ell".into(), fmt_sig(self.ratio_limit)),
            ("ratio_tail_max".into(), fmt_sig(self.ratio_tail_max)),
            ("reciprocal_sum".into(), fmt_sig(self.reciprocal_sum)),
            ("reciprocal_tail".into(), fmt_sig(self.reciprocal_tail)),
            ("ratio_test".into(), fmt_sig(self.ratio_test)),
        ]
    }
}

/// Cauchy-tail threshold for the reciprocal down-rate series.
pub const RECIPROCAL_TAIL_THRESHOLD: f64 = 1e-3;

/// Conditions (a) monotone down-rates, (b) `ℓ < 1`, (c) `Σ 1/q(x,x-1) < ∞`
/// for a birth–death chain; `q(1,0)` plays the role of the down-rate at 1.
pub fn check_bd_conditions(q: &AbsorbedRates) -> Result<BirthDeathCertificate> {
    let k = q.size();
    for x in 1..=k {
        for (y, r) in q.transitions(x) {
            if r > 0.0 && x.abs_diff(y) != 1 {
                return Err(Error::NotBirthDeath { x, y });
            }
        }
        if x > 1 && q.absorption(x) > q.tail_rate(x) * (1.0 + 1e-12) {
            return Err(Error::NotBirthDeath { x, y: 0 });
        }
    }
    if k < 3 {
        return Err(Error::InvalidParameter("birth-death checks need K >= 3".into()));
    }
    let down = |x: usize| if x == 1 { q.absorption(1) } else { q.rate(x, x - 1) };
    let first_nonmonotone = (2..=k).find(|&x| down(x) < down(x - 1));
    let monotone = first_nonmonotone.is_none();

    let tail_len = (k / 10).max(2);
    let tail: Vec<usize> = ((k - tail_len)..k).filter(|&x| x >= 2).collect();
    let ratios: Vec<f64> = tail.iter().map(|&x| q.rate(x, x + 1) / down(x)).collect();
    let ratio_tail_max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let basis: Vec<f64> = tail.iter().map(|&x| 1.0 / (x as f64 + 1.0).ln()).collect();
    let (intercept, _) = linear_fit(&basis, &ratios);
    let ratio_limit = intercept.max(0.0);

    let recips: Vec<f64> = (1..=k).map(|x| 1.0 / down(x)).collect();
    let reciprocal_sum: f64 = recips.iter().sum();
    let reciprocal_tail: f64 = recips[k / 2 - 1..].iter().sum();
    let ratio_test = recips[k - 1] / recips[k - 2];

    let verdict_a = Verdict::from_bool(monotone);
    let verdict_b = Verdict::from_bool(ratio_limit < 1.0 && ratio_tail_max < 1.0);
    // the ratio test alone cannot separate Σ 1/x² from Σ 1/(x ln x) at finite
    // K, so convergence also needs a small Cauchy tail
    let converges = ratio_test < 1.0 && reciprocal_tail < RECIPROCAL_TAIL_THRESHOLD * reciprocal_sum;
    let verdict_c = Verdict::from_bool(reciprocal_sum.is_finite() && converges);
    let verdict = Verdict::from_bool(verdict_a.is_pass() && verdict_b.is_pass() && verdict_c.is_pass());
    Ok(BirthDeathCertificate {
        monotone_down_rates: monotone,
        first_nonmonotone,
        ratio_tail_max,
        ratio_limit,
        reciprocal_sum,
        reciprocal_tail,
        ratio_test,
        verdict_a,
        verdict_b,
        verdict_c,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeProfile {
    /// `P_{x0}(τ > n; X_1, …, X_n ∉ U1)` for `n = 1..=n_max`.
    pub probs: Vec<f64>,
    /// Geometric rate fitted on the tail half of the positive terms.
    pub rho_hat: f64,
}

/// Exact escape probabilities from `U1` under a one-step sub-stochastic
/// kernel.
pub fn escape_prob_profile(kernel: &DenseMatrix, u1: &[usize], x0: usize, n_max: usize) -> Result<EscapeProfile> {
    let k = kernel.dim();
    if u1.is_empty() || u1.iter().any(|&x| x == 0 || x > k) {
        return Err(Error::InvalidParameter("U1 must be a nonempty set of types".into()));
    }
    if !u1.contains(&x0) {
        return Err(Error::InvalidParameter(format!("start type {x0} must belong to U1")));
    }
    let mut inside = vec![false; k];
    for &x in u1 {
        inside[x - 1] = true;
    }
    let mut v: Vec<f64> = kernel.row(x0 - 1).to_vec();
    let mut probs: Vec<f64> = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        if n > 1 {
            v = kernel.vec_mul(&v);
        }
        for (i, w) in v.iter_mut().enumerate() {
            if inside[i] {
                *w = 0.0;
            }
        }
        probs.push(v.iter().sum());
    }
    let positive: Vec<(f64, f64)> = probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| ((i + 1) as f64, p.ln()))
        .collect();
    let rho_hat = if positive.len() < 2 {
        0.0
    } else {
        let half = &positive[positive.len() / 2..];
        let (xs, ys): (Vec<f64>, Vec<f64>) = if half.len() >= 2 {
            half.iter().cloned().unzip()
        } else {
            positive.iter().cloned().unzip()
        };
        linear_fit(&xs, &ys).1.exp()
    };
    Ok(EscapeProfile { probs, rho_hat })
}

/// Time-`t` kernel of the rates `a` with every jump from outside `U1` into
/// `U1` turned into killing; rows from `U1` keep their full dynamics.
pub fn killed_time_kernel(a: &SparseMatrix, u1: &[usize], t: f64, tol: f64) -> Result<DenseMatrix> {
    let k = a.dim();
    let inside = |i: usize| u1.contains(&(i + 1));
    let killed = SparseMatrix::from_rows(
        k,
        (0..k)
            .map(|i| {
                a.row(i)
                    .iter()
                    .filter(|&&(j, _)| j == i || inside(i) || !inside(j))
                    .copied()
                    .collect()
            })
            .collect(),
    );
    let shift = (0..k).map(|i| killed.row_sum(i)).fold(0.0, f64::max);
    let uniform = (0..k).map(|i| shift - killed.diag(i)).fold(0.0, f64::max);
    let cap = (2.0 * uniform * t + 50.0 * (uniform * t).sqrt() + 1000.0) as usize;
    let mut out = DenseMatrix::zeros(k);
    for x in 0..k {
        let mut e = vec![0.0; k];
        e[x] = 1.0;
        let row = expm_action(&killed, &e, t, Side::Left, tol, cap)?.unscaled();
        for (y, v) in row.into_iter().enumerate() {
            out.set(x, y, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_sparse_rates, TailPolicy};

    #[test]
    fn single_state_lyapunov_is_inconclusive() {
        let a = SparseMatrix::from_rows(1, vec![vec![(0, -2.0)]]);
        let c = check_lyapunov(&a, &[1.0], 0.5, &[]).unwrap();
        assert_eq!(c.ratio_tail, vec![(1, -2.0)]);
        assert_eq!(c.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn lyapunov_input_errors() {
        let a = SparseMatrix::from_rows(2, vec![vec![(0, -1.0), (1, 1.0)], vec![(0, 1.0), (1, -2.0)]]);
        assert!(matches!(
            check_lyapunov(&a, &[1.0], 0.5, &[]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            check_lyapunov(&a, &[1.0, 0.0], 0.5, &[]),
            Err(Error::NonpositiveV { x: 2, .. })
        ));
    }

    #[test]
    fn doeblin_two_state() {
        let a = SparseMatrix::from_rows(2, vec![vec![(0, -4.0), (1, 3.0)], vec![(0, 3.0), (1, -5.0)]]);
        let c = check_doeblin(&a).unwrap();
        assert_eq!(c.alpha, 6.0);
        assert_eq!(c.c, 2.0);
        assert_eq!(c.verdict, Verdict::Pass);
    }

    #[test]
    fn doeblin_zero_alpha_fails() {
        let q = build_sparse_rates(
            &[(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0), (1, 0, 0.1)],
            3,
            TailPolicy::Kill,
        )
        .unwrap();
        let c = check_doeblin(q.generator()).unwrap();
        assert_eq!(c.alpha, 0.0);
        assert_eq!(c.verdict, Verdict::Fail);
    }

    #[test]
    fn random_walk_fails_ratio_condition() {
        let mut e = vec![(1, 0, 1.0)];
        for x in 1..=50 {
            e.push((x, x + 1, 1.0));
            if x > 1 {
                e.push((x, x - 1, 1.0));
            }
        }
        let q = build_sparse_rates(&e, 50, TailPolicy::Kill).unwrap();
        let c = check_bd_conditions(&q).unwrap();
        assert!((c.ratio_tail_max - 1.0).abs() < 1e-15);
        assert_eq!(c.verdict_b, Verdict::Fail);
    }

    #[test]
    fn non_birth_death_rejected() {
        let q = build_sparse_rates(
            &[(1, 3, 1.0), (3, 2, 1.0), (2, 1, 1.0), (1, 0, 1.0)],
            3,
            TailPolicy::Kill,
        )
        .unwrap();
        assert!(matches!(check_bd_conditions(&q), Err(Error::NotBirthDeath { .. })));
    }

    #[test]
    fn escape_trivial_cases() {
        let p = DenseMatrix::from_rows(&[vec![0.5, 0.3], vec![0.2, 0.6]]);
        let e = escape_prob_profile(&p, &[1, 2], 1, 5).unwrap();
        assert!(e.probs.iter().all(|&v| v == 0.0));
        let p = DenseMatrix::from_rows(&[vec![0.7]]);
        let e = escape_prob_profile(&p, &[1], 1, 5).unwrap();
        assert!(e.probs.iter().all(|&v| v == 0.0));
        assert!(escape_prob_profile(&p, &[1], 2, 5).is_err());
    }

    #[test]
    fn kv_rendering() {
        let a = SparseMatrix::from_rows(2, vec![vec![(0, -4.0), (1, 3.0)], vec![(0, 3.0), (1, -5.0)]]);
        let s = check_doeblin(&a).unwrap().to_kv("doeblin.");
        assert!(s.contains("doeblin.verdict=pass\n"));
        assert!(s.contains("doeblin.alpha=6\n"));
    }
}
