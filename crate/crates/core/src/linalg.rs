//! Small matrix kernels used across the crate.
//!
//! Matrices are indexed from 0 here; the chain-level API maps type labels
//! `1..=K` onto rows `0..K`.

use crate::error::{Error, Result};

/// Square sparse matrix stored as sorted row lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    /// Builds a matrix from unsorted row lists; duplicate columns are summed.
    pub fn from_rows(n: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(rows.len(), n, "row count must equal dimension");
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                assert!(j < n, "column {j} out of range for dimension {n}");
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }
        Self { n, rows }
    }

    pub fn from_dense(d: &DenseMatrix) -> Self {
        let n = d.dim();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|j| {
                        let v = d.get(i, j);
                        (v != 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Self { n, rows }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(k) => row[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, v)| v).sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `A v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, a)| a * v[j]).sum())
            .collect()
    }

    /// `vᵀ A`.
    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for &(j, a) in row {
                out[j] += vi * a;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                rows[j].push((i, a));
            }
        }
        Self { n: self.n, rows }
    }

    /// `A + s I`.
    pub fn shifted(&self, s: f64) -> Self {
        let rows = (0..self.n)
            .map(|i| {
                let mut row = self.rows[i].clone();
                match row.binary_search_by_key(&i, |&(c, _)| c) {
                    Ok(k) => row[k].1 += s,
                    Err(k) => row.insert(k, (i, s)),
                }
                row
            })
            .collect();
        Self { n: self.n, rows }
    }

    /// Principal submatrix on the given (sorted, distinct) index set.
    pub fn principal(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let rows = keep
            .iter()
            .map(|&old| {
                self.rows[old]
                    .iter()
                    .filter(|&&(j, _)| map[j] != usize::MAX)
                    .map(|&(j, a)| (map[j], a))
                    .collect()
            })
            .collect();
        Self { n: keep.len(), rows }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                d.set(i, j, a);
            }
        }
        d
    }

    /// Off-diagonal support is nonnegative (Metzler matrix).
    pub fn is_metzler(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().all(|&(j, a)| a.is_finite() && (i == j || a >= 0.0)))
    }

    /// Strong connectivity of the off-diagonal support graph.
    ///
    /// Returns the first index not mutually reachable with index 0.
    pub fn first_unreachable(&self) -> Option<usize> {
        if self.n == 0 {
            return None;
        }
        let fwd = reach(self.n, |i| {
            self.rows[i]
                .iter()
                .filter(move |&&(j, a)| j != i && a > 0.0)
                .map(|&(j, _)| j)
        });
        if let Some(i) = fwd.iter().position(|&r| !r) {
            return Some(i);
        }
        let t = self.transpose();
        let bwd = reach(self.n, |i| {
            t.rows[i]
                .iter()
                .filter(move |&&(j, a)| j != i && a > 0.0)
                .map(|&(j, _)| j)
        });
        bwd.iter().position(|&r| !r)
    }
}

fn reach<F, I>(n: usize, succ: F) -> Vec<bool>
where
    F: Fn(usize) -> I,
    I: Iterator<Item = usize>,
{
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in succ(i) {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n);
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    /// Solves `self · x = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        let scale = self
            .data
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, a[i * n + k].abs()))
                    .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pivot <= scale * 1e-14 * n as f64 {
                return Err(Error::SingularSystem { row: k, pivot });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                b.swap(k, p);
            }
            let akk = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / akk;
                if f == 0.0 {
                    continue;
                }
                a[i * n + k] = 0.0;
                for j in (k + 1)..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                b[i] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let s: f64 = ((k + 1)..n).map(|j| a[k * n + j] * b[j]).sum();
            b[k] = (b[k] - s) / a[k * n + k];
        }
        Ok(b)
    }
}

/// LU factors of a nonsingular M-matrix `B = D - R`, where `R ≥ 0` holds the
/// off-diagonal rates and `D` is fixed by nonnegative row deficits:
/// `B 1 = leak`.
///
/// Elimination follows Grassmann–Taksar–Heyman: pivots are rebuilt from
/// deficits and remaining rates, so no step subtracts, which keeps full
/// relative accuracy on badly conditioned generators.
#[derive(Debug, Clone)]
pub struct MMatrixLu {
    n: usize,
    /// `r[i][p]` (i > p) and `r[p][j]` (j > p) as seen when `p` is eliminated.
    r: Vec<f64>,
    pivots: Vec<f64>,
}

impl MMatrixLu {
    /// `rates` supplies the off-diagonal entries (its diagonal is ignored).
    pub fn factor(rates: &SparseMatrix, leak: &[f64]) -> Result<Self> {
        let n = rates.dim();
        if leak.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: leak.len(),
            });
        }
        let mut r = vec![0.0; n * n];
        for i in 0..n {
            for &(j, v) in rates.row(i) {
                if j != i {
                    if v < 0.0 {
                        return Err(Error::NegativeRate {
                            x: i + 1,
                            y: j + 1,
                            rate: v,
                        });
                    }
                    r[i * n + j] = v;
                }
            }
        }
        let mut leak = leak.to_vec();
        if let Some(i) = leak.iter().position(|&l| !(l >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "row deficit {} of row {} is negative",
                leak[i],
                i + 1
            )));
        }
        let mut pivots = vec![0.0; n];
        for p in 0..n {
            let d = leak[p] + ((p + 1)..n).map(|j| r[p * n + j]).sum::<f64>();
            if !(d > 0.0) {
                return Err(Error::SingularSystem { row: p, pivot: d });
            }
            pivots[p] = d;
            for i in (p + 1)..n {
                let rip = r[i * n + p];
                if rip == 0.0 {
                    continue;
                }
                let f = rip / d;
                leak[i] += f * leak[p];
                for j in (p + 1)..n {
                    if j != i {
                        r[i * n + j] += f * r[p * n + j];
                    }
                }
            }
        }
        Ok(Self { n, r, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `B x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|p| self.r[i * n + p] / self.pivots[p] * y[p]).sum();
            y[i] += s;
        }
        for p in (0..n).rev() {
            let s: f64 = ((p + 1)..n).map(|j| self.r[p * n + j] * y[j]).sum();
            y[p] = (y[p] + s) / self.pivots[p];
        }
        Ok(y)
    }

    /// Solves `Bᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut z = b.to_vec();
        for p in 0..n {
            let s: f64 = (0..p).map(|i| self.r[i * n + p] * z[i]).sum();
            z[p] = (z[p] + s) / self.pivots[p];
        }
        for p in (0..n).rev() {
            let s: f64 = ((p + 1)..n).map(|i| self.r[i * n + p] / self.pivots[p] * z[i]).sum();
            z[p] += s;
        }
        Ok(z)
    }
}

/// Which side a matrix exponential acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Row vector: `φ ↦ φ e^{tA}`.
    Left,
    /// Column vector: `f ↦ e^{tA} f`.
    Right,
}

/// Result of a uniformized exponential action; the true value is
/// `vector * exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct ExpmAction {
    pub vector: Vec<f64>,
    pub log_scale: f64,
    pub terms: usize,
}

impl ExpmAction {
    pub fn unscaled(self) -> Vec<f64> {
        let s = self.log_scale.exp();
        self.vector.into_iter().map(|v| v * s).collect()
    }
}

/// Action of `e^{tA}` for a Metzler matrix `A` by uniformization.
///
/// `A` is shifted by `c = max(0, max row sum)` so that `A - cI` is a
/// sub-Markovian generator; the Poisson series is truncated once its tail
/// bound drops below `tol · ‖v‖`. The shift is returned as `log_scale = c t`.
pub fn expm_action(a: &SparseMatrix, v: &[f64], t: f64, side: Side, tol: f64, max_terms: usize) -> Result<ExpmAction> {
    let n = a.dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    let c = (0..n).map(|i| a.row_sum(i)).fold(0.0f64, f64::max);
    let unif = (0..n).map(|i| c - a.diag(i)).fold(0.0f64, f64::max);
    if t == 0.0 || unif == 0.0 {
        return Ok(ExpmAction {
            vector: v.to_vec(),
            log_scale: c * t,
            terms: 0,
        });
    }
    let norm = match side {
        Side::Left => v.iter().map(|x| x.abs()).sum::<f64>(),
        Side::Right => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    };
    if norm == 0.0 {
        return Ok(ExpmAction {
            vector: vec![0.0; n],
            log_scale: c * t,
            terms: 0,
        });
    }
    // P = I + (A - cI)/unif, applied without materializing.
    let apply = |x: &[f64]| -> Vec<f64> {
        let ax = match side {
            Side::Left => a.vec_mul(x),
            Side::Right => a.mul_vec(x),
        };
        ax.iter().zip(x).map(|(axi, xi)| xi + (axi - c * xi) / unif).collect()
    };
    let lambda = unif * t;
    let ln_lambda = lambda.ln();
    let mut log_w = -lambda;
    let mut term = v.to_vec();
    let mut acc = vec![0.0; n];
    let mut n_terms = 0usize;
    loop {
        let w = log_w.exp();
        if w > 0.0 {
            for (o, x) in acc.iter_mut().zip(&term) {
                *o += w * x;
            }
        }
        let k = n_terms as f64;
        if k + 1.0 > lambda {
            let r = lambda / (k + 2.0);
            let tail = w * r / (1.0 - r);
            if tail <= tol {
                break;
            }
        }
        n_terms += 1;
        if n_terms > max_terms {
            return Err(Error::ToleranceUnachievable { tol, cap: max_terms });
        }
        term = apply(&term);
        log_w += ln_lambda - (n_terms as f64).ln();
    }
    Ok(ExpmAction {
        vector: acc,
        log_scale: c * t,
        terms: n_terms,
    })
}

/// Total-variation distance between two vectors of equal length.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Ordinary least squares fit `y = intercept + slope · x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}
