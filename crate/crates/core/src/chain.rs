//! Absorbed continuous-time chains on a finite truncation `1..=K` of the
//! type space, with state `0` absorbing.
//!
//! Public operations take type labels in `1..=K`; vectors over types are
//! indexed from zero, so entry `x - 1` belongs to type `x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm_action, total_variation, DenseMatrix, MMatrixLu, Side, SparseMatrix};

/// What happens to rates that point past the truncation `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TailPolicy {
    /// Rates to `y > K` become absorption.
    #[default]
    Kill,
    /// Rates to `y > K` are redirected to `K`.
    Reflect,
}

impl std::fmt::Display for TailPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TailPolicy::Kill => "kill",
            TailPolicy::Reflect => "reflect",
        })
    }
}

/// Sub-Markovian generator `Q` on `1..=K` together with absorption rates
/// `q(x, 0)`.
///
/// Immutable once built; every row of the full generator on `{0} ∪ 1..=K`
/// sums to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbedRates {
    q: SparseMatrix,
    absorption: Vec<f64>,
    off_sum: Vec<f64>,
    tail: Vec<f64>,
    tail_policy: TailPolicy,
}

/// Nonnegative weights over types `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionOverTypes {
    pub weights: Vec<f64>,
    pub normalized: bool,
}

impl DistributionOverTypes {
    pub fn point_mass(k: usize, x: usize) -> Self {
        let mut weights = vec![0.0; k];
        weights[x - 1] = 1.0;
        Self {
            weights,
            normalized: true,
        }
    }

    pub fn unnormalized(weights: Vec<f64>) -> Self {
        Self {
            weights,
            normalized: false,
        }
    }

    /// Normalizes to unit mass; returns `None` for zero mass.
    pub fn normalize(weights: Vec<f64>) -> Option<Self> {
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        Some(Self {
            weights: weights.into_iter().map(|w| w / s).collect(),
            normalized: true,
        })
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weight of type `x` (1-based).
    pub fn at(&self, x: usize) -> f64 {
        self.weights[x - 1]
    }

    pub fn tv(&self, other: &Self) -> f64 {
        total_variation(&self.weights, &other.weights)
    }
}

/// Which linear system [`AbsorbedRates::green_solve`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenSide {
    /// `(-Qᵀ) g = source`: expected occupation times from an initial law.
    Occupation,
    /// `(-Q) h = source`: expected accumulated reward per start type.
    Reward,
}

/// Output of [`AbsorbedRates::decay_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecayEstimate {
    pub gamma_hat: f64,
    /// `(t, -t⁻¹ log P_x(X_t = x))` for every grid time.
    pub sequence: Vec<(f64, f64)>,
}

/// Output of [`AbsorbedRates::yaglom_iterate`].
#[derive(Debug, Clone, PartialEq)]
pub struct YaglomLimit {
    pub distribution: DistributionOverTypes,
    pub steps: usize,
    pub last_change: f64,
}

const SEMIGROUP_TOL: f64 = 1e-15;

/// Builds validated rates from `(x, y, rate)` triples; `y = 0` is absorption
/// and `y > K` is folded according to `tail_policy`.
pub fn build_sparse_rates(entries: &[(usize, usize, f64)], k: usize, tail_policy: TailPolicy) -> Result<AbsorbedRates> {
    if k == 0 {
        return Err(Error::EmptyChain);
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    let mut absorption = vec![0.0; k];
    let mut tail = vec![0.0; k];
    for &(x, y, rate) in entries {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::NegativeRate { x, y, rate });
        }
        if x == 0 || x > k {
            return Err(Error::InvalidParameter(format!("source type {x} outside 1..={k}")));
        }
        if x == y {
            return Err(Error::InvalidParameter(format!(
                "self-rate ({x}, {x}) is implied by the row sum"
            )));
        }
        if rate == 0.0 {
            continue;
        }
        if y == 0 {
            absorption[x - 1] += rate;
        } else if y > k {
            tail[x - 1] += rate;
            match tail_policy {
                TailPolicy::Kill => absorption[x - 1] += rate,
                TailPolicy::Reflect => {
                    if x != k {
                        rows[x - 1].push((k - 1, rate));
                    }
                }
            }
        } else {
            rows[x - 1].push((y - 1, rate));
        }
    }
    AbsorbedRates::assemble(rows, absorption, tail, tail_policy)
}

/// Gompertzian birth–death chain: birth `a x ln(N+1)`, death `a x ln(x+1)`,
/// absorption only by death from type 1.
pub fn build_gompertz_bd(a: f64, n: f64, k: usize, tail_policy: TailPolicy) -> Result<AbsorbedRates> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!("rate scale a must be > 0, got {a}")));
    }
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "carrying size N must be >= 1, got {n}"
        )));
    }
    if k < 2 {
        return Err(Error::InvalidParameter(format!("truncation K must be >= 2, got {k}")));
    }
    let up = (n + 1.0).ln();
    let mut entries = Vec::with_capacity(2 * k);
    for x in 1..=k {
        let xf = x as f64;
        entries.push((x, x + 1, a * xf * up));
        entries.push((x, x - 1, a * xf * (xf + 1.0).ln()));
    }
    build_sparse_rates(&entries, k, tail_policy)
}

/// Parses a whitespace-separated `x y rate` list; `#` starts a comment.
pub fn parse_triples(text: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| Error::Parse { line: i + 1, message };
        if parts.len() != 3 {
            return Err(err(format!("expected `x y rate`, got {} fields", parts.len())));
        }
        let x = parts[0].parse::<usize>().map_err(|e| err(format!("x: {e}")))?;
        let y = parts[1].parse::<usize>().map_err(|e| err(format!("y: {e}")))?;
        let r = parts[2].parse::<f64>().map_err(|e| err(format!("rate: {e}")))?;
        out.push((x, y, r));
    }
    Ok(out)
}

/// Largest type label mentioned as a source in a triple list.
pub fn triples_size(entries: &[(usize, usize, f64)]) -> usize {
    entries.iter().map(|&(x, _, _)| x).max().unwrap_or(0)
}

impl AbsorbedRates {
    fn assemble(
        rows: Vec<Vec<(usize, f64)>>,
        absorption: Vec<f64>,
        tail: Vec<f64>,
        tail_policy: TailPolicy,
    ) -> Result<Self> {
        let k = rows.len();
        let off = SparseMatrix::from_rows(k, rows);
        let off_sum: Vec<f64> = (0..k).map(|i| off.row_sum(i)).collect();
        let mut with_diag: Vec<Vec<(usize, f64)>> = (0..k).map(|i| off.row(i).to_vec()).collect();
        for i in 0..k {
            with_diag[i].push((i, -(off_sum[i] + absorption[i])));
        }
        let q = SparseMatrix::from_rows(k, with_diag);
        if let Some(u) = q.first_unreachable() {
            return Err(Error::ReducibleChain {
                size: k,
                unreachable: u + 1,
            });
        }
        Ok(Self {
            q,
            absorption,
            off_sum,
            tail,
            tail_policy,
        })
    }

    /// Wraps a sub-Markovian Metzler matrix (off-diagonals ≥ 0, row sums ≤ 0)
    /// as an absorbed chain; absorption is `-row sum`.
    pub fn from_generator(m: &SparseMatrix) -> Result<Self> {
        let k = m.dim();
        if k == 0 {
            return Err(Error::EmptyChain);
        }
        let mut rows = vec![Vec::new(); k];
        let mut absorption = vec![0.0; k];
        for i in 0..k {
            let mut scale = 0.0f64;
            let mut off = 0.0;
            for &(j, v) in m.row(i) {
                scale = scale.max(v.abs());
                if j == i {
                    continue;
                }
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::NegativeRate {
                        x: i + 1,
                        y: j + 1,
                        rate: v,
                    });
                }
                if v > 0.0 {
                    rows[i].push((j, v));
                    off += v;
                }
            }
            let a = -(m.diag(i) + off);
            if a < -1e-12 * scale.max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "row {} has positive sum {}; not sub-Markovian",
                    i + 1,
                    -a
                )));
            }
            absorption[i] = a.max(0.0);
        }
        Self::assemble(rows, absorption, vec![0.0; k], TailPolicy::Kill)
    }

    /// Number of non-absorbing types `K`.
    pub fn size(&self) -> usize {
        self.q.dim()
    }

    /// The generator restricted to `1..=K` (diagonal included).
    pub fn generator(&self) -> &SparseMatrix {
        &self.q
    }

    /// `q(x, y)` for types `x, y ∈ 1..=K`.
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.q.get(x - 1, y - 1)
    }

    /// `q(x, 0)`.
    pub fn absorption(&self, x: usize) -> f64 {
        self.absorption[x - 1]
    }

    pub fn absorption_rates(&self) -> &[f64] {
        &self.absorption
    }

    /// Total jump rate `q(x) = -q(x, x)`.
    pub fn total_rate(&self, x: usize) -> f64 {
        -self.q.diag(x - 1)
    }

    /// Rate that pointed past `K` before folding.
    pub fn tail_rate(&self, x: usize) -> f64 {
        self.tail[x - 1]
    }

    pub fn tail_policy(&self) -> TailPolicy {
        self.tail_policy
    }

    /// `q(x, x) + (Σ_{y≠x} q(x, y) + q(x, 0))`; zero by construction.
    pub fn row_balance(&self, x: usize) -> f64 {
        self.q.diag(x - 1) + (self.off_sum[x - 1] + self.absorption[x - 1])
    }

    /// Off-diagonal entries `(y, q(x, y))` of row `x`, labels 1-based.
    pub fn transitions(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.q
            .row(x - 1)
            .iter()
            .filter(move |&&(j, _)| j != x - 1)
            .map(|&(j, v)| (j + 1, v))
    }

    /// Uniformization rate `max_x q(x)`.
    pub fn uniformization_rate(&self) -> f64 {
        (1..=self.size()).map(|x| self.total_rate(x)).fold(0.0, f64::max)
    }

    fn term_cap(&self, t: f64) -> usize {
        let l = self.uniformization_rate() * t;
        (l + 200.0 * l.sqrt() + 10_000.0) as usize
    }

    fn check_type(&self, x: usize) -> Result<()> {
        if x == 0 || x > self.size() {
            return Err(Error::InvalidParameter(format!("type {x} outside 1..={}", self.size())));
        }
        Ok(())
    }

    /// Row `x0` of `e^{tQ}` and the absorbed mass `1 - Σ_y e^{tQ}(x0, y)`.
    pub fn semigroup_row(&self, x0: usize, t: f64, tol: f64) -> Result<(DistributionOverTypes, f64)> {
        self.check_type(x0)?;
        let start = DistributionOverTypes::point_mass(self.size(), x0);
        let row = self.propagate(&start.weights, t, tol)?;
        let absorbed = (1.0 - row.iter().sum::<f64>()).max(0.0);
        Ok((DistributionOverTypes::unnormalized(row), absorbed))
    }

    /// `φ e^{tQ}` for an arbitrary row vector.
    pub fn propagate(&self, phi: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
        let r = expm_action(&self.q, phi, t, Side::Left, tol, self.term_cap(t))?;
        Ok(r.unscaled())
    }

    /// `e^{tQ} f` for an arbitrary column vector.
    pub fn propagate_right(&self, f: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
        let r = expm_action(&self.q, f, t, Side::Right, tol, self.term_cap(t))?;
        Ok(r.unscaled())
    }

    /// Dense `e^{tQ}`, row by row.
    pub fn time_kernel(&self, t: f64, tol: f64) -> Result<DenseMatrix> {
        let k = self.size();
        let rows = (1..=k)
            .map(|x| self.semigroup_row(x, t, tol).map(|(d, _)| d.weights))
            .collect::<Result<Vec<_>>>()?;
        Ok(DenseMatrix::from_rows(&rows))
    }

    /// Solves `(-Qᵀ) g = source` or `(-Q) h = source`.
    pub fn green_solve(&self, source: &DistributionOverTypes, side: GreenSide) -> Result<Vec<f64>> {
        let k = self.size();
        if source.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: source.len(),
            });
        }
        let lu = MMatrixLu::factor(&self.q, &self.absorption)?;
        match side {
            GreenSide::Occupation => lu.solve_transpose(&source.weights),
            GreenSide::Reward => lu.solve(&source.weights),
        }
    }

    /// `E_x(τ_target)` for every `x`, where absorption before reaching
    /// `target` terminates the clock.
    pub fn expected_hitting_time(&self, target: usize) -> Result<Vec<f64>> {
        self.check_type(target)?;
        let k = self.size();
        let keep: Vec<usize> = (0..k).filter(|&i| i != target - 1).collect();
        let mut h = vec![0.0; k];
        if keep.is_empty() {
            return Ok(h);
        }
        let sub = self.q.principal(&keep);
        let leak: Vec<f64> = keep
            .iter()
            .map(|&i| self.absorption[i] + self.q.get(i, target - 1))
            .collect();
        let sol = MMatrixLu::factor(&sub, &leak)?.solve(&vec![1.0; keep.len()])?;
        for (&i, v) in keep.iter().zip(sol) {
            h[i] = v;
        }
        Ok(h)
    }

    /// Iterates `φ ↦ normalize(φ e^{dt Q})` from `δ_{x0}` until the
    /// total-variation change drops below `tol`.
    pub fn yaglom_iterate(&self, x0: usize, dt: f64, tol: f64, max_steps: usize) -> Result<YaglomLimit> {
        self.check_type(x0)?;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        let mut phi = DistributionOverTypes::point_mass(self.size(), x0);
        let mut last_change = f64::INFINITY;
        for step in 1..=max_steps {
            let next = self.propagate(&phi.weights, dt, SEMIGROUP_TOL)?;
            let next = DistributionOverTypes::normalize(next).ok_or(Error::NoConvergence {
                iterations: step,
                last_change,
            })?;
            last_change = next.tv(&phi);
            phi = next;
            if last_change < tol {
                return Ok(YaglomLimit {
                    distribution: phi,
                    steps: step,
                    last_change,
                });
            }
        }
        Err(Error::NoConvergence {
            iterations: max_steps,
            last_change,
        })
    }

    /// Decay parameter from `-t⁻¹ log P_x(X_t = x)` on an increasing grid,
    /// extrapolated by the log-slope over the last two grid points.
    ///
    /// Every sequence value must stay above `gamma_hat - tol`.
    pub fn decay_estimate(&self, x: usize, t_grid: &[f64], tol: f64) -> Result<DecayEstimate> {
        self.check_type(x)?;
        if t_grid.len() < 2 {
            return Err(Error::InvalidParameter("t_grid needs at least two times".into()));
        }
        if t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("t_grid must be positive and increasing".into()));
        }
        let mut phi = DistributionOverTypes::point_mass(self.size(), x).weights;
        let mut log_mass = 0.0;
        let mut prev_t = 0.0;
        let mut log_p = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let next = self.propagate(&phi, t - prev_t, SEMIGROUP_TOL)?;
            let s: f64 = next.iter().sum();
            if !(s > 0.0) {
                return Err(Error::ToleranceUnachievable { tol, cap: log_p.len() });
            }
            log_mass += s.ln();
            phi = next.into_iter().map(|v| v / s).collect();
            log_p.push(phi[x - 1].ln() + log_mass);
            prev_t = t;
        }
        let n = t_grid.len();
        let gamma_hat = -(log_p[n - 1] - log_p[n - 2]) / (t_grid[n - 1] - t_grid[n - 2]);
        let sequence: Vec<(f64, f64)> = t_grid.iter().zip(&log_p).map(|(&t, &lp)| (t, -lp / t)).collect();
        if sequence.iter().any(|&(_, v)| v < gamma_hat - tol) {
            return Err(Error::ToleranceUnachievable { tol, cap: n });
        }
        Ok(DecayEstimate { gamma_hat, sequence })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(d: f64) -> AbsorbedRates {
        build_sparse_rates(&[(1, 0, d)], 1, TailPolicy::Kill).unwrap()
    }

    fn m3() -> AbsorbedRates {
        build_sparse_rates(
            &[
                (1, 2, 2.0),
                (2, 3, 2.0),
                (2, 1, 1.0),
                (3, 2, 3.0),
                (1, 0, 1.0),
                (3, 0, 1.0),
            ],
            3,
            TailPolicy::Kill,
        )
        .unwrap()
    }

    #[test]
    fn single_state_builder() {
        let q = single(2.0);
        assert_eq!(q.rate(1, 1), -2.0);
        assert_eq!(q.absorption(1), 2.0);
    }

    #[test]
    fn rows_balance_exactly() {
        let q = build_sparse_rates(
            &[(1, 2, 1.0), (2, 1, 1.0), (1, 0, 0.5), (2, 0, 0.5)],
            2,
            TailPolicy::Kill,
        )
        .unwrap();
        for x in 1..=2 {
            assert_eq!(q.row_balance(x), 0.0);
        }
        let g = build_gompertz_bd(0.7, 13.0, 40, TailPolicy::Kill).unwrap();
        for x in 1..=40 {
            assert_eq!(g.row_balance(x), 0.0);
        }
    }

    #[test]
    fn reducible_and_empty_are_rejected() {
        let err = build_sparse_rates(&[(1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)], 3, TailPolicy::Kill).unwrap_err();
        assert!(matches!(err, Error::ReducibleChain { .. }));
        assert_eq!(
            build_sparse_rates(&[], 0, TailPolicy::Kill).unwrap_err(),
            Error::EmptyChain
        );
        assert!(matches!(
            build_sparse_rates(&[(1, 0, -1.0)], 1, TailPolicy::Kill),
            Err(Error::NegativeRate { .. })
        ));
    }

    #[test]
    fn tail_folding() {
        let entries = [(1, 2, 1.0), (2, 1, 1.0), (2, 3, 4.0), (1, 0, 1.0)];
        let kill = build_sparse_rates(&entries, 2, TailPolicy::Kill).unwrap();
        assert_eq!(kill.absorption(2), 4.0);
        assert_eq!(kill.total_rate(2), 5.0);
        let refl = build_sparse_rates(&entries, 2, TailPolicy::Reflect).unwrap();
        assert_eq!(refl.absorption(2), 0.0);
        assert_eq!(refl.total_rate(2), 1.0);
        assert_eq!(refl.tail_rate(2), 4.0);
    }

    #[test]
    fn gompertz_rates() {
        let q = build_gompertz_bd(1.0, 100.0, 50, TailPolicy::Kill).unwrap();
        assert!((q.rate(1, 2) - 101f64.ln()).abs() < 1e-15);
        assert!((q.absorption(1) - 2f64.ln()).abs() < 1e-15);
        for x in [10usize, 25, 49] {
            let xf = x as f64;
            let drift = q.rate(x, x + 1) - q.rate(x, x - 1);
            let expect = xf * (101.0 / (xf + 1.0)).ln();
            assert!((drift - expect).abs() < 1e-12 * expect.abs().max(1.0), "x={x}");
        }
        let sym = build_gompertz_bd(1.0, 1.0, 5, TailPolicy::Kill).unwrap();
        assert!((sym.rate(1, 2) - sym.absorption(1)).abs() < 1e-15);
        assert!(build_gompertz_bd(0.0, 10.0, 5, TailPolicy::Kill).is_err());
        assert!(build_gompertz_bd(1.0, 0.5, 5, TailPolicy::Kill).is_err());
        assert!(build_gompertz_bd(1.0, 10.0, 1, TailPolicy::Kill).is_err());
    }

    #[test]
    fn semigroup_scalar_and_identity() {
        let (row, absorbed) = single(2.0).semigroup_row(1, 1.0, 1e-14).unwrap();
        assert!((row.at(1) - (-2.0f64).exp()).abs() < 1e-13);
        assert!((absorbed - (1.0 - (-2.0f64).exp())).abs() < 1e-13);
        let (row, absorbed) = m3().semigroup_row(2, 0.0, 1e-14).unwrap();
        assert_eq!(row.weights, vec![0.0, 1.0, 0.0]);
        assert_eq!(absorbed, 0.0);
    }

    #[test]
    fn green_scalar() {
        let g = single(2.0)
            .green_solve(&DistributionOverTypes::point_mass(1, 1), GreenSide::Occupation)
            .unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pure_death_chain() {
        let q = build_sparse_rates(
            &[(1, 0, 1.0), (2, 1, 1.0), (3, 2, 1.0), (1, 2, 0.0), (2, 3, 0.0)],
            3,
            TailPolicy::Kill,
        );
        // zero rates do not create edges, so the chain 1 <- 2 <- 3 is reducible
        assert!(matches!(q, Err(Error::ReducibleChain { .. })));
        // tiny upward leak keeps it irreducible while leaving stage sums ~3
        let q = build_sparse_rates(
            &[(1, 0, 1.0), (2, 1, 1.0), (3, 2, 1.0), (1, 2, 1e-13), (2, 3, 1e-13)],
            3,
            TailPolicy::Kill,
        )
        .unwrap();
        let g = q
            .green_solve(&DistributionOverTypes::point_mass(3, 3), GreenSide::Occupation)
            .unwrap();
        assert!((g.iter().sum::<f64>() - 3.0).abs() < 1e-9);
        let h = q
            .green_solve(&DistributionOverTypes::unnormalized(vec![1.0; 3]), GreenSide::Reward)
            .unwrap();
        assert!((h[2] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn hitting_time_of_death_chain() {
        let c = 2.5;
        let q = build_sparse_rates(
            &[
                (1, 0, c),
                (2, 1, c),
                (3, 2, c),
                (4, 3, c),
                (1, 2, 1e-14),
                (2, 3, 1e-14),
                (3, 4, 1e-14),
            ],
            4,
            TailPolicy::Kill,
        )
        .unwrap();
        let h = q.expected_hitting_time(1).unwrap();
        assert_eq!(h[0], 0.0);
        for x in 2..=4 {
            assert!((h[x - 1] - (x as f64 - 1.0) / c).abs() < 1e-9);
        }
    }

    #[test]
    fn yaglom_single_state() {
        let y = single(3.0).yaglom_iterate(1, 1.0, 1e-12, 10).unwrap();
        assert_eq!(y.distribution.weights, vec![1.0]);
    }

    #[test]
    fn yaglom_fixed_point() {
        let q = m3();
        let tol = 1e-11;
        let y = q.yaglom_iterate(1, 0.5, tol, 10_000).unwrap();
        let next = DistributionOverTypes::normalize(q.propagate(&y.distribution.weights, 0.5, 1e-15).unwrap()).unwrap();
        assert!(next.tv(&y.distribution) < tol);
    }

    #[test]
    fn decay_scalar() {
        let d = single(2.0).decay_estimate(1, &[1.0, 2.0, 5.0], 1e-9).unwrap();
        assert!((d.gamma_hat - 2.0).abs() < 1e-12);
    }

    #[test]
    fn parse_triples_handles_comments() {
        let t = parse_triples("# header\n1 2 1.5\n2 0 0.5 # absorb\n\n2 1 1\n").unwrap();
        assert_eq!(t, vec![(1, 2, 1.5), (2, 0, 0.5), (2, 1, 1.0)]);
        assert_eq!(triples_size(&t), 2);
        assert!(matches!(parse_triples("1 2"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn from_generator_rejects_super_markov() {
        let m = SparseMatrix::from_rows(1, vec![vec![(0, 0.5)]]);
        assert!(AbsorbedRates::from_generator(&m).is_err());
        let m = SparseMatrix::from_rows(1, vec![vec![(0, -0.5)]]);
        assert_eq!(AbsorbedRates::from_generator(&m).unwrap().absorption(1), 0.5);
    }
}
