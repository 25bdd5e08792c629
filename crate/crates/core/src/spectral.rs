//! Spectrum of the empirical within-group covariance operator via the kernel trick.
//!
//! With `P = diag(I - J/n_x, I - J/n_y)` the block-wise centering projector
//! and `K` the pooled Gram matrix, the matrix `G = P K P / m` (`m = n_x + n_y`)
//! is the Gram matrix of the scaled centered features `phi_c(z_j) / sqrt(m)`,
//! and the covariance operator is `Phi Phi^* / m`. Both therefore share their
//! nonzero eigenvalues, and a unit eigenvector `u` of `G` with eigenvalue
//! `lambda` represents the unit eigenfunction
//! `f = sum_j u_j phi_c(z_j) / sqrt(m lambda)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::lanczos;

/// Absolute floor of the rank tolerance.
pub const ABS_RANK_FLOOR: f64 = 1e-14;
/// Relative (to the leading eigenvalue) floor of the rank tolerance.
pub const REL_RANK_FLOOR: f64 = 1e-10;
/// Residual tolerance of the Lanczos solver, relative to the leading eigenvalue.
const LANCZOS_TOL: f64 = 1e-12;

/// `G = P K P / m`.
#[derive(Debug, Clone)]
pub struct CenteredWithinGram {
    matrix: DMatrix<f64>,
    n_x: usize,
    n_y: usize,
}

impl CenteredWithinGram {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn size(&self) -> usize {
        self.n_x + self.n_y
    }

    /// Total within-group variance in the feature space.
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Subtracts the X-block mean from the first `n_x` entries and the Y-block
/// mean from the rest.
pub(crate) fn center_within_groups(v: &mut DVector<f64>, n_x: usize) {
    let m = v.len();
    let mx = v.rows(0, n_x).sum() / n_x as f64;
    let my = v.rows(n_x, m - n_x).sum() / (m - n_x) as f64;
    v.rows_mut(0, n_x).add_scalar_mut(-mx);
    v.rows_mut(n_x, m - n_x).add_scalar_mut(-my);
}

pub fn centered_within_gram(k: &GramMatrix) -> CenteredWithinGram {
    let (n_x, n_y) = (k.n_x(), k.n_y());
    let m = n_x + n_y;
    let src = k.entries();
    let blocks = [(0usize, n_x), (n_x, n_y)];

    // row_means[g][i] = mean of K[i, j] over j in block g
    let mut row_means = [vec![0.0; m], vec![0.0; m]];
    for (g, &(start, len)) in blocks.iter().enumerate() {
        for j in start..start + len {
            let col = src.column(j);
            for i in 0..m {
                row_means[g][i] += col[i];
            }
        }
        for v in &mut row_means[g] {
            *v /= len as f64;
        }
    }
    let mut block_means = [[0.0; 2]; 2];
    for (a, &(sa, la)) in blocks.iter().enumerate() {
        for (b, _) in blocks.iter().enumerate() {
            block_means[a][b] = row_means[b][sa..sa + la].iter().sum::<f64>() / la as f64;
        }
    }
    let group = |i: usize| usize::from(i >= n_x);
    let inv_m = 1.0 / m as f64;
    let mut g = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        let gj = group(j);
        for i in 0..=j {
            let gi = group(i);
            let v = src[(i, j)] - row_means[gj][i] - row_means[gi][j] + block_means[gi][gj];
            g[(i, j)] = v * inv_m;
            g[(j, i)] = v * inv_m;
        }
    }
    CenteredWithinGram {
        matrix: g,
        n_x,
        n_y,
    }
}

/// Eigen-elements of the empirical within-group covariance operator.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    vectors: DMatrix<f64>,
    rank: usize,
    complete: bool,
    tol: f64,
    n_x: usize,
    n_y: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub eigenvalues: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Number of eigenvalues above tolerance among those computed.
    pub rank: usize,
    /// Whether `rank` is the full numerical rank `t*` (false for partial solves).
    pub rank_complete: bool,
}

impl SpectralDecomposition {
    fn from_sorted(
        mut eigenvalues: Vec<f64>,
        mut vectors: DMatrix<f64>,
        tol: Option<f64>,
        complete: bool,
        n_x: usize,
        n_y: usize,
    ) -> Self {
        let lead = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
        let tol = tol.unwrap_or_else(|| (REL_RANK_FLOOR * lead).max(ABS_RANK_FLOOR));
        let rank = eigenvalues.iter().take_while(|&&l| l > tol).count();
        for l in eigenvalues.iter_mut().skip(rank) {
            *l = 0.0;
        }
        for mut col in vectors.column_iter_mut() {
            let pivot = col
                .iter()
                .copied()
                .enumerate()
                .fold((0usize, 0.0f64), |best, (i, v)| {
                    if v.abs() > best.1.abs() {
                        (i, v)
                    } else {
                        best
                    }
                })
                .1;
            if pivot < 0.0 {
                col.neg_mut();
            }
        }
        Self {
            eigenvalues,
            vectors,
            rank,
            complete,
            tol,
            n_x,
            n_y,
        }
    }

    /// Positive eigenvalues `lambda_1 >= ... >= lambda_{rank}`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.rank]
    }

    /// All computed eigenvalues, with those below tolerance set to zero.
    pub fn computed_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// True when the full spectrum was computed, so `rank()` is `t*`.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    /// Unit dual coefficient vector of direction `t` (1-based).
    pub fn dual_coefficients(&self, t: usize) -> DVector<f64> {
        self.vectors.column(t - 1).into_owned()
    }

    /// Eigenvalues available to gap computations: computed ones, then zeros
    /// when the spectrum is complete.
    fn eigenvalue_list(&self, upto: usize) -> Result<Vec<f64>> {
        if upto <= self.eigenvalues.len() {
            return Ok(self.eigenvalues[..upto].to_vec());
        }
        if self.complete || self.rank < self.eigenvalues.len() {
            let mut v = self.eigenvalues.clone();
            v.resize(upto, 0.0);
            return Ok(v);
        }
        Err(Error::TruncationExceedsRank {
            requested: upto,
            rank: self.eigenvalues.len(),
        })
    }

    /// Left-right spectral gaps for truncation `t`.
    pub fn gaps(&self, t: usize) -> Result<Vec<f64>> {
        self.check_truncation(t)?;
        let eigs = self.eigenvalue_list(t.max(2))?;
        Ok(spectral_gaps(&eigs, t))
    }

    pub fn check_truncation(&self, t: usize) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::RankZero);
        }
        if t == 0 || t > self.rank {
            return Err(Error::TruncationExceedsRank {
                requested: t,
                rank: self.rank,
            });
        }
        Ok(())
    }

    pub fn summary(&self, t: usize) -> SpectralSummary {
        let t = t.min(self.rank);
        SpectralSummary {
            eigenvalues: self.eigenvalues[..t].to_vec(),
            gaps: if t == 0 {
                Vec::new()
            } else {
                self.gaps(t).unwrap_or_default()
            },
            rank: self.rank,
            rank_complete: self.complete,
        }
    }

    /// `<f_s, f_t>_H` for all `s, t <= rank`, computed from `G`.
    pub fn induced_inner_products(&self, g: &CenteredWithinGram) -> DMatrix<f64> {
        let r = self.rank;
        let u = self.vectors.columns(0, r);
        let mut out = u.transpose() * g.matrix() * u;
        for s in 0..r {
            for t in 0..r {
                out[(s, t)] /= (self.eigenvalues[s] * self.eigenvalues[t]).sqrt();
            }
        }
        out
    }
}

/// Left-right gaps of the first `t` entries of a nonincreasing list:
/// `(l_1 - l_2)/2`, then `min(l_s - l_{s+1}, l_{s-1} - l_s)/2` for `1 < s < t`,
/// and `min(l_t, l_{t-1} - l_t)/2` at the end. Entries past the slice count as 0.
pub fn spectral_gaps(eigenvalues: &[f64], t: usize) -> Vec<f64> {
    let at = |i: usize| eigenvalues.get(i).copied().unwrap_or(0.0);
    (0..t)
        .map(|s| {
            if s == 0 {
                0.5 * (at(0) - at(1))
            } else if s + 1 < t {
                0.5 * (at(s) - at(s + 1)).min(at(s - 1) - at(s))
            } else {
                0.5 * at(s).min(at(s - 1) - at(s))
            }
        })
        .collect()
}

/// Full symmetric eigendecomposition of `G`, sorted descending.
///
/// Eigenvalues at or below `tol` count as zero; the default tolerance is
/// `max(1e-10 lambda_1, 1e-14)`. Each eigenvector is signed so that its
/// largest-magnitude coefficient is positive.
pub fn eigendecompose(g: &CenteredWithinGram, tol: Option<f64>) -> Result<SpectralDecomposition> {
    let m = g.size();
    let eig = SymmetricEigen::try_new(g.matrix().clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::EigSolverFailure("symmetric QR did not converge".into()))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(m, m);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(SpectralDecomposition::from_sorted(
        values, vectors, tol, true, g.n_x, g.n_y,
    ))
}

/// Leading `k` eigenpairs of `G` by Lanczos iteration.
///
/// Agrees with [`eigendecompose`] on the leading part to roughly `1e-10`
/// relative accuracy while costing `O(m^2)` per iteration, which makes
/// thousands of repetitions on samples of several thousand points tractable.
pub fn eigendecompose_leading(
    g: &CenteredWithinGram,
    k: usize,
    tol: Option<f64>,
) -> Result<SpectralDecomposition> {
    let matrix = &g.matrix;
    leading(g.n_x, g.n_y, k, tol, |q, w| symmetric_matvec(matrix, 1.0, q, w))
}

/// Same as [`eigendecompose_leading`], working on the Gram matrix directly.
///
/// Every Lanczos vector lies in the range of `P`, where `P K P q = P K q`, so
/// `G` never has to be formed.
pub fn eigendecompose_leading_from_gram(
    k: &GramMatrix,
    count: usize,
    tol: Option<f64>,
) -> Result<SpectralDecomposition> {
    let (n_x, n_y) = (k.n_x(), k.n_y());
    let inv_m = 1.0 / (n_x + n_y) as f64;
    let entries = k.entries();
    leading(n_x, n_y, count, tol, |q, w| symmetric_matvec(entries, inv_m, q, w))
}

/// `w = scale * A q` reading only the lower triangle of the symmetric `A`,
/// one pass over memory.
fn symmetric_matvec(a: &DMatrix<f64>, scale: f64, q: &DVector<f64>, w: &mut DVector<f64>) {
    let m = a.nrows();
    let data = a.as_slice();
    let q = q.as_slice();
    let out = w.as_mut_slice();
    out.fill(0.0);
    for j in 0..m {
        let col = &data[j * m + j..(j + 1) * m];
        let qj = q[j];
        let (head, tail) = out[j..].split_at_mut(1);
        let mut dot = 0.0;
        for ((o, &c), &qi) in tail.iter_mut().zip(&col[1..]).zip(&q[j + 1..]) {
            *o += c * qj;
            dot += c * qi;
        }
        head[0] += col[0] * qj + dot;
    }
    for v in out.iter_mut() {
        *v *= scale;
    }
}

fn leading<A>(n_x: usize, n_y: usize, k: usize, tol: Option<f64>, apply: A) -> Result<SpectralDecomposition>
where
    A: FnMut(&DVector<f64>, &mut DVector<f64>),
{
    let m = n_x + n_y;
    let k = k.clamp(1, m);
    let res = lanczos::leading_eigenpairs(m, apply, k, LANCZOS_TOL, |v| {
        center_within_groups(v, n_x)
    })?;
    Ok(SpectralDecomposition::from_sorted(
        res.values,
        res.vectors,
        tol,
        res.exhausted,
        n_x,
        n_y,
    ))
}

/// Projections `pi_t = <f_t, mu_X - mu_Y>_H`, `t = 1..T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionVector {
    values: Vec<f64>,
}

impl ProjectionVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `P K w` with `w = (1/n_x, ..., -1/n_y, ...)`: coordinates of the mean
/// embedding difference against the centered features.
pub fn centered_mean_difference(k: &GramMatrix) -> DVector<f64> {
    let (n_x, n_y) = (k.n_x(), k.n_y());
    let m = n_x + n_y;
    let w = DVector::from_fn(m, |i, _| {
        if i < n_x {
            1.0 / n_x as f64
        } else {
            -1.0 / n_y as f64
        }
    });
    let mut v = k.entries() * w;
    center_within_groups(&mut v, n_x);
    v
}

/// `|mu_X - mu_Y|_H^2 = w^T K w`.
pub fn mean_difference_norm_sq(k: &GramMatrix) -> f64 {
    let (n_x, n_y) = (k.n_x(), k.n_y());
    let w = DVector::from_fn(n_x + n_y, |i, _| {
        if i < n_x {
            1.0 / n_x as f64
        } else {
            -1.0 / n_y as f64
        }
    });
    w.dot(&(k.entries() * &w))
}

pub fn project_mean_difference(
    k: &GramMatrix,
    s: &SpectralDecomposition,
    t: usize,
) -> Result<ProjectionVector> {
    project_centered(&centered_mean_difference(k), s, t)
}

/// Same as [`project_mean_difference`] from a precomputed `P K w`.
pub fn project_centered(
    pkw: &DVector<f64>,
    s: &SpectralDecomposition,
    t: usize,
) -> Result<ProjectionVector> {
    s.check_truncation(t)?;
    let m = (s.n_x + s.n_y) as f64;
    let values = (0..t)
        .map(|i| s.vectors.column(i).dot(pkw) / (m * s.eigenvalues[i]).sqrt())
        .collect();
    Ok(ProjectionVector { values })
}
