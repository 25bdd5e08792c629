//! Kernel evaluation, median-heuristic bandwidth and pooled Gram matrices.
//!
//! The Gaussian kernel uses `k(z, z') = exp(-|z - z'|^2 / (2 h^2))` with `h`
//! the raw median pairwise Euclidean distance of the pooled sample.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Laplacian,
    Linear,
}

/// A kernel family together with its bandwidth and sup bound `M_k = sup_z k(z, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
    sup_bound: Option<f64>,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self {
            family: KernelFamily::Gaussian,
            bandwidth,
            sup_bound: Some(1.0),
        })
    }

    pub fn laplacian(bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self {
            family: KernelFamily::Laplacian,
            bandwidth,
            sup_bound: Some(1.0),
        })
    }

    /// Linear kernel without a declared bound. Non-asymptotic quantiles refuse it.
    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            bandwidth: f64::NAN,
            sup_bound: None,
        }
    }

    /// Linear kernel on data known to satisfy `|z|^2 <= sup_bound`.
    pub fn linear_bounded(sup_bound: f64) -> Result<Self> {
        if !(sup_bound.is_finite() && sup_bound > 0.0) {
            return Err(Error::NonPositiveArgument {
                name: "sup_bound",
                value: sup_bound,
            });
        }
        Ok(Self {
            family: KernelFamily::Linear,
            bandwidth: f64::NAN,
            sup_bound: Some(sup_bound),
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Bandwidth; `None` for the linear kernel.
    pub fn bandwidth(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Linear => None,
            _ => Some(self.bandwidth),
        }
    }

    /// `M_k`, or `None` when the kernel is unbounded.
    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        Ok(self.eval_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let sq = squared_distance(a, b);
                (-sq / (2.0 * self.bandwidth * self.bandwidth)).exp()
            }
            KernelFamily::Laplacian => {
                let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
                (-l1 / self.bandwidth).exp()
            }
            KernelFamily::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(h))
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of all pairwise Euclidean distances `|z_i - z_j|`, `i < j`.
///
/// Zero distances from duplicated points take part in the median; the call
/// only fails when the median itself is zero.
pub fn median_heuristic(points: &[Vec<f64>]) -> Result<f64> {
    let m = points.len();
    if m < 2 {
        return Err(Error::FewerThanTwoPoints);
    }
    let d = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: p.len(),
        });
    }
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            dists.push(squared_distance(&points[i], &points[j]).sqrt());
        }
    }
    let median = median_in_place(&mut dists);
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::AllPointsIdentical)
    }
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}

/// Pooled Gram matrix with the X block first.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    n_x: usize,
    n_y: usize,
}

impl GramMatrix {
    /// Wraps an existing pooled Gram matrix (X block first).
    pub fn from_matrix(entries: DMatrix<f64>, n_x: usize, n_y: usize) -> Result<Self> {
        let expected = n_x + n_y;
        if entries.nrows() != expected || entries.ncols() != expected {
            return Err(Error::SizeMismatch {
                rows: entries.nrows(),
                cols: entries.ncols(),
                expected,
            });
        }
        if n_x == 0 || n_y == 0 {
            return Err(Error::EmptySample);
        }
        Ok(Self { entries, n_x, n_y })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
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

    /// PSD check: smallest eigenvalue >= -rel_tol * trace / m.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let m = self.size() as f64;
        let floor = -rel_tol * self.entries.trace().abs() / m;
        let eig = SymmetricEigen::new(self.entries.clone());
        eig.eigenvalues.iter().all(|&l| l >= floor)
    }
}

/// Gram matrix of `k` over the pooled ordered sample `(X, Y)`.
///
/// Only the upper triangle is evaluated; the lower one is mirrored so the
/// result is symmetric bit for bit.
pub fn gram(spec: &KernelSpec, x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<GramMatrix> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample);
    }
    let d = x[0].len();
    for p in x.iter().chain(y) {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
    }
    let flat: Vec<f64> = x.iter().chain(y).flatten().copied().collect();
    let point = |i: usize| &flat[i * d..(i + 1) * d];
    let m = x.len() + y.len();
    let mut k = DMatrix::<f64>::zeros(m, m);
    let data = k.as_mut_slice();
    // column-major storage: fill the upper triangle column by column, then
    // mirror it tile by tile to keep memory access local
    for j in 0..m {
        let b = point(j);
        for (i, v) in data[j * m..j * m + j + 1].iter_mut().enumerate() {
            *v = spec.eval_unchecked(point(i), b);
        }
    }
    const TILE: usize = 64;
    for jb in (0..m).step_by(TILE) {
        for ib in (jb..m).step_by(TILE) {
            for j in jb..(jb + TILE).min(m) {
                for i in ib.max(j + 1)..(ib + TILE).min(m) {
                    data[i + j * m] = data[j + i * m];
                }
            }
        }
    }
    GramMatrix::from_matrix(k, x.len(), y.len())
}
