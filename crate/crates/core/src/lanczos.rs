//! Lanczos iteration with full reorthogonalization for the leading eigenpairs
//! of a dense symmetric positive semi-definite matrix.
//!
//! Breakdowns (an exhausted Krylov space) are handled by restarting from a
//! fresh deterministic vector orthogonal to every basis vector built so far,
//! so repeated eigenvalues are still found with their full multiplicity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const START_SEED: u64 = 0x5eed_1a2c_0de5;

pub(crate) struct LeadingEigen {
    pub values: Vec<f64>,
    /// Columns are unit eigenvectors, matching `values`.
    pub vectors: DMatrix<f64>,
    /// True when the basis spans the whole admissible subspace.
    pub exhausted: bool,
}

/// Top-`k` eigenpairs of the symmetric operator `apply` (which writes `A q`
/// into its second argument) of size `m`, restricted to the range of the
/// orthogonal projector `project` (applied in place).
///
/// Ritz pair `i` is accepted once `|beta_j s_{j,i}| <= rel_tol * theta_1`.
pub(crate) fn leading_eigenpairs<A, F>(
    m: usize,
    mut apply: A,
    k: usize,
    rel_tol: f64,
    project: F,
) -> Result<LeadingEigen>
where
    A: FnMut(&DVector<f64>, &mut DVector<f64>),
    F: Fn(&mut DVector<f64>),
{
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    // betas[j] couples basis[j] and basis[j + 1]; zero across restarts
    let mut betas: Vec<f64> = Vec::new();

    let mut q = match fresh_vector(&mut rng, m, &basis, &project) {
        Some(q) => q,
        None => {
            return Ok(LeadingEigen {
                values: Vec::new(),
                vectors: DMatrix::zeros(m, 0),
                exhausted: true,
            })
        }
    };
    let mut w = DVector::<f64>::zeros(m);
    let mut block_start = 0usize;

    loop {
        apply(&q, &mut w);
        project(&mut w);
        let alpha = q.dot(&w);
        w.axpy(-alpha, &q, 1.0);
        if basis.len() > block_start {
            if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
                w.axpy(-b, prev, 1.0);
            }
        }
        basis.push(q.clone());
        alphas.push(alpha);
        for _ in 0..2 {
            for v in &basis {
                let c = v.dot(&w);
                w.axpy(-c, v, 1.0);
            }
        }
        let beta = w.norm();
        let steps = basis.len();
        let scale = alphas.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let breakdown = beta <= 1e-13 * scale.max(f64::MIN_POSITIVE);

        // a fresh random vector that is numerically annihilated means the
        // unexplored complement carries only (numerically) zero eigenvalues
        let null_block = breakdown && steps - block_start == 1 && alpha.abs() <= 1e-12 * scale;
        let exhausted = steps >= m || null_block;

        if exhausted || (steps >= k && !breakdown && (steps - k) % 5 == 0) {
            let (theta, s) = tridiagonal_eigen(&alphas, &betas)?;
            let converged = (0..k.min(steps)).all(|i| {
                (beta * s[(steps - 1, i)]).abs() <= rel_tol * theta[0].abs().max(1e-300)
            });
            if exhausted || converged {
                return Ok(assemble(&basis, &theta, &s, k, exhausted));
            }
        }

        if breakdown {
            match fresh_vector(&mut rng, m, &basis, &project) {
                Some(v) => {
                    betas.push(0.0);
                    block_start = steps;
                    q = v;
                }
                None => {
                    let (theta, s) = tridiagonal_eigen(&alphas, &betas)?;
                    return Ok(assemble(&basis, &theta, &s, k, true));
                }
            }
        } else {
            betas.push(beta);
            q = &w / beta;
        }
    }
}

fn assemble(
    basis: &[DVector<f64>],
    theta: &[f64],
    s: &DMatrix<f64>,
    k: usize,
    exhausted: bool,
) -> LeadingEigen {
    let m = basis[0].len();
    let take = k.min(theta.len());
    let mut vectors = DMatrix::<f64>::zeros(m, take);
    for i in 0..take {
        let mut col = DVector::<f64>::zeros(m);
        for (j, b) in basis.iter().enumerate() {
            col.axpy(s[(j, i)], b, 1.0);
        }
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        vectors.set_column(i, &col);
    }
    LeadingEigen {
        values: theta[..take].to_vec(),
        vectors,
        exhausted,
    }
}

/// Eigen-decomposition of the Lanczos tridiagonal, sorted descending.
fn tridiagonal_eigen(alphas: &[f64], betas: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = alphas.len();
    let mut t = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alphas[i];
        if i + 1 < n {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::try_new(t, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigSolverFailure("tridiagonal QR did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        s.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok((theta, s))
}

fn fresh_vector<F>(
    rng: &mut ChaCha8Rng,
    m: usize,
    basis: &[DVector<f64>],
    project: &F,
) -> Option<DVector<f64>>
where
    F: Fn(&mut DVector<f64>),
{
    for _ in 0..4 {
        let mut v = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        project(&mut v);
        for _ in 0..2 {
            for b in basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 * (m as f64).sqrt() {
            return Some(v / norm);
        }
    }
    None
}
