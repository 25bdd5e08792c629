use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{ProjectionVector, SpectralDecomposition};

/// Truncated Hotelling-type statistic
/// `D^2_T = n_x n_y / (n_x + n_y) * sum_{t <= T} pi_t^2 / lambda_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StNmmdStatistic {
    terms: Vec<f64>,
    total: f64,
    truncation: usize,
    n_x: usize,
    n_y: usize,
}

impl StNmmdStatistic {
    pub fn terms(&self) -> &[f64] {
        &self.terms
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    /// Statistic reported when no direction is retained.
    pub fn empty(n_x: usize, n_y: usize) -> Self {
        Self {
            terms: Vec::new(),
            total: 0.0,
            truncation: 0,
            n_x,
            n_y,
        }
    }
}

pub fn st_nmmd(
    s: &SpectralDecomposition,
    pi: &ProjectionVector,
    t: usize,
) -> Result<StNmmdStatistic> {
    s.check_truncation(t)?;
    if pi.len() < t {
        return Err(Error::TruncationExceedsRank {
            requested: t,
            rank: pi.len(),
        });
    }
    let (n_x, n_y) = (s.n_x(), s.n_y());
    let weight = (n_x as f64 * n_y as f64) / (n_x + n_y) as f64;
    let lambdas = s.eigenvalues();
    let mut terms = Vec::with_capacity(t);
    for i in 0..t {
        let l = lambdas[i];
        if l <= 0.0 {
            return Err(Error::ZeroEigenvalue { index: i + 1 });
        }
        let p = pi.values()[i];
        terms.push(weight * p * p / l);
    }
    let total = terms.iter().sum();
    Ok(StNmmdStatistic {
        terms,
        total,
        truncation: t,
        n_x,
        n_y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, KernelSpec};
    use crate::spectral::{centered_within_gram, eigendecompose, project_mean_difference};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn decomposed(seed: u64) -> (SpectralDecomposition, ProjectionVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, shift: f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| {
                    vec![
                        rng.sample::<f64, _>(StandardNormal) + shift,
                        rng.sample::<f64, _>(StandardNormal),
                    ]
                })
                .collect()
        };
        let x = draw(12, 0.0);
        let y = draw(12, 0.7);
        let k = gram(&KernelSpec::gaussian(1.0).unwrap(), &x, &y).unwrap();
        let s = eigendecompose(&centered_within_gram(&k), None).unwrap();
        let pi = project_mean_difference(&k, &s, s.rank()).unwrap();
        (s, pi)
    }

    #[test]
    fn identical_samples_give_zero() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.3, 1.0 - i as f64]).collect();
        let k = gram(&KernelSpec::gaussian(1.0).unwrap(), &x, &x).unwrap();
        let s = eigendecompose(&centered_within_gram(&k), None).unwrap();
        for t in 1..=s.rank() {
            let pi = project_mean_difference(&k, &s, t).unwrap();
            assert!(st_nmmd(&s, &pi, t).unwrap().total() < 1e-20);
        }
    }

    #[test]
    fn balanced_form_and_monotone_in_truncation() {
        let (s, pi) = decomposed(4);
        let mut prev = 0.0;
        for t in 1..=s.rank() {
            let stat = st_nmmd(&s, &pi, t).unwrap();
            let manual: f64 = (0..t)
                .map(|i| pi.values()[i].powi(2) / s.eigenvalues()[i])
                .sum::<f64>()
                * 12.0
                / 2.0;
            assert!((stat.total() - manual).abs() <= 1e-12 * manual.max(1.0));
            assert!(stat.terms().iter().all(|&v| v >= 0.0));
            assert!(stat.total() >= prev);
            prev = stat.total();
        }
    }

    #[test]
    fn doubling_projections_quadruples_terms() {
        let (s, pi) = decomposed(8);
        let doubled = ProjectionVector::new(pi.values().iter().map(|v| 2.0 * v).collect());
        let a = st_nmmd(&s, &pi, 3).unwrap();
        let b = st_nmmd(&s, &doubled, 3).unwrap();
        for (x, y) in a.terms().iter().zip(b.terms()) {
            assert!((4.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn truncation_checks() {
        let (s, pi) = decomposed(2);
        assert!(matches!(
            st_nmmd(&s, &pi, s.rank() + 1),
            Err(Error::TruncationExceedsRank { .. })
        ));
        let short = ProjectionVector::new(vec![0.1]);
        assert!(st_nmmd(&s, &short, 2).is_err());
    }
}
