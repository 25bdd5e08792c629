//! Synthetic distributions and MNIST digit-subset distributions.

use rand::Rng;
use rand_distr::{Beta, Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::mnist::MnistStore;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("bad IDX magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("IDX file truncated: needed {needed} bytes, found {found}")]
    TruncatedFile { needed: usize, found: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("expected a {expected}-pixel image, found {found}")]
    BadShape { expected: usize, found: usize },
    #[error("no stored image carries a label in {0:?}")]
    EmptyMnistSubset(Vec<u8>),
    #[error("MNIST distributions need a loaded image store")]
    MnistUnavailable,
    #[error("invalid distribution: {0}")]
    InvalidSpec(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Digits used for the null distribution.
pub const ALL_DIGITS: [u8; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Digit sets of the five MNIST alternatives, from the strongest to the
/// weakest departure from [`ALL_DIGITS`].
///
/// The third and fourth sets are listed identically in the source material;
/// they are kept as written and the fourth can be replaced through
/// [`alternative_digits`].
pub const ALTERNATIVE_DIGITS: [&[u8]; 5] = [
    &[1, 3, 5, 7, 9],
    &[0, 1, 3, 5, 7, 9],
    &[0, 1, 2, 3, 5, 7, 9],
    &[0, 1, 2, 3, 5, 7, 9],
    &[0, 1, 2, 3, 4, 5, 7, 9],
];

/// Digit set of alternative `index` (1-based), with an optional replacement
/// for the fourth one.
pub fn alternative_digits(index: usize, fourth_override: Option<&[u8]>) -> Result<Vec<u8>> {
    if !(1..=5).contains(&index) {
        return Err(DataError::InvalidSpec(format!("no MNIST alternative {index}")));
    }
    match (index, fourth_override) {
        (4, Some(digits)) => Ok(digits.to_vec()),
        _ => Ok(ALTERNATIVE_DIGITS[index - 1].to_vec()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `N(0, I_d)`.
    GaussianIso,
    /// Uniform on `[0, 1]^d`.
    UniformCube,
    /// Independent standard Cauchy coordinates.
    CauchyIso,
    /// Von Mises-Fisher on the unit sphere of `R^d`; the mean direction
    /// defaults to `(1, ..., 1) / sqrt(d)`.
    VonMisesFisher {
        kappa: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_direction: Option<Vec<f64>>,
    },
    /// `N(shift, I_d)`; a shift shorter than `d` is padded with zeros.
    GaussianMeanShift { shift: Vec<f64> },
    /// Uniform draws with replacement among the stored 7x7 images whose label
    /// is in `digits`.
    MnistSubset { digits: Vec<u8> },
}

impl Family {
    /// Short human-readable tag used in tables.
    pub fn label(&self) -> String {
        match self {
            Family::GaussianIso => "gaussian".into(),
            Family::UniformCube => "uniform".into(),
            Family::CauchyIso => "cauchy".into(),
            Family::VonMisesFisher { kappa, .. } => format!("vmf(kappa={kappa})"),
            Family::GaussianMeanShift { shift } => {
                let parts: Vec<String> = shift.iter().map(|v| v.to_string()).collect();
                format!("gaussian_shift({})", parts.join(" "))
            }
            Family::MnistSubset { digits } => {
                let parts: Vec<String> = digits.iter().map(|v| v.to_string()).collect();
                format!("mnist({})", parts.join(""))
            }
        }
    }

    pub fn needs_mnist(&self) -> bool {
        matches!(self, Family::MnistSubset { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    #[serde(flatten)]
    pub family: Family,
    pub d: usize,
}

impl DistributionSpec {
    pub fn new(family: Family, d: usize) -> Self {
        Self { family, d }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(DataError::InvalidSpec("dimension must be positive".into()));
        }
        match &self.family {
            Family::VonMisesFisher {
                kappa,
                mean_direction,
            } => {
                if !(*kappa > 0.0 && kappa.is_finite()) {
                    return Err(DataError::InvalidSpec(format!("kappa must be positive, got {kappa}")));
                }
                if let Some(mu) = mean_direction {
                    if mu.len() != self.d {
                        return Err(DataError::InvalidSpec(format!(
                            "mean direction has {} components for d = {}",
                            mu.len(),
                            self.d
                        )));
                    }
                    let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > 1e-9 {
                        return Err(DataError::InvalidSpec(format!(
                            "mean direction must have unit norm, got {norm}"
                        )));
                    }
                }
            }
            Family::GaussianMeanShift { shift } => {
                if shift.len() > self.d {
                    return Err(DataError::InvalidSpec(format!(
                        "shift has {} components for d = {}",
                        shift.len(),
                        self.d
                    )));
                }
            }
            Family::MnistSubset { digits } => {
                if digits.is_empty() || digits.iter().any(|&c| c > 9) {
                    return Err(DataError::InvalidSpec(format!("invalid digit set {digits:?}")));
                }
                if self.d != crate::mnist::POOLED_PIXELS {
                    return Err(DataError::InvalidSpec(format!(
                        "MNIST images have d = {}, got {}",
                        crate::mnist::POOLED_PIXELS,
                        self.d
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. points.
pub fn sample<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    n: usize,
    rng: &mut R,
    mnist: Option<&MnistStore>,
) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let d = spec.d;
    match &spec.family {
        Family::GaussianIso => Ok((0..n).map(|_| gaussian(d, rng)).collect()),
        Family::UniformCube => Ok((0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect()),
        Family::CauchyIso => {
            let c = Cauchy::new(0.0, 1.0).expect("unit scale");
            Ok((0..n).map(|_| (0..d).map(|_| c.sample(rng)).collect()).collect())
        }
        Family::VonMisesFisher {
            kappa,
            mean_direction,
        } => {
            let mu = mean_direction
                .clone()
                .unwrap_or_else(|| vec![1.0 / (d as f64).sqrt(); d]);
            let sampler = VonMisesFisher::new(*kappa, mu)?;
            Ok((0..n).map(|_| sampler.draw(rng)).collect())
        }
        Family::GaussianMeanShift { shift } => Ok((0..n)
            .map(|_| {
                let mut z = gaussian(d, rng);
                for (v, s) in z.iter_mut().zip(shift) {
                    *v += s;
                }
                z
            })
            .collect()),
        Family::MnistSubset { digits } => {
            let store = mnist.ok_or(DataError::MnistUnavailable)?;
            let pool = store.indices_with_labels(digits);
            if pool.is_empty() {
                return Err(DataError::EmptyMnistSubset(digits.clone()));
            }
            Ok((0..n)
                .map(|_| store.images()[pool[rng.random_range(0..pool.len())]].clone())
                .collect())
        }
    }
}

fn gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Wood's rejection sampler for the von Mises-Fisher distribution.
///
/// The component `w` along the mean direction is drawn from its marginal by
/// rejection from a transformed Beta((d-1)/2, (d-1)/2) envelope, the
/// orthogonal part is uniform on the unit sphere of dimension `d - 2`, and a
/// Householder reflection maps the last axis onto the mean direction.
pub struct VonMisesFisher {
    kappa: f64,
    mu: Vec<f64>,
    b: f64,
    x0: f64,
    c: f64,
    envelope: Option<Beta<f64>>,
    /// Unit `u` of the reflection `I - 2 u u^T` sending `e_d` to `mu`, if needed.
    reflector: Option<Vec<f64>>,
}

impl VonMisesFisher {
    pub fn new(kappa: f64, mu: Vec<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 || !(kappa > 0.0) {
            return Err(DataError::InvalidSpec("vMF needs d >= 1 and kappa > 0".into()));
        }
        let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mu: Vec<f64> = mu.iter().map(|v| v / norm).collect();
        let dm1 = (d - 1) as f64;
        // b = (-2 kappa + sqrt(4 kappa^2 + (d-1)^2)) / (d-1), written without cancellation
        let b = dm1 / (2.0 * kappa + (2.0 * kappa).hypot(dm1));
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
        let envelope = if d >= 2 {
            Some(Beta::new(dm1 / 2.0, dm1 / 2.0).map_err(|e| DataError::InvalidSpec(e.to_string()))?)
        } else {
            None
        };
        let mut u: Vec<f64> = mu.iter().map(|v| -v).collect();
        u[d - 1] += 1.0;
        let u_norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let reflector = if u_norm > 1e-12 {
            Some(u.iter().map(|v| v / u_norm).collect())
        } else {
            None
        };
        Ok(Self {
            kappa,
            mu,
            b,
            x0,
            c,
            envelope,
            reflector,
        })
    }

    fn component<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let d = self.mu.len();
        let Some(envelope) = &self.envelope else {
            // sphere of R^1: the two points +-1 with weights e^{+-kappa}
            let p_plus = 1.0 / (1.0 + (-2.0 * self.kappa).exp());
            return if rng.random::<f64>() < p_plus { 1.0 } else { -1.0 };
        };
        let dm1 = (d - 1) as f64;
        loop {
            let z = envelope.sample(rng);
            let w = (1.0 - (1.0 + self.b) * z) / (1.0 - (1.0 - self.b) * z);
            let u: f64 = rng.random();
            if self.kappa * w + dm1 * (1.0 - self.x0 * w).ln() - self.c >= u.ln() {
                return w;
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.mu.len();
        let w = self.component(rng);
        let mut z = vec![0.0; d];
        if d >= 2 {
            let v = loop {
                let v = gaussian(d - 1, rng);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-300 {
                    break v.into_iter().map(|x| x / norm).collect::<Vec<f64>>();
                }
            };
            let r = (1.0 - w * w).max(0.0).sqrt();
            for (zi, vi) in z.iter_mut().zip(&v) {
                *zi = r * vi;
            }
        }
        z[d - 1] = w;
        if let Some(u) = &self.reflector {
            let dot: f64 = u.iter().zip(&z).map(|(a, b)| a * b).sum();
            for (zi, ui) in z.iter_mut().zip(u) {
                *zi -= 2.0 * dot * ui;
            }
        }
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        z.iter_mut().for_each(|x| *x /= norm);
        z
    }
}
