//! Thresholds for the st-nMMD test.
//!
//! Four families are provided:
//!
//! * the asymptotic `chi2(T)` quantile;
//! * the non-asymptotic bound `Q(n, delta, M_k, lambda_{1:T}, gap_{1:T})` and
//!   its simplified form, both valid with probability `1 - 9 T e^{-delta}`
//!   under the spectral conditions SP1-SP3;
//! * the large-`n` form with the absolute constants `c` and `kappa` left to
//!   the caller;
//! * the data-driven quantile `q_chi2 * agg_t 1 / (1 - rho / (sqrt(n) lambda_t gap_t))`
//!   with `rho = eta sqrt(n) min_t lambda_t gap_t`.
//!
//! Throughout, `n` is the per-group sample size of a balanced design.

use serde::{Deserialize, Serialize};

pub use crate::chi2::{chi2_cdf, chi2_quantile, chi2_sf};
use crate::error::{Condition, Error, Result};
use crate::serde_num;

/// How the per-direction inflation factors of the data-driven quantile are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

pub const DEFAULT_ETA: f64 = 0.5;

/// `delta = ln(9 T / alpha)`, so that `alpha = 9 T e^{-delta}`.
pub fn delta_budget(alpha: f64, t: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel(alpha));
    }
    if t == 0 {
        return Err(Error::InvalidDegrees);
    }
    Ok((9.0 * t as f64 / alpha).ln())
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && !value.is_nan() {
        Ok(value)
    } else {
        Err(Error::NonPositiveArgument { name, value })
    }
}

/// `K_{1,t}(n, M_k, delta, gap_t)`.
pub fn k1t(n: f64, sup_bound: f64, delta: f64, gap: f64) -> Result<f64> {
    let n = positive("n", n)?;
    let mk = positive("sup_bound", sup_bound)?;
    let delta = positive("delta", delta)?;
    let gap = positive("gap", gap)?;
    let ratio = (n - 1.0) / n;
    let first = 4.0 * mk * (1.0 + 2.0 * ratio) * (delta / n).sqrt();
    let second = 24.0 * mk * mk / gap
        * (2f64.sqrt() * (1.0 + (2.0 * delta).sqrt()) / n + 4.0 / n.sqrt() * ratio * ratio)
        * (1.0 + (delta / 2.0).sqrt());
    let third = 2.0 * mk / n * (2.0 + delta.sqrt()).powi(2);
    Ok(first + second + third)
}

/// `K_2(n, M_k, delta)`.
pub fn k2(n: f64, sup_bound: f64, delta: f64) -> Result<f64> {
    let n = positive("n", n)?;
    let mk = positive("sup_bound", sup_bound)?;
    let delta = positive("delta", delta)?;
    Ok(12.0 * mk.powf(1.5) / (2.0 * n).sqrt()
        * (1.0 + (2.0 * delta).sqrt())
        * (1.0 + (delta / 2.0).sqrt()))
}

/// Inputs shared by the non-asymptotic bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileParams {
    /// Per-group sample size.
    pub n: f64,
    pub alpha: f64,
    pub delta: f64,
    pub sup_bound: f64,
    pub lambdas: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Whether `lambdas`/`gaps` are empirical plug-ins rather than population values.
    pub plug_in: bool,
}

impl QuantileParams {
    /// Parameters at level `alpha`; `delta` follows from `alpha = 9 T e^{-delta}`.
    pub fn new(
        n: f64,
        alpha: f64,
        sup_bound: f64,
        lambdas: Vec<f64>,
        gaps: Vec<f64>,
    ) -> Result<Self> {
        let delta = delta_budget(alpha, lambdas.len())?;
        Self::build(n, alpha, delta, sup_bound, lambdas, gaps)
    }

    /// Parameters at a given exponential budget `delta`; `alpha` is set to
    /// `9 T e^{-delta}` and may exceed one.
    pub fn from_delta(
        n: f64,
        delta: f64,
        sup_bound: f64,
        lambdas: Vec<f64>,
        gaps: Vec<f64>,
    ) -> Result<Self> {
        positive("delta", delta)?;
        let alpha = 9.0 * lambdas.len() as f64 * (-delta).exp();
        Self::build(n, alpha, delta, sup_bound, lambdas, gaps)
    }

    fn build(
        n: f64,
        alpha: f64,
        delta: f64,
        sup_bound: f64,
        lambdas: Vec<f64>,
        gaps: Vec<f64>,
    ) -> Result<Self> {
        positive("n", n)?;
        positive("sup_bound", sup_bound)?;
        if lambdas.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if gaps.len() != lambdas.len() {
            return Err(Error::SpectralLengthMismatch {
                expected: lambdas.len(),
                found: gaps.len(),
            });
        }
        Ok(Self {
            n,
            alpha,
            delta,
            sup_bound,
            lambdas,
            gaps,
            plug_in: false,
        })
    }

    pub fn plug_in(mut self, plug_in: bool) -> Self {
        self.plug_in = plug_in;
        self
    }

    pub fn truncation(&self) -> usize {
        self.lambdas.len()
    }

    /// `4 M_k sqrt(delta / n)`.
    fn mean_penalty(&self) -> f64 {
        4.0 * self.sup_bound * (self.delta / self.n).sqrt()
    }

    fn sp1_lhs(&self) -> f64 {
        12.0 * self.sup_bound / self.n.sqrt() * (1.0 + (self.delta / 2.0).sqrt())
    }

    fn k1(&self, t: usize) -> f64 {
        // a zero gap sends K_{1,t} to +inf, which fails SP2
        k1t(self.n, self.sup_bound, self.delta, self.gaps[t]).unwrap_or(f64::INFINITY)
    }
}

/// Checks SP1, SP2 and the radicand, returning
/// `(max_t ratio_t, min_t gap_t sqrt(lambda_t - 4 M_k sqrt(delta/n)))`.
fn theorem_core(p: &QuantileParams) -> Result<(f64, f64)> {
    let min_gap = p.gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let sp1 = min_gap - p.sp1_lhs();
    if !(sp1 > 0.0) {
        return Err(Error::SpectralConditionViolated {
            which: Condition::Sp1,
            margin: sp1,
        });
    }
    let sp2 = (0..p.truncation())
        .map(|t| p.lambdas[t] - p.k1(t))
        .fold(f64::INFINITY, f64::min);
    if !(sp2 > 0.0) {
        return Err(Error::SpectralConditionViolated {
            which: Condition::Sp2,
            margin: sp2,
        });
    }
    let a = p.mean_penalty();
    let radicand = p.lambdas.iter().map(|l| l - a).fold(f64::INFINITY, f64::min);
    if !(radicand > 0.0) {
        return Err(Error::SpectralConditionViolated {
            which: Condition::NegativeRadicand,
            margin: radicand,
        });
    }
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_scale = f64::INFINITY;
    for t in 0..p.truncation() {
        let l = p.lambdas[t];
        max_ratio = max_ratio.max((l - a) / (l - p.k1(t)));
        min_scale = min_scale.min(p.gaps[t] * (l - a).sqrt());
    }
    Ok((max_ratio, min_scale))
}

/// Non-asymptotic quantile bound
/// `2 T max_t ratio_t (sqrt(delta) + K_2 / min_t{gap_t sqrt(lambda_t - 4 M_k sqrt(delta/n))})^2`.
pub fn exact_bound(p: &QuantileParams) -> Result<f64> {
    let (max_ratio, min_scale) = theorem_core(p)?;
    let k2 = k2(p.n, p.sup_bound, p.delta)?;
    let t = p.truncation() as f64;
    Ok(2.0 * t * max_ratio * (p.delta.sqrt() + k2 / min_scale).powi(2))
}

/// Largest `c` for which SP3 holds: `sqrt(delta) min_t{...} / K_2`.
pub fn max_sp3_constant(p: &QuantileParams) -> Result<f64> {
    let (_, min_scale) = theorem_core(p)?;
    Ok(p.delta.sqrt() * min_scale / k2(p.n, p.sup_bound, p.delta)?)
}

/// Simplified bound `2 (1 + 1/c)^2 T delta max_t ratio_t` for a given `c`;
/// SP3 must hold for that `c`.
pub fn simplified_bound_with_c(p: &QuantileParams, c: f64) -> Result<f64> {
    positive("c", c)?;
    let (max_ratio, min_scale) = theorem_core(p)?;
    let k2 = k2(p.n, p.sup_bound, p.delta)?;
    let margin = min_scale - c * k2 / p.delta.sqrt();
    if margin < 0.0 {
        return Err(Error::SpectralConditionViolated {
            which: Condition::Sp3,
            margin,
        });
    }
    Ok(simplified_value(p, c, max_ratio))
}

fn simplified_value(p: &QuantileParams, c: f64, max_ratio: f64) -> f64 {
    let t = p.truncation() as f64;
    2.0 * (1.0 + 1.0 / c).powi(2) * t * p.delta * max_ratio
}

/// Simplified bound at the tightest admissible constant `c*`.
///
/// Returns `(bound, c*)`. When `floor` is set, `c* < floor` is reported as an
/// SP3 violation.
pub fn simplified_bound(p: &QuantileParams, floor: Option<f64>) -> Result<(f64, f64)> {
    let (max_ratio, _) = theorem_core(p)?;
    let c_star = max_sp3_constant(p)?;
    if let Some(f) = floor {
        if c_star < f {
            return Err(Error::SpectralConditionViolated {
                which: Condition::Sp3,
                margin: c_star - f,
            });
        }
    }
    Ok((simplified_value(p, c_star, max_ratio), c_star))
}

/// Large-sample form
/// `2 (1 + 1/c)^2 T delta max_t (lambda_t - 8 M_k r) / (lambda_t - (8 M_k + kappa M_k^2 / gap_t) r)`
/// with `r = sqrt(delta / n)`.
pub fn asymptotic_bound(p: &QuantileParams, c: f64, kappa: f64) -> Result<f64> {
    positive("c", c)?;
    if !(kappa >= 0.0) {
        return Err(Error::NonPositiveArgument {
            name: "kappa",
            value: kappa,
        });
    }
    let r = (p.delta / p.n).sqrt();
    let mk = p.sup_bound;
    let mut max_ratio = f64::NEG_INFINITY;
    for t in 0..p.truncation() {
        let l = p.lambdas[t];
        let gap = p.gaps[t];
        if !(gap > 0.0) {
            return Err(Error::NonPositiveSpectralInput { index: t + 1 });
        }
        let den = l - (8.0 * mk + kappa * mk * mk / gap) * r;
        if !(den > 0.0) {
            return Err(Error::DenominatorNonPositive {
                index: t + 1,
                value: den,
            });
        }
        max_ratio = max_ratio.max((l - 8.0 * mk * r) / den);
    }
    let t = p.truncation() as f64;
    Ok(2.0 * (1.0 + 1.0 / c).powi(2) * t * p.delta * max_ratio)
}

/// Data-driven quantile. Returns `(Q, rho)`.
///
/// Every inflation factor `1 / (1 - rho / (sqrt(n) lambda_t gap_t))` lies in
/// `[1, 1 / (1 - eta)]`, the largest being attained at the direction with the
/// smallest `lambda_t gap_t`.
pub fn practical_quantile(
    n: f64,
    alpha: f64,
    lambdas: &[f64],
    gaps: &[f64],
    eta: f64,
    aggregation: Aggregation,
) -> Result<(f64, f64)> {
    let t = lambdas.len();
    if t == 0 {
        return Err(Error::EmptySpectrum);
    }
    if gaps.len() != t {
        return Err(Error::SpectralLengthMismatch {
            expected: t,
            found: gaps.len(),
        });
    }
    positive("n", n)?;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidConfig(format!("eta must lie in (0, 1), got {eta}")));
    }
    for i in 0..t {
        if !(lambdas[i] > 0.0 && gaps[i] > 0.0) {
            return Err(Error::NonPositiveSpectralInput { index: i + 1 });
        }
    }
    let q = chi2_quantile(t, alpha)?;
    let sqrt_n = n.sqrt();
    let products: Vec<f64> = lambdas.iter().zip(gaps).map(|(l, g)| l * g).collect();
    let min_product = products.iter().copied().fold(f64::INFINITY, f64::min);
    let rho = eta * sqrt_n * min_product;
    let factors = products.iter().map(|p| 1.0 / (1.0 - rho / (sqrt_n * p)));
    let aggregate = match aggregation {
        Aggregation::Mean => factors.sum::<f64>() / t as f64,
        Aggregation::Max => factors.fold(f64::NEG_INFINITY, f64::max),
    };
    Ok((q * aggregate, rho))
}

/// Pass/fail with a signed margin (positive when the condition holds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub passed: bool,
    #[serde(serialize_with = "serde_num::tagged")]
    pub margin: f64,
}

impl ConditionCheck {
    fn strict(margin: f64) -> Self {
        Self {
            passed: margin > 0.0,
            margin,
        }
    }

    fn weak(margin: f64) -> Self {
        Self {
            passed: margin >= 0.0,
            margin,
        }
    }
}

/// Absolute constants left open by the theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionConstants {
    /// `c_1` in `lambda_t gap_t >= c_1 M_k^2 sqrt(delta/n)`.
    pub c1: f64,
    /// `c_4` in `lambda_t gap_t >= c_4 M_k^2 / sqrt(n)`.
    pub c4: f64,
    /// Validity floor on the SP3 constant `c*`, if any.
    pub sp3_floor: Option<f64>,
}

impl Default for ConditionConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c4: 1.0,
            sp3_floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub sp1: ConditionCheck,
    /// Margin is `min_t (lambda_t - K_{1,t})`.
    pub sp2: ConditionCheck,
    /// Margin is `min_t (lambda_t - 4 M_k sqrt(delta/n))`.
    pub radicand: ConditionCheck,
    /// Margin is `c* - floor` (`floor = 0` when unset).
    pub sp3: ConditionCheck,
    #[serde(serialize_with = "serde_num::tagged_opt")]
    pub c_star: Option<f64>,
    /// `min_t lambda_t gap_t - c_1 M_k^2 sqrt(delta/n)`.
    pub delta_lambda_asymptotic: ConditionCheck,
    /// `min_t lambda_t gap_t - c_4 M_k^2 / sqrt(n)`; heuristic since `c_4` is unspecified.
    pub delta_lambda_practical: ConditionCheck,
    pub constants: ConditionConstants,
}

pub fn check_conditions(p: &QuantileParams, constants: ConditionConstants) -> ConditionReport {
    let min_gap = p.gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let sp1 = ConditionCheck::strict(min_gap - p.sp1_lhs());
    let sp2 = ConditionCheck::strict(
        (0..p.truncation())
            .map(|t| p.lambdas[t] - p.k1(t))
            .fold(f64::INFINITY, f64::min),
    );
    let a = p.mean_penalty();
    let radicand = ConditionCheck::strict(p.lambdas.iter().map(|l| l - a).fold(f64::INFINITY, f64::min));
    let c_star = if sp1.passed && sp2.passed && radicand.passed {
        max_sp3_constant(p).ok()
    } else {
        None
    };
    let floor = constants.sp3_floor.unwrap_or(0.0);
    let sp3 = match c_star {
        Some(c) if constants.sp3_floor.is_some() => ConditionCheck::weak(c - floor),
        Some(c) => ConditionCheck::strict(c),
        None => ConditionCheck {
            passed: false,
            margin: f64::NAN,
        },
    };
    let min_product = p
        .lambdas
        .iter()
        .zip(&p.gaps)
        .map(|(l, g)| l * g)
        .fold(f64::INFINITY, f64::min);
    let mk2 = p.sup_bound * p.sup_bound;
    ConditionReport {
        sp1,
        sp2,
        radicand,
        sp3,
        c_star,
        delta_lambda_asymptotic: ConditionCheck::weak(
            min_product - constants.c1 * mk2 * (p.delta / p.n).sqrt(),
        ),
        delta_lambda_practical: ConditionCheck::weak(min_product - constants.c4 * mk2 / p.n.sqrt()),
        constants,
    }
}

/// Tunables for [`quantile_bundle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleOptions {
    pub eta: f64,
    pub aggregation: Aggregation,
    pub constants: ConditionConstants,
    /// `c` for the large-sample form.
    pub asymptotic_c: f64,
    pub kappa: f64,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            aggregation: Aggregation::Mean,
            constants: ConditionConstants::default(),
            asymptotic_c: 1.0,
            kappa: 1.0,
        }
    }
}

/// Every threshold evaluated on one spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileBundle {
    pub truncation: usize,
    pub alpha: f64,
    pub delta: f64,
    pub n: f64,
    pub chi2_q: f64,
    #[serde(serialize_with = "serde_num::tagged_opt")]
    pub practical_q: Option<f64>,
    pub aggregation: Aggregation,
    pub eta: f64,
    #[serde(serialize_with = "serde_num::tagged_opt")]
    pub rho: Option<f64>,
    #[serde(serialize_with = "serde_num::tagged_opt")]
    pub exact_q: Option<f64>,
    #[serde(serialize_with = "serde_num::tagged_opt")]
    pub simplified_q: Option<f64>,
    #[serde(serialize_with = "serde_num::tagged_opt")]
    pub asymptotic_q: Option<f64>,
    /// `None` when the kernel has no declared sup bound.
    pub conditions: Option<ConditionReport>,
    /// Non-asymptotic bounds were evaluated on empirical eigen-elements.
    pub plug_in: bool,
}

/// Evaluates all thresholds. `sup_bound = None` leaves the bounds that need
/// `M_k` absent.
pub fn quantile_bundle(
    n: f64,
    alpha: f64,
    lambdas: &[f64],
    gaps: &[f64],
    sup_bound: Option<f64>,
    plug_in: bool,
    opts: &BundleOptions,
) -> Result<QuantileBundle> {
    let t = lambdas.len();
    let delta = delta_budget(alpha, t)?;
    let chi2_q = chi2_quantile(t, alpha)?;
    let practical = practical_quantile(n, alpha, lambdas, gaps, opts.eta, opts.aggregation).ok();
    let mut bundle = QuantileBundle {
        truncation: t,
        alpha,
        delta,
        n,
        chi2_q,
        practical_q: practical.map(|p| p.0),
        aggregation: opts.aggregation,
        eta: opts.eta,
        rho: practical.map(|p| p.1),
        exact_q: None,
        simplified_q: None,
        asymptotic_q: None,
        conditions: None,
        plug_in,
    };
    if let Some(mk) = sup_bound {
        let p = QuantileParams::new(n, alpha, mk, lambdas.to_vec(), gaps.to_vec())?.plug_in(plug_in);
        let report = check_conditions(&p, opts.constants);
        bundle.exact_q = exact_bound(&p).ok();
        bundle.simplified_q = simplified_bound(&p, opts.constants.sp3_floor).ok().map(|v| v.0);
        if report.delta_lambda_asymptotic.passed {
            bundle.asymptotic_q = asymptotic_bound(&p, opts.asymptotic_c, opts.kappa).ok();
        }
        bundle.conditions = Some(report);
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn k2_hand_value() {
        assert!((k2(2.0, 1.0, 0.5).unwrap() - 18.0).abs() < 1e-13);
    }

    #[test]
    fn constants_increase_in_sup_bound() {
        let mut prev = (0.0, 0.0);
        for mk in [0.5, 1.0, 2.0, 4.0] {
            let a = k1t(100.0, mk, 2.0, 0.1).unwrap();
            let b = k2(100.0, mk, 2.0).unwrap();
            assert!(a > prev.0 && b > prev.1);
            prev = (a, b);
        }
    }

    #[test]
    fn k1t_diverges_as_gap_vanishes() {
        let mut prev = 0.0f64;
        for gap in [1e-1, 1e-3, 1e-6, 1e-9] {
            let v = k1t(1000.0, 1.0, 3.0, gap).unwrap();
            assert!(v > 10.0 * prev);
            prev = v;
        }
        assert!(prev > 1e6);
        assert!(k1t(10.0, 1.0, 1.0, 0.0).is_err());
        assert!(k2(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn delta_inverts_level() {
        for t in 1..20 {
            for &a in &[0.2, 0.05, 0.01, 1e-4] {
                let d = delta_budget(a, t).unwrap();
                let back = 9.0 * t as f64 * (-d).exp();
                assert!((back - a).abs() <= 4.0 * f64::EPSILON * a);
            }
        }
        assert!(delta_budget(1.0, 2).is_err());
    }

    #[test]
    fn sp2_violation_is_reported() {
        let n = 1e6;
        let p0 = QuantileParams::from_delta(n, 1.0, 1.0, vec![1.0], vec![0.5]).unwrap();
        let k1 = p0.k1(0);
        let p = QuantileParams::from_delta(n, 1.0, 1.0, vec![k1 * 0.999], vec![0.5]).unwrap();
        match exact_bound(&p) {
            Err(Error::SpectralConditionViolated { which, margin }) => {
                assert_eq!(which, Condition::Sp2);
                assert!(margin < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exact_bound_approaches_two_t_delta() {
        let delta = 1.0;
        let at = |n: f64| QuantileParams::from_delta(n, delta, 1.0, vec![1.0], vec![0.5]).unwrap();
        // the smallest sample size of the sweep is outside the admissible region
        assert!(matches!(
            exact_bound(&at(1e4)),
            Err(Error::SpectralConditionViolated { which: Condition::Sp2, .. })
        ));
        let mut prev = f64::INFINITY;
        for n in [1e6, 1e8] {
            let p = QuantileParams::from_delta(n, delta, 1.0, vec![1.0], vec![0.5]).unwrap();
            let q = exact_bound(&p).unwrap();
            assert!(q < prev);
            prev = q;
        }
        assert!((prev - 2.0 * delta).abs() <= 0.05 * 2.0 * delta, "{prev}");
    }

    #[test]
    fn simplified_bound_relaxes_exact_bound() {
        let p = QuantileParams::from_delta(1e9, 2.0, 1.0, vec![0.8, 0.3], vec![0.25, 0.15]).unwrap();
        let exact = exact_bound(&p).unwrap();
        let (simplified, c_star) = simplified_bound(&p, None).unwrap();
        assert!(exact <= simplified * (1.0 + 1e-12));
        for c in [0.5 * c_star, 0.1 * c_star] {
            assert!(simplified_bound_with_c(&p, c).unwrap() >= simplified);
        }
        assert!(simplified_bound_with_c(&p, 2.0 * c_star).is_err());
        assert!(matches!(
            simplified_bound(&p, Some(c_star * 1.5)),
            Err(Error::SpectralConditionViolated { which: Condition::Sp3, .. })
        ));
    }

    #[test]
    fn simplified_large_c_limit() {
        let p = QuantileParams::from_delta(1e9, 2.0, 1.0, vec![0.8, 0.3], vec![0.25, 0.15]).unwrap();
        let (max_ratio, _) = theorem_core(&p).unwrap();
        let limit = 2.0 * 2.0 * 2.0 * max_ratio;
        let v = simplified_value(&p, 1e9, max_ratio);
        assert!((v - limit).abs() < 1e-8 * limit);
    }

    #[test]
    fn asymptotic_limits() {
        let p = QuantileParams::from_delta(1e20, 3.0, 1.0, vec![0.5, 0.2], vec![0.15, 0.1]).unwrap();
        let v = asymptotic_bound(&p, 2.0, 1.0).unwrap();
        let limit = 2.0 * 1.5f64.powi(2) * 2.0 * 3.0;
        assert!((v - limit).abs() < 1e-7 * limit);

        let p = QuantileParams::from_delta(1e4, 3.0, 1.0, vec![0.5, 0.2], vec![0.15, 0.1]).unwrap();
        let r = (3.0f64 / 1e4).sqrt();
        let manual = (0..2)
            .map(|t| (p.lambdas[t] - 8.0 * r) / (p.lambdas[t] - 8.0 * r))
            .fold(f64::NEG_INFINITY, f64::max);
        let v = asymptotic_bound(&p, 1.0, 0.0).unwrap();
        assert!((v - 2.0 * 4.0 * 2.0 * 3.0 * manual).abs() < 1e-12 * v);

        let p = QuantileParams::from_delta(100.0, 3.0, 1.0, vec![0.5], vec![0.01]).unwrap();
        assert!(matches!(
            asymptotic_bound(&p, 1.0, 1.0),
            Err(Error::DenominatorNonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn practical_equal_spectrum_doubles() {
        for agg in [Aggregation::Mean, Aggregation::Max] {
            let (q, _) = practical_quantile(50.0, 0.05, &[0.4, 0.2, 0.1], &[0.05, 0.1, 0.2], 0.5, agg).unwrap();
            let chi = chi2_quantile(3, 0.05).unwrap();
            assert!((q - 2.0 * chi).abs() < 1e-12 * chi);
        }
    }

    #[test]
    fn practical_small_eta_recovers_chi2() {
        let chi = chi2_quantile(3, 0.05).unwrap();
        let (q, _) =
            practical_quantile(50.0, 0.05, &[0.4, 0.2, 0.1], &[0.1, 0.05, 0.02], 1e-9, Aggregation::Mean)
                .unwrap();
        assert!((q - chi).abs() < 1e-8 * chi);
    }

    #[test]
    fn practical_hand_example() {
        let (q, rho) =
            practical_quantile(100.0, 0.05, &[0.4, 0.1], &[0.5, 0.5], 0.5, Aggregation::Mean).unwrap();
        assert!((rho - 0.25).abs() < 1e-15);
        let expected = chi2_quantile(2, 0.05).unwrap() * (1.0 / 0.875 + 1.0 / 0.5) / 2.0;
        assert!((q - expected).abs() < 1e-12 * expected);
        assert!((q - 9.415).abs() < 1e-3);
    }

    #[test]
    fn practical_rejects_bad_inputs() {
        assert!(matches!(
            practical_quantile(10.0, 0.05, &[0.4, 0.0], &[0.1, 0.1], 0.5, Aggregation::Mean),
            Err(Error::NonPositiveSpectralInput { index: 2 })
        ));
        assert!(practical_quantile(10.0, 0.05, &[0.4], &[0.1], 1.0, Aggregation::Mean).is_err());
        assert!(practical_quantile(10.0, 0.05, &[], &[], 0.5, Aggregation::Mean).is_err());
    }

    #[test]
    fn conditions_examples() {
        let p = QuantileParams::from_delta(100.0, 2.0, 1.0, vec![0.5, 0.3], vec![0.1, 0.0]).unwrap();
        let r = check_conditions(&p, ConditionConstants::default());
        assert!(!r.sp1.passed);
        assert!((r.sp1.margin + p.sp1_lhs()).abs() < 1e-15);
        assert!(!r.sp2.passed);
        assert_eq!(r.c_star, None);

        let p = QuantileParams::from_delta(1e12, 2.0, 1.0, vec![0.5, 0.3], vec![0.1, 0.1]).unwrap();
        let r = check_conditions(&p, ConditionConstants::default());
        assert!(r.sp1.passed && r.sp2.passed && r.radicand.passed && r.sp3.passed);
        assert!(r.delta_lambda_asymptotic.passed && r.delta_lambda_practical.passed);
    }

    #[test]
    fn bundle_absences_follow_conditions() {
        let b = quantile_bundle(50.0, 0.05, &[0.3, 0.1], &[0.1, 0.05], Some(1.0), true, &BundleOptions::default())
            .unwrap();
        let c = b.conditions.as_ref().unwrap();
        assert_eq!(b.exact_q.is_some(), c.sp1.passed && c.sp2.passed && c.radicand.passed);
        assert!(b.practical_q.unwrap() > b.chi2_q);
        let b = quantile_bundle(50.0, 0.05, &[0.3, 0.1], &[0.1, 0.05], None, true, &BundleOptions::default())
            .unwrap();
        assert!(b.conditions.is_none() && b.exact_q.is_none());
    }

    #[test]
    fn single_direction_sits_on_the_upper_bracket() {
        let chi = chi2_quantile(1, 0.05).unwrap();
        for eta in [0.1, 0.5, 0.9] {
            let (q, _) = practical_quantile(80.0, 0.05, &[0.7], &[0.2], eta, Aggregation::Mean).unwrap();
            assert!((q - chi / (1.0 - eta)).abs() <= 1e-12 * q);
        }
    }

    fn spectrum() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..8).prop_flat_map(|t| {
            (
                prop::collection::vec(1e-3f64..2.0, t),
                prop::collection::vec(1e-4f64..1.0, t),
            )
        })
    }

    proptest! {
        #[test]
        fn bracket_and_ordering((l, g) in spectrum(), eta in 0.01f64..0.99, n in 2.0f64..1e5) {
            let chi = chi2_quantile(l.len(), 0.05).unwrap();
            let (mean, _) = practical_quantile(n, 0.05, &l, &g, eta, Aggregation::Mean).unwrap();
            let (max, _) = practical_quantile(n, 0.05, &l, &g, eta, Aggregation::Max).unwrap();
            prop_assert!(chi < mean);
            prop_assert!(mean <= max);
            prop_assert!(mean <= chi / (1.0 - eta) * (1.0 + 1e-12));
        }

        #[test]
        fn exact_bound_monotone_in_n(
            (l, g) in spectrum(),
            delta in 0.5f64..6.0,
            log_n in 4.0f64..12.0,
        ) {
            let n = 10f64.powf(log_n);
            let a = QuantileParams::from_delta(n, delta, 1.0, l.clone(), g.clone()).unwrap();
            let b = QuantileParams::from_delta(n * 4.0, delta, 1.0, l.clone(), g.clone()).unwrap();
            if let (Ok(qa), Ok(qb)) = (exact_bound(&a), exact_bound(&b)) {
                prop_assert!(qb <= qa);
                let (_, _) = theorem_core(&a).unwrap();
                let a_pen = a.mean_penalty();
                let min_ratio = (0..l.len())
                    .map(|t| (l[t] - a_pen) / (l[t] - a.k1(t)))
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(qa >= 2.0 * l.len() as f64 * delta * min_ratio);
            }
            if exact_bound(&a).is_ok() {
                prop_assert!(exact_bound(&b).is_ok());
            }
        }
    }
}
