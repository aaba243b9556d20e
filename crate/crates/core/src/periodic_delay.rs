//! The delay `tau(t) = tau0 + eps * tau~(t)` with `tau~` a truncated Fourier series.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on `a_{-k} = conj(a_k)`.
const HERMITIAN_TOL: f64 = 1e-12;

/// Number of samples per period used when a sufficient bound is inconclusive.
pub const DENSE_SAMPLES: usize = 10_000;

/// Real-valued truncated Fourier series `sum_{k=-K}^{K} a_k exp(j k omega t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    omega: f64,
    /// `coeffs[k + K] = a_k`.
    coeffs: Vec<Complex64>,
}

impl FourierSeries {
    /// Builds a series of truncation order `order` from `(k, a_k)` pairs.
    ///
    /// Harmonics not listed are zero. The listed coefficients must be
    /// Hermitian-symmetric so that the series is real-valued.
    pub fn new(
        omega: f64,
        order: usize,
        coeffs: impl IntoIterator<Item = (i32, Complex64)>,
    ) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        if order == 0 {
            return Err(Error::InvalidParameter("truncation order must be at least 1".into()));
        }
        let k_max = order as i32;
        let mut dense = vec![Complex64::new(0.0, 0.0); 2 * order + 1];
        for (k, a) in coeffs {
            if k.abs() > k_max {
                return Err(Error::InvalidParameter(format!(
                    "harmonic {k} exceeds truncation order {order}"
                )));
            }
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(Error::InvalidParameter(format!("coefficient a_{k} is not finite")));
            }
            dense[(k + k_max) as usize] = a;
        }
        let series = Self { omega, coeffs: dense };
        for k in 0..=k_max {
            let a = series.coeff(k);
            let mirror = series.coeff(-k);
            if (mirror - a.conj()).norm() > HERMITIAN_TOL * a.norm().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "coefficients are not Hermitian at k = {k}: a_-k = {mirror}, conj(a_k) = {}",
                    a.conj()
                )));
            }
        }
        Ok(series)
    }

    /// Builds a series from the non-negative harmonics; `a_{-k}` is filled in as `conj(a_k)`.
    pub fn from_nonnegative(
        omega: f64,
        coeffs: impl IntoIterator<Item = (i32, Complex64)>,
    ) -> Result<Self> {
        let coeffs: Vec<_> = coeffs.into_iter().collect();
        if let Some((k, _)) = coeffs.iter().find(|(k, _)| *k < 0) {
            return Err(Error::InvalidParameter(format!("negative harmonic {k} given")));
        }
        if let Some((_, a0)) = coeffs.iter().find(|(k, _)| *k == 0) {
            if a0.im.abs() > HERMITIAN_TOL {
                return Err(Error::InvalidParameter("a_0 must be real".into()));
            }
        }
        let order = coeffs.iter().map(|(k, _)| *k as usize).max().unwrap_or(1).max(1);
        let full = coeffs
            .iter()
            .flat_map(|&(k, a)| {
                if k == 0 {
                    vec![(0, Complex64::new(a.re, 0.0))]
                } else {
                    vec![(k, a), (-k, a.conj())]
                }
            })
            .collect::<Vec<_>>();
        Self::new(omega, order, full)
    }

    /// `sin(omega t)`: `a_1 = 1/(2j)`, `a_{-1} = -1/(2j)`.
    pub fn sine(omega: f64) -> Result<Self> {
        let a1 = Complex64::new(0.0, -0.5);
        Self::new(omega, 1, [(1, a1), (-1, a1.conj())])
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Truncation order `K`.
    pub fn order(&self) -> usize {
        (self.coeffs.len() - 1) / 2
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// `a_k`, zero outside the stored band.
    pub fn coeff(&self, k: i32) -> Complex64 {
        let k_max = self.order() as i32;
        if k.abs() > k_max {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + k_max) as usize]
        }
    }

    /// Iterates `(k, a_k)` over the full band `-K..=K`.
    pub fn iter(&self) -> impl Iterator<Item = (i32, Complex64)> + '_ {
        let k_max = self.order() as i32;
        self.coeffs.iter().enumerate().map(move |(i, a)| (i as i32 - k_max, *a))
    }

    /// Full complex sum; the imaginary part is round-off for Hermitian coefficients.
    pub fn eval_complex(&self, t: f64) -> Complex64 {
        self.iter()
            .map(|(k, a)| a * Complex64::from_polar(1.0, k as f64 * self.omega * t))
            .sum()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_complex(t).re
    }

    /// Term-by-term derivative `sum j k omega a_k exp(j k omega t)`.
    pub fn eval_derivative_complex(&self, t: f64) -> Complex64 {
        self.iter()
            .map(|(k, a)| {
                Complex64::new(0.0, k as f64 * self.omega)
                    * a
                    * Complex64::from_polar(1.0, k as f64 * self.omega * t)
            })
            .sum()
    }

    pub fn eval_derivative(&self, t: f64) -> f64 {
        self.eval_derivative_complex(t).re
    }

    /// `sum |a_k|`, an upper bound on `sup |tau~|`.
    pub fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm()).sum()
    }

    /// `sum |k a_k|`; `omega` times this bounds `sup |tau~'|`.
    pub fn harmonic_abs_sum(&self) -> f64 {
        self.iter().map(|(k, a)| (k as f64).abs() * a.norm()).sum()
    }

    /// Largest and smallest value of `f` over one period on a uniform grid.
    fn sampled_extrema(&self, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let period = self.period();
        (0..DENSE_SAMPLES)
            .map(|i| f(period * i as f64 / DENSE_SAMPLES as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

/// How a hypothesis check reached its verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMethod {
    /// Closed-form sufficient bound on the coefficients.
    Bound,
    /// Dense sampling over one period.
    Sampled,
    /// Direct evaluation of the defining quantity.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub status: CheckStatus,
    pub method: CheckMethod,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceCheck {
    pub status: CheckStatus,
    /// `omega * tau0 mod pi`.
    pub phase_mod_pi: f64,
    /// Distance from `omega * tau0` to the nearest multiple of pi.
    pub margin: f64,
    pub nearest_multiple: u64,
}

/// Outcome of checking a delay against the expansion hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `sup tau'(t) < 1`.
    pub tau_dot: Check,
    /// `eps / tau0` below the configured ratio.
    pub eps_ratio: Check,
    /// `a_0 = 0`.
    pub zero_mean: Check,
    /// `omega * tau0` away from every multiple of pi.
    pub resonance: ResonanceCheck,
    /// `sup |tau~| <= 1`. Informational: never reported as a failure.
    pub shape_bound: Check,
}

impl HypothesisReport {
    /// True when no check failed (warnings allowed).
    pub fn passed(&self) -> bool {
        [self.tau_dot.status, self.eps_ratio.status, self.zero_mean.status, self.resonance.status]
            .iter()
            .all(|s| *s != CheckStatus::Fail)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.tau_dot.status == CheckStatus::Fail {
            out.push("tau_dot");
        }
        if self.eps_ratio.status == CheckStatus::Fail {
            out.push("eps_ratio");
        }
        if self.zero_mean.status == CheckStatus::Fail {
            out.push("zero_mean");
        }
        if self.resonance.status == CheckStatus::Fail {
            out.push("resonance");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisOptions {
    pub eps_ratio_max: f64,
    /// Resonance margin (rad) below which the check fails.
    pub resonance_fail: f64,
    /// Resonance margin (rad) below which the check warns.
    pub resonance_warn: f64,
}

impl Default for HypothesisOptions {
    fn default() -> Self {
        Self { eps_ratio_max: 0.2, resonance_fail: 1e-6, resonance_warn: 0.05 }
    }
}

/// `tau(t) = tau0 + eps * tau~(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicDelay {
    tau0: f64,
    eps: f64,
    shape: FourierSeries,
}

impl PeriodicDelay {
    /// Validates `tau0 > 0`, `eps >= 0` and `tau(t) > 0` for all `t`.
    ///
    /// The remaining hypotheses (`tau' < 1`, non-resonance, ...) are not
    /// enforced here; see [`PeriodicDelay::validate_hypotheses`].
    pub fn new(tau0: f64, eps: f64, shape: FourierSeries) -> Result<Self> {
        if !(tau0.is_finite() && tau0 > 0.0) {
            return Err(Error::InvalidParameter(format!("tau0 must be positive, got {tau0}")));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be non-negative, got {eps}")));
        }
        let delay = Self { tau0, eps, shape };
        if tau0 - eps * delay.shape.abs_sum() <= 0.0 {
            let (lo, _) = delay.shape.sampled_extrema(|t| delay.tau(t));
            if lo <= 0.0 {
                return Err(Error::ConstraintViolation(format!(
                    "tau(t) reaches {lo:.6e} <= 0 within one period"
                )));
            }
        }
        Ok(delay)
    }

    /// `tau0 + eps * sin(omega t)`.
    pub fn sinusoid(tau0: f64, omega: f64, eps: f64) -> Result<Self> {
        Self::new(tau0, eps, FourierSeries::sine(omega)?)
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn omega(&self) -> f64 {
        self.shape.omega
    }

    pub fn shape(&self) -> &FourierSeries {
        &self.shape
    }

    pub fn period(&self) -> f64 {
        self.shape.period()
    }

    /// Same shape and mean delay with a different amplitude.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.tau0, eps, self.shape.clone())
    }

    /// `tau(t)`; positive by construction.
    pub fn tau(&self, t: f64) -> f64 {
        self.tau0 + self.eps * self.shape.eval(t)
    }

    pub fn tau_dot(&self, t: f64) -> f64 {
        self.eps * self.shape.eval_derivative(t)
    }

    /// Guaranteed bounds `tau0 -/+ eps * sum |a_k|` on `tau`.
    pub fn tau_bounds(&self) -> (f64, f64) {
        let spread = self.eps * self.shape.abs_sum();
        (self.tau0 - spread, self.tau0 + spread)
    }

    /// Smallest value of `tau`: the bound when it is positive, else sampled.
    pub fn tau_min(&self) -> f64 {
        let (lo, _) = self.tau_bounds();
        if lo > 0.0 {
            lo
        } else {
            self.shape.sampled_extrema(|t| self.tau(t)).0
        }
    }

    /// Upper estimate of `sup tau'`, from the coefficient bound if it is
    /// below one and from dense sampling otherwise.
    pub fn tau_dot_sup(&self) -> (f64, CheckMethod) {
        let bound = self.eps * self.omega() * self.shape.harmonic_abs_sum();
        if bound < 1.0 {
            (bound, CheckMethod::Bound)
        } else {
            (self.shape.sampled_extrema(|t| self.tau_dot(t)).1, CheckMethod::Sampled)
        }
    }

    pub fn validate_hypotheses(&self) -> HypothesisReport {
        self.validate_hypotheses_with(&HypothesisOptions::default())
    }

    pub fn validate_hypotheses_with(&self, opts: &HypothesisOptions) -> HypothesisReport {
        let (sup_dot, dot_method) = self.tau_dot_sup();
        let tau_dot = Check {
            status: if sup_dot < 1.0 { CheckStatus::Pass } else { CheckStatus::Fail },
            method: dot_method,
            value: sup_dot,
            threshold: 1.0,
        };

        let ratio = self.eps / self.tau0;
        let eps_ratio = Check {
            status: if ratio < opts.eps_ratio_max { CheckStatus::Pass } else { CheckStatus::Fail },
            method: CheckMethod::Exact,
            value: ratio,
            threshold: opts.eps_ratio_max,
        };

        let a0 = self.shape.coeff(0).norm();
        let zero_mean = Check {
            status: if a0 <= HERMITIAN_TOL { CheckStatus::Pass } else { CheckStatus::Fail },
            method: CheckMethod::Exact,
            value: a0,
            threshold: HERMITIAN_TOL,
        };

        let phase = self.omega() * self.tau0;
        let phase_mod_pi = phase.rem_euclid(PI);
        let (margin, nearest_multiple) = if phase_mod_pi <= PI - phase_mod_pi {
            (phase_mod_pi, (phase / PI).floor() as u64)
        } else {
            (PI - phase_mod_pi, (phase / PI).floor() as u64 + 1)
        };
        let resonance = ResonanceCheck {
            status: if margin < opts.resonance_fail {
                CheckStatus::Fail
            } else if margin < opts.resonance_warn {
                CheckStatus::Warn
            } else {
                CheckStatus::Pass
            },
            phase_mod_pi,
            margin,
            nearest_multiple,
        };

        let bound = self.shape.abs_sum();
        let (sup_shape, shape_method) = if bound <= 1.0 {
            (bound, CheckMethod::Bound)
        } else {
            let (lo, hi) = self.shape.sampled_extrema(|t| self.shape.eval(t));
            (lo.abs().max(hi.abs()), CheckMethod::Sampled)
        };
        let shape_bound = Check {
            status: if sup_shape <= 1.0 + HERMITIAN_TOL { CheckStatus::Pass } else { CheckStatus::Warn },
            method: shape_method,
            value: sup_shape,
            threshold: 1.0,
        };

        HypothesisReport { tau_dot, eps_ratio, zero_mean, resonance, shape_bound }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Sin,
}

/// Delay profile as read from a JSON or TOML file.
///
/// Exactly one of `kind` and `coeffs` must be given. `coeffs` holds
/// `(k, re, im)` triples; when no negative harmonic is listed the negative
/// half is filled in by conjugation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayProfile {
    pub tau0: f64,
    pub eps: f64,
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ShapeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<(i32, f64, f64)>>,
}

impl DelayProfile {
    pub fn sinusoid(tau0: f64, omega: f64, eps: f64) -> Self {
        Self { tau0, eps, omega, kind: Some(ShapeKind::Sin), coeffs: None }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads a profile, choosing the format from the file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            Some("toml") => Self::from_toml_str(&text),
            other => Err(Error::Parse(format!(
                "unsupported delay profile extension {other:?}; expected .json or .toml"
            ))),
        }
    }

    pub fn to_delay(&self) -> Result<PeriodicDelay> {
        let shape = match (&self.kind, &self.coeffs) {
            (Some(ShapeKind::Sin), None) => FourierSeries::sine(self.omega)?,
            (None, Some(triples)) => {
                let pairs = triples.iter().map(|&(k, re, im)| (k, Complex64::new(re, im)));
                if triples.iter().any(|(k, _, _)| *k < 0) {
                    let order = triples.iter().map(|(k, _, _)| k.unsigned_abs() as usize).max();
                    FourierSeries::new(self.omega, order.unwrap_or(1).max(1), pairs)?
                } else {
                    FourierSeries::from_nonnegative(self.omega, pairs)?
                }
            }
            _ => {
                return Err(Error::Parse(
                    "delay profile needs exactly one of `kind` or `coeffs`".into(),
                ))
            }
        };
        PeriodicDelay::new(self.tau0, self.eps, shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig() -> PeriodicDelay {
        PeriodicDelay::sinusoid(3.0, 5.0, 0.1).unwrap()
    }

    #[test]
    fn tau_at_origin_and_quarter_period() {
        let d = fig();
        assert!((d.tau(0.0) - 3.0).abs() < 1e-15);
        assert!((d.tau(PI / 10.0) - 3.1).abs() < 1e-14);
    }

    #[test]
    fn zero_eps_is_constant() {
        let d = PeriodicDelay::sinusoid(3.0, 5.0, 0.0).unwrap();
        for t in [-4.0, 0.0, 0.3, 17.2] {
            assert_eq!(d.tau(t), 3.0);
            assert_eq!(d.tau_dot(t), 0.0);
        }
    }

    #[test]
    fn tau_dot_values() {
        let d = fig();
        assert!((d.tau_dot(0.0) - 0.5).abs() < 1e-15);
        assert!(d.tau_dot(PI / 10.0).abs() < 1e-15);
    }

    #[test]
    fn hypotheses_pass_for_reference_delay() {
        let r = fig().validate_hypotheses();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.tau_dot.method, CheckMethod::Bound);
        assert!((r.tau_dot.value - 0.5).abs() < 1e-15);
        // 15 rad: 15 mod pi = 15 - 4 pi; the nearest multiple is 5 pi.
        assert!((r.resonance.phase_mod_pi - (15.0 - 4.0 * PI)).abs() < 1e-12);
        assert!((r.resonance.margin - (5.0 * PI - 15.0)).abs() < 1e-12);
        assert_eq!(r.resonance.nearest_multiple, 5);
        assert_eq!(r.resonance.status, CheckStatus::Pass);
        assert_eq!(r.shape_bound.status, CheckStatus::Pass);
    }

    #[test]
    fn exact_resonance_fails() {
        let d = PeriodicDelay::sinusoid(PI, 1.0, 0.1).unwrap();
        let r = d.validate_hypotheses();
        assert_eq!(r.resonance.status, CheckStatus::Fail);
        assert!(!r.passed());
        assert_eq!(r.failures(), vec!["resonance"]);
    }

    #[test]
    fn near_resonance_warns() {
        let d = PeriodicDelay::sinusoid(PI + 0.01, 1.0, 0.1).unwrap();
        assert_eq!(d.validate_hypotheses().resonance.status, CheckStatus::Warn);
    }

    #[test]
    fn fast_delay_fails_tau_dot() {
        let d = PeriodicDelay::sinusoid(3.0, 5.0, 0.25).unwrap();
        let r = d.validate_hypotheses();
        assert_eq!(r.tau_dot.status, CheckStatus::Fail);
        assert_eq!(r.tau_dot.method, CheckMethod::Sampled);
        assert!((r.tau_dot.value - 1.25).abs() < 1e-9);
    }

    #[test]
    fn sampling_rescues_conservative_bound() {
        // 0.5 sin t + 0.5 cos 2t: sum |k a_k| overshoots the true sup of tau~'.
        let shape = FourierSeries::from_nonnegative(
            1.0,
            [(1, Complex64::new(0.0, -0.25)), (2, Complex64::new(0.25, 0.0))],
        )
        .unwrap();
        // sum |k a_k| = 1.5 while sup |tau~'| ~= 1.368.
        assert!((shape.harmonic_abs_sum() - 1.5).abs() < 1e-15);
        let eps = 0.7;
        let d = PeriodicDelay::new(3.0, eps, shape).unwrap();
        let (sup, method) = d.tau_dot_sup();
        assert_eq!(method, CheckMethod::Sampled);
        assert!(sup < 1.0, "sampled sup {sup}");
    }

    #[test]
    fn nonzero_mean_fails() {
        let shape =
            FourierSeries::from_nonnegative(1.0, [(0, Complex64::new(0.1, 0.0)), (1, Complex64::new(0.2, 0.0))])
                .unwrap();
        let d = PeriodicDelay::new(3.0, 0.1, shape).unwrap();
        assert_eq!(d.validate_hypotheses().zero_mean.status, CheckStatus::Fail);
    }

    #[test]
    fn oversized_shape_is_informational() {
        let shape = FourierSeries::from_nonnegative(1.0, [(1, Complex64::new(1.0, 0.0))]).unwrap();
        let d = PeriodicDelay::new(3.0, 0.01, shape).unwrap();
        let r = d.validate_hypotheses();
        assert_eq!(r.shape_bound.status, CheckStatus::Warn);
        assert!((r.shape_bound.value - 2.0).abs() < 1e-6);
        assert!(r.passed());
    }

    #[test]
    fn rejects_non_positive_delay() {
        let err = PeriodicDelay::sinusoid(0.05, 1.0, 0.1).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation(_)));
        assert!(PeriodicDelay::sinusoid(-1.0, 1.0, 0.0).is_err());
        assert!(PeriodicDelay::sinusoid(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn rejects_non_hermitian_coefficients() {
        let err = FourierSeries::new(
            1.0,
            1,
            [(1, Complex64::new(0.0, -0.5)), (-1, Complex64::new(0.0, -0.5))],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn profile_parses_both_formats() {
        let json = r#"{"tau0": 3.0, "eps": 0.1, "omega": 5.0, "kind": "sin"}"#;
        let toml = "tau0 = 3.0\neps = 0.1\nomega = 5.0\ncoeffs = [[1, 0.0, -0.5]]\n";
        let a = DelayProfile::from_json_str(json).unwrap().to_delay().unwrap();
        let b = DelayProfile::from_toml_str(toml).unwrap().to_delay().unwrap();
        assert_eq!(a, b);
        assert_eq!(a, fig());
    }

    #[test]
    fn profile_requires_one_shape_source() {
        let p = DelayProfile { tau0: 3.0, eps: 0.1, omega: 5.0, kind: None, coeffs: None };
        assert!(matches!(p.to_delay(), Err(Error::Parse(_))));
    }

    #[test]
    fn profile_with_explicit_negative_harmonics() {
        let p = DelayProfile {
            tau0: 3.0,
            eps: 0.1,
            omega: 5.0,
            kind: None,
            coeffs: Some(vec![(1, 0.0, -0.5), (-1, 0.0, 0.5)]),
        };
        assert_eq!(p.to_delay().unwrap(), fig());
    }
}
