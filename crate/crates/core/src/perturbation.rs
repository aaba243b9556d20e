//! First- and second-order perturbative time-transformations.
//!
//! With `nu = omega * tau0 / tau*` the expansions are
//!
//! ```text
//! h(l) = (tau0/tau*) l + eps sum_k b_k e^{j k nu l}
//!      + eps^2 ((m_0/tau*) l + sum_k c_k e^{j k nu l})        (second order only)
//! ```
//!
//! where `b_k = a_k / (1 - e^{-j k omega tau0})`, `m_k = sum_l j l omega a_l b_{k-l}`
//! and `c_k = m_k / (1 - e^{-j k omega tau0})`. The constants `b_0`, `c_0` are
//! chosen so that `h(0) = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::abel::PropagatedTransform;
use crate::error::{Error, Result};
use crate::periodic_delay::PeriodicDelay;

/// Denominators below this magnitude are treated as resonant.
pub const RESONANCE_HARD: f64 = 1e-9;
/// Denominators below this magnitude produce a warning.
pub const RESONANCE_WARN: f64 = 1e-3;
/// Distance (rad) from `omega * tau0` to a multiple of pi rejected by the closed forms.
pub const CLOSED_FORM_MARGIN: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionOrder {
    First,
    Second,
}

impl ExpansionOrder {
    pub fn as_usize(self) -> usize {
        match self {
            ExpansionOrder::First => 1,
            ExpansionOrder::Second => 2,
        }
    }
}

impl TryFrom<usize> for ExpansionOrder {
    type Error = Error;

    fn try_from(order: usize) -> Result<Self> {
        match order {
            1 => Ok(ExpansionOrder::First),
            2 => Ok(ExpansionOrder::Second),
            _ => Err(Error::InvalidParameter(format!("expansion order must be 1 or 2, got {order}"))),
        }
    }
}

/// Complex coefficients indexed by harmonic `-K..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonics {
    values: Vec<Complex64>,
}

impl Harmonics {
    fn zeros(order: usize) -> Self {
        Self { values: vec![ZERO; 2 * order + 1] }
    }

    pub fn order(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn get(&self, k: i32) -> Complex64 {
        let k_max = self.order() as i32;
        if k.abs() > k_max {
            ZERO
        } else {
            self.values[(k + k_max) as usize]
        }
    }

    fn set(&mut self, k: i32, v: Complex64) {
        let k_max = self.order() as i32;
        self.values[(k + k_max) as usize] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, Complex64)> + '_ {
        let k_max = self.order() as i32;
        self.values.iter().enumerate().map(move |(i, v)| (i as i32 - k_max, *v))
    }
}

/// `1 - exp(-j k omega tau0)`.
pub fn resonance_denominator(k: i32, omega: f64, tau0: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -(k as f64) * omega * tau0)
}

/// Divides `numerator` by the resonance denominator of harmonic `k`, tracking
/// the smallest denominator seen.
fn divide_resonant(
    k: i32,
    numerator: Complex64,
    omega: f64,
    tau0: f64,
    min_denominator: &mut f64,
) -> Result<Complex64> {
    if numerator == ZERO {
        return Ok(ZERO);
    }
    let den = resonance_denominator(k, omega, tau0);
    let mag = den.norm();
    if mag < RESONANCE_HARD {
        return Err(Error::Resonance { harmonic: k, magnitude: mag });
    }
    if mag < RESONANCE_WARN {
        log::warn!("near resonance at harmonic {k}: |1 - exp(-j k w tau0)| = {mag:.3e}");
    }
    *min_denominator = min_denominator.min(mag);
    Ok(numerator / den)
}

/// Coefficients of a perturbative time-transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    order: ExpansionOrder,
    tau_star: f64,
    tau0: f64,
    omega: f64,
    b: Harmonics,
    /// Empty band (order 0) for first-order expansions.
    m: Harmonics,
    m0: f64,
    c: Harmonics,
    min_denominator: f64,
}

impl ExpansionCoefficients {
    pub fn order(&self) -> ExpansionOrder {
        self.order
    }

    pub fn tau_star(&self) -> f64 {
        self.tau_star
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Angular frequency of the expansion in the new time, `omega tau0 / tau*`.
    pub fn lambda_frequency(&self) -> f64 {
        self.omega * self.tau0 / self.tau_star
    }

    pub fn b(&self) -> &Harmonics {
        &self.b
    }

    pub fn m(&self) -> &Harmonics {
        &self.m
    }

    /// Real drift coefficient `m_0`; zero at first order.
    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn c(&self) -> &Harmonics {
        &self.c
    }

    /// Truncation order of the output band: `K` (first order) or `2K` (second order).
    pub fn output_order(&self) -> usize {
        self.b.order().max(self.c.order())
    }

    /// Smallest resonance denominator that was divided by.
    pub fn min_denominator(&self) -> f64 {
        self.min_denominator
    }

    /// Returns `(h, h')` as complex sums; imaginary parts are round-off.
    pub fn eval_complex(&self, eps: f64, lambda: f64) -> (Complex64, Complex64) {
        let ratio = self.tau0 / self.tau_star;
        let nu = self.lambda_frequency();
        let sum = |coeffs: &Harmonics| -> (Complex64, Complex64) {
            coeffs.iter().fold((ZERO, ZERO), |(v, d), (k, ck)| {
                let e = ck * Complex64::from_polar(1.0, k as f64 * nu * lambda);
                (v + e, d + Complex64::new(0.0, k as f64 * nu) * e)
            })
        };
        let (b_val, b_der) = sum(&self.b);
        let mut h = Complex64::new(ratio * lambda, 0.0) + eps * b_val;
        let mut hd = Complex64::new(ratio, 0.0) + eps * b_der;
        if self.order == ExpansionOrder::Second {
            let (c_val, c_der) = sum(&self.c);
            let drift = self.m0 / self.tau_star;
            h += eps * eps * (Complex64::new(drift * lambda, 0.0) + c_val);
            hd += eps * eps * (Complex64::new(drift, 0.0) + c_der);
        }
        (h, hd)
    }
}

/// First-order coefficients `b_k` (including `b_0`).
pub fn first_order_coeffs(delay: &PeriodicDelay, tau_star: f64) -> Result<ExpansionCoefficients> {
    if !(tau_star.is_finite() && tau_star > 0.0) {
        return Err(Error::InvalidParameter(format!("tau* must be positive, got {tau_star}")));
    }
    let shape = delay.shape();
    if shape.coeff(0).norm() > 1e-12 {
        return Err(Error::Hypothesis(format!(
            "periodic term must have zero mean, a_0 = {}",
            shape.coeff(0)
        )));
    }
    let (omega, tau0) = (delay.omega(), delay.tau0());
    let order = shape.order();
    let mut min_denominator = f64::INFINITY;
    let mut b = Harmonics::zeros(order);
    let mut b0 = ZERO;
    for (k, a) in shape.iter().filter(|(k, _)| *k != 0) {
        let bk = divide_resonant(k, a, omega, tau0, &mut min_denominator)?;
        b.set(k, bk);
        b0 -= bk;
    }
    b.set(0, b0);
    Ok(ExpansionCoefficients {
        order: ExpansionOrder::First,
        tau_star,
        tau0,
        omega,
        b,
        m: Harmonics::zeros(0),
        m0: 0.0,
        c: Harmonics::zeros(0),
        min_denominator,
    })
}

/// Second-order coefficients: `b_k`, the product spectrum `m_k`, and `c_k`.
pub fn second_order_coeffs(delay: &PeriodicDelay, tau_star: f64) -> Result<ExpansionCoefficients> {
    let first = first_order_coeffs(delay, tau_star)?;
    let shape = delay.shape();
    let (omega, tau0) = (delay.omega(), delay.tau0());
    let k_in = shape.order() as i32;
    let k_out = 2 * k_in;

    // Spectrum of tau~'(h_0(l)) * h_1(l): convolution of {j l omega a_l} with {b_k}.
    let mut m = Harmonics::zeros(k_out as usize);
    for k in -k_out..=k_out {
        let mk: Complex64 = (-k_in..=k_in)
            .map(|l| Complex64::new(0.0, l as f64 * omega) * shape.coeff(l) * first.b.get(k - l))
            .sum();
        m.set(k, mk);
    }
    let m0c = m.get(0);
    if m0c.im.abs() > 1e-10 * m0c.norm().max(1.0) {
        return Err(Error::Hypothesis(format!(
            "drift coefficient m_0 = {m0c} is not real; coefficients are not Hermitian"
        )));
    }

    let mut min_denominator = first.min_denominator;
    let mut c = Harmonics::zeros(k_out as usize);
    let mut c0 = ZERO;
    for k in (-k_out..=k_out).filter(|k| *k != 0) {
        let ck = divide_resonant(k, m.get(k), omega, tau0, &mut min_denominator)?;
        c.set(k, ck);
        c0 -= ck;
    }
    c.set(0, c0);

    Ok(ExpansionCoefficients {
        order: ExpansionOrder::Second,
        m,
        m0: m0c.re,
        c,
        min_denominator,
        ..first
    })
}

/// Hard-coded closed forms for `tau(t) = tau0 + eps sin(omega t)` with `tau* = tau0`.
///
/// Kept as an independent evaluation route to cross-check the generic series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidClosedForm {
    pub order: ExpansionOrder,
    pub tau0: f64,
    pub omega: f64,
    pub eps: f64,
}

impl SinusoidClosedForm {
    pub fn h(&self, lambda: f64) -> f64 {
        let (w, eps) = (self.omega, self.eps);
        let half = w * self.tau0 / 2.0;
        let s = half.sin();
        let mut h = lambda + eps * (half.cos() - (w * lambda + half).cos()) / (2.0 * s);
        if self.order == ExpansionOrder::Second {
            let cot = half.cos() / s;
            let drift = -w * cot / (4.0 * self.tau0) * lambda;
            let second = w * ((3.0 * half).sin() - (2.0 * w * lambda + 3.0 * half).sin())
                / (8.0 * s * (2.0 * half).sin());
            let first = w * cot * ((w * lambda + half).sin() - s) / (4.0 * s);
            h += eps * eps * (drift + second + first);
        }
        h
    }

    pub fn h_dot(&self, lambda: f64) -> f64 {
        let (w, eps) = (self.omega, self.eps);
        let half = w * self.tau0 / 2.0;
        let s = half.sin();
        let mut hd = 1.0 + eps * w * (w * lambda + half).sin() / (2.0 * s);
        if self.order == ExpansionOrder::Second {
            let cot = half.cos() / s;
            hd += eps
                * eps
                * (-w * cot / (4.0 * self.tau0)
                    - w * w * (2.0 * w * lambda + 3.0 * half).cos() / (4.0 * s * (2.0 * half).sin())
                    + w * w * cot * (w * lambda + half).cos() / (4.0 * s));
        }
        hd
    }
}

/// Closed-form transform for the sinusoidal delay, with `tau* = tau0`.
pub fn closed_form_sinusoid(
    order: ExpansionOrder,
    tau0: f64,
    omega: f64,
    eps: f64,
) -> Result<TimeTransform> {
    if !(tau0 > 0.0 && omega > 0.0 && eps >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "closed form needs tau0 > 0, omega > 0, eps >= 0 (got {tau0}, {omega}, {eps})"
        )));
    }
    let phase = omega * tau0;
    let r = phase.rem_euclid(PI);
    let margin = r.min(PI - r);
    if margin < CLOSED_FORM_MARGIN {
        let den = resonance_denominator(1, omega, tau0).norm()
            .min(resonance_denominator(2, omega, tau0).norm());
        return Err(Error::Resonance { harmonic: 1, magnitude: den });
    }
    Ok(TimeTransform::ClosedForm(SinusoidClosedForm { order, tau0, omega, eps }))
}

/// An evaluable time-transformation `h` and its derivative.
#[derive(Debug, Clone)]
pub enum TimeTransform {
    Perturbative { coeffs: ExpansionCoefficients, eps: f64 },
    ClosedForm(SinusoidClosedForm),
    Exact(PropagatedTransform),
}

impl TimeTransform {
    /// Perturbative transform of the requested order for `delay`.
    pub fn perturbative(delay: &PeriodicDelay, tau_star: f64, order: ExpansionOrder) -> Result<Self> {
        let coeffs = match order {
            ExpansionOrder::First => first_order_coeffs(delay, tau_star)?,
            ExpansionOrder::Second => second_order_coeffs(delay, tau_star)?,
        };
        Ok(TimeTransform::Perturbative { coeffs, eps: delay.eps() })
    }

    pub fn tau_star(&self) -> f64 {
        match self {
            TimeTransform::Perturbative { coeffs, .. } => coeffs.tau_star,
            TimeTransform::ClosedForm(cf) => cf.tau0,
            TimeTransform::Exact(p) => p.tau_star(),
        }
    }

    /// Left end `-tau*` of the domain.
    pub fn domain_start(&self) -> f64 {
        -self.tau_star()
    }

    /// Right end of the domain: the horizon for exact transforms, unbounded otherwise.
    pub fn domain_end(&self) -> f64 {
        match self {
            TimeTransform::Exact(p) => p.horizon(),
            _ => f64::INFINITY,
        }
    }

    /// Period of `h'` in the new time, when it is periodic.
    pub fn period(&self) -> Option<f64> {
        match self {
            TimeTransform::Perturbative { coeffs, .. } => Some(2.0 * PI / coeffs.lambda_frequency()),
            TimeTransform::ClosedForm(cf) => Some(2.0 * PI / cf.omega),
            TimeTransform::Exact(_) => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TimeTransform::Perturbative { coeffs, .. } => match coeffs.order {
                ExpansionOrder::First => "order1",
                ExpansionOrder::Second => "order2",
            },
            TimeTransform::ClosedForm(_) => "closed_form",
            TimeTransform::Exact(_) => "exact",
        }
    }

    fn check_domain(&self, lambda: f64) -> Result<()> {
        let (start, end) = (self.domain_start(), self.domain_end());
        if lambda.is_nan() || lambda < start || lambda > end {
            return Err(Error::Domain { lambda, start, end });
        }
        Ok(())
    }

    pub fn h(&self, lambda: f64) -> Result<f64> {
        self.check_domain(lambda)?;
        Ok(match self {
            TimeTransform::Perturbative { coeffs, eps } => coeffs.eval_complex(*eps, lambda).0.re,
            TimeTransform::ClosedForm(cf) => cf.h(lambda),
            TimeTransform::Exact(p) => p.table().eval(lambda),
        })
    }

    pub fn h_dot(&self, lambda: f64) -> Result<f64> {
        self.check_domain(lambda)?;
        Ok(match self {
            TimeTransform::Perturbative { coeffs, eps } => coeffs.eval_complex(*eps, lambda).1.re,
            TimeTransform::ClosedForm(cf) => cf.h_dot(lambda),
            TimeTransform::Exact(p) => p.table().eval_derivative(lambda),
        })
    }

    /// Largest imaginary residue of the `h` and `h'` sums at `lambda`
    /// (zero for transforms evaluated in real arithmetic).
    pub fn imaginary_residue(&self, lambda: f64) -> f64 {
        match self {
            TimeTransform::Perturbative { coeffs, eps } => {
                let (h, hd) = coeffs.eval_complex(*eps, lambda);
                h.im.abs().max(hd.im.abs())
            }
            _ => 0.0,
        }
    }
}

/// Pointwise Abel residuals and their norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub lambda: Vec<f64>,
    pub residual: Vec<f64>,
    pub sup: f64,
    pub rms: f64,
}

/// `r(l) = h(l) - tau(h(l)) - h(l - tau*)` over `grid` (all points `>= 0`).
pub fn abel_residual(tt: &TimeTransform, delay: &PeriodicDelay, grid: &[f64]) -> Result<ResidualStats> {
    let tau_star = tt.tau_star();
    let residual = grid
        .iter()
        .map(|&l| {
            if l < 0.0 {
                return Err(Error::Domain { lambda: l, start: 0.0, end: f64::INFINITY });
            }
            let h = tt.h(l)?;
            Ok(h - delay.tau(h) - tt.h(l - tau_star)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let sup = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let rms = if residual.is_empty() {
        0.0
    } else {
        (residual.iter().map(|r| r * r).sum::<f64>() / residual.len() as f64).sqrt()
    };
    Ok(ResidualStats { lambda: grid.to_vec(), residual, sup, rms })
}

/// Seed-compatibility error `|h'(0) (1 - tau'(0)) - h'(-tau*)|`.
///
/// Zero for an exact transform; measures how far an approximation is from
/// admitting the derivative-matching condition of a valid seed.
pub fn seed_compatibility_error(tt: &TimeTransform, delay: &PeriodicDelay) -> Result<f64> {
    Ok((tt.h_dot(0.0)? * (1.0 - delay.tau_dot(0.0)) - tt.h_dot(-tt.tau_star())?).abs())
}

/// Minimum of `h'` over `n + 1` uniform points in `[start, end]`, with its location.
pub fn min_h_dot(tt: &TimeTransform, start: f64, end: f64, n: usize) -> Result<(f64, f64)> {
    let mut best = (f64::INFINITY, start);
    for i in 0..=n {
        let l = start + (end - start) * i as f64 / n as f64;
        let v = tt.h_dot(l)?;
        if v < best.0 {
            best = (v, l);
        }
    }
    Ok(best)
}

/// Uniform grid of `n + 1` points on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}
