//! Bounds on `h'`, the feedback form `[G, Delta]`, and PI-operator data.
//!
//! Writing `h' = h_bar + delta(l)` with `|delta| <= gamma` turns the transformed
//! system into a constant-delay nominal system `G` in feedback with a bounded
//! time-varying gain. The nominal part is exported in PIE form, a set of five
//! PI operators on `R^n x L2^n[-1, 0]`, for an external LMI solver; no LMI is
//! solved here.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dde_sim::DdeSystem;
use crate::error::{Error, Result};
use crate::perturbation::TimeTransform;

/// Bundled JSON schema for [`PieOperatorData`].
pub const PIE_SCHEMA: &str = include_str!("../schema/pie_operator_data.schema.json");

const GRID_PER_PERIOD: usize = 2000;
const GOLDEN_ITERS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    AnalyticSeries,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdotBounds {
    pub h_l: f64,
    pub h_u: f64,
    pub h_bar: f64,
    pub gamma: f64,
    pub method: BoundMethod,
    /// Where the sampled extrema sit.
    pub argmin: f64,
    pub argmax: f64,
    /// Center `tau0 / tau*` and radius of the coefficient-sum bound, when available.
    pub analytic_center: Option<f64>,
    pub analytic_radius: Option<f64>,
}

impl HdotBounds {
    pub fn from_limits(h_l: f64, h_u: f64, method: BoundMethod) -> Result<Self> {
        if !(h_l > 0.0 && h_l <= h_u) {
            return Err(Error::InvalidParameter(format!("need 0 < h_l <= h_u, got [{h_l}, {h_u}]")));
        }
        Ok(Self {
            h_l,
            h_u,
            h_bar: 0.5 * (h_u + h_l),
            gamma: 0.5 * (h_u - h_l),
            method,
            argmin: f64::NAN,
            argmax: f64::NAN,
            analytic_center: None,
            analytic_radius: None,
        })
    }

    pub fn contains(&self, v: f64, slack: f64) -> bool {
        v >= self.h_l - slack && v <= self.h_u + slack
    }
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if b - a <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Sampled extremum of `f` on `grid`, refined by golden section between the
/// neighbours of the best sample. `sign = 1` finds the min, `-1` the max.
fn refined_extremum(f: &dyn Fn(f64) -> f64, grid: &[f64], sign: f64) -> (f64, f64) {
    let g = |x: f64| sign * f(x);
    let (i, gi) = grid
        .iter()
        .map(|x| g(*x))
        .enumerate()
        .fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    let (x, gx) = golden_min(&g, lo, hi);
    if gx < gi {
        (x, sign * gx)
    } else {
        (grid[i], sign * gi)
    }
}

/// Coefficient-sum bound on `|h' - tau0/tau*|` for a perturbative transform.
fn analytic_bound(tt: &TimeTransform) -> Option<(f64, f64)> {
    match tt {
        TimeTransform::Perturbative { coeffs, eps } => {
            let nu = coeffs.lambda_frequency();
            let first: f64 = coeffs.b().iter().map(|(k, b)| (k as f64 * nu * b.norm()).abs()).sum();
            let second: f64 = coeffs
                .c()
                .iter()
                .map(|(k, c)| (k as f64 * nu * c.norm()).abs())
                .sum::<f64>()
                + coeffs.m0().abs() / coeffs.tau_star();
            let radius = eps * first + if coeffs.output_order() >= 2 { eps * eps * second } else { 0.0 };
            Some((coeffs.tau0() / coeffs.tau_star(), radius))
        }
        _ => None,
    }
}

/// Lower and upper bounds on `h'` over `window`.
///
/// Periodic transforms are sampled over exactly one period starting at the
/// window's left end, so the bounds hold globally; the window must span a
/// period. Exact transforms are sampled over the whole window, which must lie
/// inside the horizon. Sampled extrema are refined by golden section.
pub fn compute_hdot_bounds(tt: &TimeTransform, window: (f64, f64)) -> Result<HdotBounds> {
    let (a, b) = window;
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(Error::InvalidParameter(format!("empty window [{a}, {b}]")));
    }
    let (start, end, n) = match tt.period() {
        Some(period) => {
            if b - a < period * (1.0 - 1e-12) {
                return Err(Error::WindowTooShort { start: a, end: b, period });
            }
            (a, a + period, GRID_PER_PERIOD)
        }
        None => {
            if a < tt.domain_start() || b > tt.domain_end() {
                return Err(Error::Domain { lambda: if a < tt.domain_start() { a } else { b }, start: tt.domain_start(), end: tt.domain_end() });
            }
            let n = ((b - a) / tt.tau_star() * GRID_PER_PERIOD as f64).ceil().max(GRID_PER_PERIOD as f64);
            (a, b, n as usize)
        }
    };
    let grid: Vec<f64> = (0..=n).map(|i| start + (end - start) * i as f64 / n as f64).collect();
    let f = |l: f64| tt.h_dot(l.clamp(start, end)).unwrap_or(f64::NAN);
    if let Some(bad) = grid.iter().find(|l| !f(**l).is_finite()) {
        // Surface the underlying error.
        tt.h_dot(*bad)?;
        return Err(Error::InvalidParameter(format!("h' is not finite at {bad}")));
    }
    let (argmin, h_l) = refined_extremum(&f, &grid, 1.0);
    let (argmax, h_u) = refined_extremum(&f, &grid, -1.0);
    let mut bounds = HdotBounds::from_limits(h_l, h_u, BoundMethod::Sampled)?;
    bounds.argmin = argmin;
    bounds.argmax = argmax;
    if let Some((center, radius)) = analytic_bound(tt) {
        bounds.analytic_center = Some(center);
        bounds.analytic_radius = Some(radius);
    }
    Ok(bounds)
}

/// Same as [`compute_hdot_bounds`] but reporting the coefficient-sum bound
/// `tau0/tau* -+ radius` as the limits. Perturbative transforms only.
pub fn analytic_hdot_bounds(tt: &TimeTransform) -> Result<HdotBounds> {
    let (center, radius) = analytic_bound(tt)
        .ok_or_else(|| Error::InvalidParameter("analytic bound needs a perturbative transform".into()))?;
    let mut bounds = HdotBounds::from_limits(center - radius, center + radius, BoundMethod::AnalyticSeries)?;
    bounds.analytic_center = Some(center);
    bounds.analytic_radius = Some(radius);
    Ok(bounds)
}

/// `delta(l) = h'(l) - h_bar`.
pub fn delta_signal(tt: &TimeTransform, h_bar: f64, lambda: f64) -> Result<f64> {
    Ok(tt.h_dot(lambda)? - h_bar)
}

/// Dense row-major matrix, the JSON representation used for all exports.
pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Nominal system `G` and the uncertainty radius.
///
/// ```text
/// y'(l) = h_bar A0 y(l) + h_bar A1 y(l - tau*) + v(l)
/// w(l)  = A0 y(l) + A1 y(l - tau*)
/// v(l)  = delta(l) w(l),   |delta| <= gamma
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackForm {
    pub n: usize,
    pub tau_star: f64,
    pub h_bar: f64,
    pub gamma: f64,
    /// `h_bar A0` and `h_bar A1`.
    pub g_a0: Rows,
    pub g_a1: Rows,
    /// Output map `w = C0 y(l) + C1 y(l - tau*)`.
    pub out_c0: Rows,
    pub out_c1: Rows,
}

pub fn assemble_feedback_form(sys: &DdeSystem, bounds: &HdotBounds, tau_star: f64) -> FeedbackForm {
    FeedbackForm {
        n: sys.dim(),
        tau_star,
        h_bar: bounds.h_bar,
        gamma: bounds.gamma,
        g_a0: to_rows(&(sys.a0() * bounds.h_bar)),
        g_a1: to_rows(&(sys.a1() * bounds.h_bar)),
        out_c0: to_rows(sys.a0()),
        out_c1: to_rows(sys.a1()),
    }
}

/// Matrix-valued polynomial kernel.
///
/// `coeffs[i][j][k]` multiplies the monomial `monomials[k]`, whose entries
/// are the exponents of `variables` in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub rows: usize,
    pub cols: usize,
    pub variables: Vec<String>,
    pub monomials: Vec<Vec<u32>>,
    pub coeffs: Vec<Vec<Vec<f64>>>,
}

impl Kernel {
    fn constant(m: &DMatrix<f64>, variables: &[&str]) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            variables: variables.iter().map(|v| v.to_string()).collect(),
            monomials: vec![vec![0; variables.len()]],
            coeffs: m.row_iter().map(|r| r.iter().map(|v| vec![*v]).collect()).collect(),
        }
    }

    /// Value of a constant kernel.
    pub fn constant_value(&self) -> Option<DMatrix<f64>> {
        if self.monomials.len() != 1 || self.monomials[0].iter().any(|e| *e != 0) {
            return None;
        }
        Some(DMatrix::from_fn(self.rows, self.cols, |i, j| self.coeffs[i][j][0]))
    }
}

/// PI operator `[P, Q1; Q2, {R0, R1, R2}]` from `R^n_in x L2^m_in[-1, 0]` to
/// `R^n_out x L2^m_out[-1, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiOperator {
    /// `[n_in, m_in]`.
    pub input: [usize; 2],
    /// `[n_out, m_out]`.
    pub output: [usize; 2],
    pub p: Rows,
    pub q1: Kernel,
    pub q2: Kernel,
    pub r0: Kernel,
    pub r1: Kernel,
    pub r2: Kernel,
}

impl PiOperator {
    #[allow(clippy::too_many_arguments)]
    fn constant(
        n_in: usize,
        m_in: usize,
        n_out: usize,
        m_out: usize,
        p: DMatrix<f64>,
        q1: DMatrix<f64>,
        q2: DMatrix<f64>,
        r: [DMatrix<f64>; 3],
    ) -> Self {
        debug_assert_eq!(p.shape(), (n_out, n_in));
        debug_assert_eq!(q1.shape(), (n_out, m_in));
        debug_assert_eq!(q2.shape(), (m_out, n_in));
        let [r0, r1, r2] = r;
        Self {
            input: [n_in, m_in],
            output: [n_out, m_out],
            p: to_rows(&p),
            q1: Kernel::constant(&q1, &["s"]),
            q2: Kernel::constant(&q2, &["s"]),
            r0: Kernel::constant(&r0, &["s"]),
            r1: Kernel::constant(&r1, &["s", "theta"]),
            r2: Kernel::constant(&r2, &["s", "theta"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqcMetadata {
    #[serde(rename = "type")]
    pub kind: String,
    pub psi: String,
    pub gamma: f64,
}

/// PIE data `T x' = A x + B v`, `w = C x + D v` for the nominal system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieOperatorData {
    pub n: usize,
    pub m: usize,
    pub tau_star: f64,
    pub h_bar: f64,
    pub gamma: f64,
    /// Domain of the spatial variable `s` (and `theta`).
    pub s_domain: [f64; 2],
    #[serde(rename = "T")]
    pub t: PiOperator,
    #[serde(rename = "A")]
    pub a: PiOperator,
    #[serde(rename = "B")]
    pub b: PiOperator,
    #[serde(rename = "C")]
    pub c: PiOperator,
    #[serde(rename = "D")]
    pub d: PiOperator,
    pub iqc: IqcMetadata,
}

impl PieOperatorData {
    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Assembles the five PI operators of the nominal system with kernels on `s in [-1, 0]`.
///
/// The distributed state is `d/ds phi(l, s)` with `phi(l, s) = y(l + tau* s)`.
pub fn assemble_pie(sys: &DdeSystem, bounds: &HdotBounds, tau_star: f64) -> PieOperatorData {
    let n = sys.dim();
    let m = n;
    let h = bounds.h_bar;
    let eye = DMatrix::<f64>::identity(n, n);
    let zero = |r: usize, c: usize| DMatrix::<f64>::zeros(r, c);
    let sum = sys.a0() + sys.a1();

    let t = PiOperator::constant(n, m, n, m, eye.clone(), zero(n, m), eye.clone(), [zero(m, m), zero(m, m), -&eye]);
    let a = PiOperator::constant(
        n,
        m,
        n,
        m,
        &sum * h,
        -sys.a1() * h,
        zero(m, n),
        [&eye * (1.0 / tau_star), zero(m, m), zero(m, m)],
    );
    let b = PiOperator::constant(n, 0, n, m, eye.clone(), zero(n, 0), zero(m, n), [zero(m, 0), zero(m, 0), zero(m, 0)]);
    let c = PiOperator::constant(n, m, n, 0, sum.clone(), -sys.a1(), zero(0, n), [zero(0, m), zero(0, m), zero(0, m)]);
    let d = PiOperator::constant(n, 0, n, 0, zero(n, n), zero(n, 0), zero(0, n), [zero(0, 0), zero(0, 0), zero(0, 0)]);

    PieOperatorData {
        n,
        m,
        tau_star,
        h_bar: h,
        gamma: bounds.gamma,
        s_domain: [-1.0, 0.0],
        t,
        a,
        b,
        c,
        d,
        iqc: IqcMetadata { kind: "hard".into(), psi: "identity".into(), gamma: bounds.gamma },
    }
}
