//! Numerically exact time-transformations by seed propagation.
//!
//! A seed `phi` on `[-tau*, 0]` satisfying
//!
//! ```text
//! phi(0) = 0,  phi(-tau*) = -tau(0),  phi'(0) = phi'(-tau*) / (1 - tau'(0)),  phi' > 0
//! ```
//!
//! is extended to `[-tau*, horizon]` by `h(l) = g^{-1}(h(l - tau*))` with
//! `g(t) = t - tau(t)`. The result is tabulated on a uniform knot grid and
//! interpolated with a monotone cubic Hermite interpolant whose knot slopes
//! come from the chain rule `h'(l) = h'(l - tau*) / (1 - tau'(h(l)))`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::csv_row;
use crate::interp::MonotoneHermite;
use crate::periodic_delay::PeriodicDelay;
use crate::perturbation::{ExpansionOrder, TimeTransform};
use crate::roots::{brent, RootOptions};

/// Number of seed basis functions: `lambda`, `1`, and `cos`/`sin` of harmonics 1..=3.
pub const SEED_BASIS_LEN: usize = 8;
const SEED_HARMONICS: usize = 3;

/// Solves `t - tau(t) = x` for `t`.
///
/// The root lies in `[x + tau_lo, x + tau_hi]` for any bounds `tau_lo <= tau <= tau_hi`;
/// uniqueness needs `tau' < 1`, which callers are expected to have checked.
/// The residual tolerance `opts.ftol` is scaled by `max(1, |x|)`.
pub fn g_inverse(delay: &PeriodicDelay, x: f64, opts: &RootOptions) -> Result<f64> {
    if delay.eps() == 0.0 {
        return Ok(x + delay.tau0());
    }
    let (lo, hi) = delay.tau_bounds();
    let pad = 1e-9 * x.abs().max(1.0);
    let scaled = RootOptions { ftol: opts.ftol * x.abs().max(1.0), ..*opts };
    brent(|t| t - delay.tau(t) - x, x + lo - pad, x + hi + pad, &scaled)
}

/// `g(t) = t - tau(t)`.
pub fn g(delay: &PeriodicDelay, t: f64) -> f64 {
    t - delay.tau(t)
}

fn basis(omega: f64, lambda: f64) -> [f64; SEED_BASIS_LEN] {
    let mut out = [0.0; SEED_BASIS_LEN];
    out[0] = lambda;
    out[1] = 1.0;
    for k in 1..=SEED_HARMONICS {
        let (s, c) = (k as f64 * omega * lambda).sin_cos();
        out[2 * k] = c;
        out[2 * k + 1] = s;
    }
    out
}

fn basis_dot(omega: f64, lambda: f64) -> [f64; SEED_BASIS_LEN] {
    let mut out = [0.0; SEED_BASIS_LEN];
    out[0] = 1.0;
    for k in 1..=SEED_HARMONICS {
        let kw = k as f64 * omega;
        let (s, c) = (kw * lambda).sin_cos();
        out[2 * k] = -kw * s;
        out[2 * k + 1] = kw * c;
    }
    out
}

/// Seed `phi(l) = p l + q0 + sum_{k=1}^{3} (q_k cos(k w l) + r_k sin(k w l))` on `[-tau*, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFunction {
    tau_star: f64,
    /// Basis frequency `w` in the new time.
    omega: f64,
    /// `[p, q0, q1, r1, q2, r2, q3, r3]`.
    coeffs: [f64; SEED_BASIS_LEN],
}

/// Residuals of the four seed conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedConditions {
    /// `phi(0)`.
    pub origin: f64,
    /// `phi(-tau*) + tau(0)`.
    pub start: f64,
    /// `phi'(0) - phi'(-tau*) / (1 - tau'(0))`.
    pub slope_match: f64,
    /// Smallest sampled `phi'` on `[-tau*, 0]`, and where it occurs.
    pub min_slope: f64,
    pub min_slope_at: f64,
}

impl SeedConditions {
    pub fn satisfied(&self) -> bool {
        self.origin.abs() < 1e-10
            && self.start.abs() < 1e-10
            && self.slope_match.abs() < 1e-8
            && self.min_slope > 0.0
    }
}

impl SeedFunction {
    pub fn new(tau_star: f64, omega: f64, coeffs: [f64; SEED_BASIS_LEN]) -> Result<Self> {
        if !(tau_star > 0.0 && omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "seed needs tau* > 0 and omega > 0 (got {tau_star}, {omega})"
            )));
        }
        Ok(Self { tau_star, omega, coeffs })
    }

    pub fn tau_star(&self) -> f64 {
        self.tau_star
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn coeffs(&self) -> &[f64; SEED_BASIS_LEN] {
        &self.coeffs
    }

    /// Linear coefficient `p`.
    pub fn p(&self) -> f64 {
        self.coeffs[0]
    }

    /// Cosine coefficient `q_k`, `k` in `0..=3`.
    pub fn q(&self, k: usize) -> f64 {
        if k == 0 {
            self.coeffs[1]
        } else {
            self.coeffs[2 * k]
        }
    }

    /// Sine coefficient `r_k`, `k` in `1..=3`.
    pub fn r(&self, k: usize) -> f64 {
        self.coeffs[2 * k + 1]
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        dot(&basis(self.omega, lambda), &self.coeffs)
    }

    pub fn eval_dot(&self, lambda: f64) -> f64 {
        dot(&basis_dot(self.omega, lambda), &self.coeffs)
    }

    /// Evaluates the four seed conditions; positivity on `grid + 1` points.
    pub fn conditions(&self, delay: &PeriodicDelay, grid: usize) -> SeedConditions {
        let ts = self.tau_star;
        let (min_slope, min_slope_at) = (0..=grid)
            .map(|i| -ts + ts * i as f64 / grid as f64)
            .map(|l| (self.eval_dot(l), l))
            .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
        SeedConditions {
            origin: self.eval(0.0),
            start: self.eval(-ts) + delay.tau(0.0),
            slope_match: self.eval_dot(0.0) - self.eval_dot(-ts) / (1.0 - delay.tau_dot(0.0)),
            min_slope,
            min_slope_at,
        }
    }
}

fn dot(a: &[f64; SEED_BASIS_LEN], b: &[f64; SEED_BASIS_LEN]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedFitOptions {
    /// Least-squares sample points on `[-tau*, 0]`.
    pub samples: usize,
    /// Grid used to verify `phi' > 0`.
    pub positivity_grid: usize,
}

impl Default for SeedFitOptions {
    fn default() -> Self {
        Self { samples: 200, positivity_grid: 2000 }
    }
}

/// Fits the seed basis to a perturbative `target` on `[-tau*, 0]`.
///
/// The three equality conditions are imposed exactly through the KKT system
/// of the constrained least-squares problem; positivity of `phi'` is checked
/// afterwards on a dense grid. The basis frequency is `omega tau0 / tau*`,
/// the frequency of the expansion in the new time.
pub fn fit_seed(delay: &PeriodicDelay, tau_star: f64, target: &TimeTransform) -> Result<SeedFunction> {
    fit_seed_with(delay, tau_star, target, &SeedFitOptions::default())
}

pub fn fit_seed_with(
    delay: &PeriodicDelay,
    tau_star: f64,
    target: &TimeTransform,
    opts: &SeedFitOptions,
) -> Result<SeedFunction> {
    if matches!(target, TimeTransform::Exact(_)) {
        return Err(Error::InvalidParameter("seed target must be a perturbative transform".into()));
    }
    if (target.tau_star() - tau_star).abs() > 1e-12 * tau_star {
        return Err(Error::InvalidParameter(format!(
            "target was built for tau* = {}, requested {tau_star}",
            target.tau_star()
        )));
    }
    if opts.samples < SEED_BASIS_LEN {
        return Err(Error::InvalidParameter(format!(
            "need at least {SEED_BASIS_LEN} fit samples, got {}",
            opts.samples
        )));
    }
    let omega = delay.omega() * delay.tau0() / tau_star;
    if delay.eps() == 0.0 {
        let mut coeffs = [0.0; SEED_BASIS_LEN];
        coeffs[0] = delay.tau0() / tau_star;
        return SeedFunction::new(tau_star, omega, coeffs);
    }
    let n = SEED_BASIS_LEN;
    let n_con = 3;

    let mut design = DMatrix::<f64>::zeros(opts.samples, n);
    let mut rhs = DVector::<f64>::zeros(opts.samples);
    for i in 0..opts.samples {
        let l = -tau_star + tau_star * i as f64 / (opts.samples - 1) as f64;
        design.row_mut(i).copy_from_slice(&basis(omega, l));
        rhs[i] = target.h(l)?;
    }

    let mut con = DMatrix::<f64>::zeros(n_con, n);
    let mut con_rhs = DVector::<f64>::zeros(n_con);
    con.row_mut(0).copy_from_slice(&basis(omega, 0.0));
    con.row_mut(1).copy_from_slice(&basis(omega, -tau_star));
    con_rhs[1] = -delay.tau(0.0);
    let slack = 1.0 - delay.tau_dot(0.0);
    let d0 = basis_dot(omega, 0.0);
    let ds = basis_dot(omega, -tau_star);
    for j in 0..n {
        con[(2, j)] = d0[j] * slack - ds[j];
    }

    // [ 2 X^T X  C^T ] [c]   [2 X^T y]
    // [ C        0   ] [mu] = [d     ]
    let mut kkt = DMatrix::<f64>::zeros(n + n_con, n + n_con);
    let gram = design.transpose() * &design * 2.0;
    kkt.view_mut((0, 0), (n, n)).copy_from(&gram);
    kkt.view_mut((0, n), (n, n_con)).copy_from(&con.transpose());
    kkt.view_mut((n, 0), (n_con, n)).copy_from(&con);
    let mut full_rhs = DVector::<f64>::zeros(n + n_con);
    full_rhs.rows_mut(0, n).copy_from(&(design.transpose() * &rhs * 2.0));
    full_rhs.rows_mut(n, n_con).copy_from(&con_rhs);

    let sv = kkt.clone().svd(false, false).singular_values;
    let condition = sv.max() / sv.min();
    let lu = kkt.clone().lu();
    let mut sol = lu.solve(&full_rhs).ok_or(Error::IllConditioned { condition })?;
    // One step of iterative refinement tightens the constraints to round-off.
    let resid = &full_rhs - &kkt * &sol;
    if let Some(corr) = lu.solve(&resid) {
        sol += corr;
    }

    let mut coeffs = [0.0; SEED_BASIS_LEN];
    coeffs.copy_from_slice(sol.rows(0, n).as_slice());
    let con_err = (&con * DVector::from_column_slice(&coeffs) - &con_rhs).amax();
    if !condition.is_finite() || con_err > 1e-10 {
        return Err(Error::IllConditioned { condition });
    }

    let seed = SeedFunction::new(tau_star, omega, coeffs)?;
    let cond = seed.conditions(delay, opts.positivity_grid);
    if cond.min_slope <= 0.0 {
        return Err(Error::SeedNotIncreasing { min: cond.min_slope, at: cond.min_slope_at });
    }
    Ok(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationOptions {
    /// Knots per interval of length `tau*`.
    pub samples_per_interval: usize,
    pub root: RootOptions,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { samples_per_interval: 800, root: RootOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PropagationDiagnostics {
    /// Largest `|h|` mismatch between adjacent intervals at `k tau*`.
    pub max_boundary_jump: f64,
    /// Largest `|h'|` mismatch between adjacent intervals at `k tau*`.
    pub max_slope_jump: f64,
    /// Largest Abel residual at the knots, divided by `max(1, |h(l - tau*)|)`
    /// like the root tolerance.
    pub max_knot_residual: f64,
    /// Intervals where the monotonicity limiter adjusted slopes.
    pub limited_intervals: usize,
}

/// Tabulated exact time-transformation on `[-tau*, horizon]`.
#[derive(Debug, Clone)]
pub struct PropagatedTransform {
    seed: Option<SeedFunction>,
    tau_star: f64,
    table: MonotoneHermite,
    root_tol: Option<f64>,
    diagnostics: PropagationDiagnostics,
}

/// Propagates `seed` forward until `horizon` is covered.
pub fn propagate(
    seed: &SeedFunction,
    delay: &PeriodicDelay,
    horizon: f64,
    opts: &PropagationOptions,
) -> Result<PropagatedTransform> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    if opts.samples_per_interval < 2 {
        return Err(Error::InvalidParameter("need at least 2 samples per interval".into()));
    }
    let (sup_dot, _) = delay.tau_dot_sup();
    if sup_dot >= 1.0 {
        return Err(Error::Hypothesis(format!("tau' reaches {sup_dot:.4} >= 1; g is not invertible")));
    }
    let conditions = seed.conditions(delay, 2000);
    if !conditions.satisfied() {
        return Err(Error::Hypothesis(format!("seed violates its conditions: {conditions:?}")));
    }

    let ts = seed.tau_star();
    let n = opts.samples_per_interval;
    let offsets: Vec<f64> = (0..=n).map(|i| ts * i as f64 / n as f64).collect();
    let mut prev_h: Vec<f64> = offsets.iter().map(|o| seed.eval(o - ts)).collect();
    let mut prev_d: Vec<f64> = offsets.iter().map(|o| seed.eval_dot(o - ts)).collect();

    let intervals = (horizon / ts).ceil().max(1.0) as usize;
    let mut lambda = Vec::with_capacity(intervals * n + n + 1);
    let mut values = Vec::with_capacity(lambda.capacity());
    let mut slopes = Vec::with_capacity(lambda.capacity());
    lambda.extend(offsets[..n].iter().map(|o| o - ts));
    values.extend_from_slice(&prev_h[..n]);
    slopes.extend_from_slice(&prev_d[..n]);

    let mut diag = PropagationDiagnostics::default();
    for k in 1..=intervals {
        let mut next_h = Vec::with_capacity(n + 1);
        let mut next_d = Vec::with_capacity(n + 1);
        for (x, dx) in prev_h.iter().zip(&prev_d) {
            let t = g_inverse(delay, *x, &opts.root)?;
            let residual = (g(delay, t) - x).abs() / x.abs().max(1.0);
            diag.max_knot_residual = diag.max_knot_residual.max(residual);
            next_h.push(t);
            next_d.push(dx / (1.0 - delay.tau_dot(t)));
        }
        diag.max_boundary_jump = diag.max_boundary_jump.max((next_h[0] - prev_h[n]).abs());
        diag.max_slope_jump = diag.max_slope_jump.max((next_d[0] - prev_d[n]).abs());
        if k == 1 {
            // h(0) = 0 is the normalization; drop the root solver's round-off.
            next_h[0] = 0.0;
        }

        let base = (k - 1) as f64 * ts;
        let take = if k == intervals { n + 1 } else { n };
        lambda.extend(offsets[..take].iter().map(|o| base + o));
        values.extend_from_slice(&next_h[..take]);
        slopes.extend_from_slice(&next_d[..take]);
        prev_h = next_h;
        prev_d = next_d;
    }

    if let Some(i) = (1..values.len()).find(|&i| !(values[i] > values[i - 1])) {
        return Err(Error::NonMonotone { lambda: lambda[i] });
    }
    if let Some(i) = slopes.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::NonMonotone { lambda: lambda[i] });
    }

    let table = MonotoneHermite::new(lambda, values, slopes)?;
    diag.limited_intervals = table.limited_intervals();
    Ok(PropagatedTransform {
        seed: Some(seed.clone()),
        tau_star: ts,
        table,
        root_tol: Some(opts.root.ftol),
        diagnostics: diag,
    })
}

/// Fits a seed to the second-order expansion and propagates it to `horizon`.
pub fn exact_transform(
    delay: &PeriodicDelay,
    tau_star: f64,
    horizon: f64,
    opts: &PropagationOptions,
) -> Result<PropagatedTransform> {
    let target = TimeTransform::perturbative(delay, tau_star, ExpansionOrder::Second)?;
    let seed = fit_seed(delay, tau_star, &target)?;
    propagate(&seed, delay, horizon, opts)
}

impl PropagatedTransform {
    pub fn seed(&self) -> Option<&SeedFunction> {
        self.seed.as_ref()
    }

    pub fn tau_star(&self) -> f64 {
        self.tau_star
    }

    /// Largest `lambda` covered by the table.
    pub fn horizon(&self) -> f64 {
        self.table.x_max()
    }

    pub fn root_tol(&self) -> Option<f64> {
        self.root_tol
    }

    pub fn diagnostics(&self) -> &PropagationDiagnostics {
        &self.diagnostics
    }

    pub fn table(&self) -> &MonotoneHermite {
        &self.table
    }

    fn check(&self, lambda: f64) -> Result<()> {
        if lambda.is_nan() || lambda < -self.tau_star || lambda > self.horizon() {
            return Err(Error::Domain { lambda, start: -self.tau_star, end: self.horizon() });
        }
        Ok(())
    }

    /// Interpolated `h(lambda)`.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        self.check(lambda)?;
        Ok(self.table.eval(lambda))
    }

    /// Derivative of the interpolant.
    pub fn eval_dot(&self, lambda: f64) -> Result<f64> {
        self.check(lambda)?;
        Ok(self.table.eval_derivative(lambda))
    }

    /// `h'(lambda)` from the chain rule applied to the propagation formula,
    /// `h'(l - tau*) / (1 - tau'(h(l)))`, falling back to the seed on `[-tau*, 0)`.
    /// Used only to cross-check [`PropagatedTransform::eval_dot`].
    pub fn eval_dot_recursive(&self, delay: &PeriodicDelay, lambda: f64) -> Result<f64> {
        self.check(lambda)?;
        if lambda < 0.0 {
            return match &self.seed {
                Some(seed) => Ok(seed.eval_dot(lambda)),
                None => Ok(self.table.eval_derivative(lambda)),
            };
        }
        let prev = self.eval_dot_recursive(delay, lambda - self.tau_star)?;
        Ok(prev / (1.0 - delay.tau_dot(self.table.eval(lambda))))
    }

    /// Writes the knot table as CSV with header `lambda,h,h_dot`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "lambda,h,h_dot")?;
        for ((l, h), d) in self.table.xs().iter().zip(self.table.ys()).zip(self.table.slopes()) {
            writeln!(out, "{}", csv_row(&[*l, *h, *d]))?;
        }
        Ok(())
    }

    /// Reads a knot table written by [`PropagatedTransform::write_csv`].
    ///
    /// The first knot must be `-tau*`; the seed is not recoverable.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty knot table".into()))??;
        if header.trim() != "lambda,h,h_dot" {
            return Err(Error::Parse(format!("unexpected knot table header {header:?}")));
        }
        let (mut xs, mut ys, mut ds) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if fields.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 columns", lineno + 2)));
            }
            xs.push(fields[0]);
            ys.push(fields[1]);
            ds.push(fields[2]);
        }
        let tau_star = -*xs.first().ok_or_else(|| Error::Parse("knot table has no rows".into()))?;
        if !(tau_star > 0.0) {
            return Err(Error::Parse(format!("first knot must be -tau* < 0, got {}", -tau_star)));
        }
        let table = MonotoneHermite::new(xs, ys, ds)?;
        let diagnostics = PropagationDiagnostics {
            limited_intervals: table.limited_intervals(),
            ..Default::default()
        };
        Ok(Self { seed: None, tau_star, table, root_tol: None, diagnostics })
    }
}
