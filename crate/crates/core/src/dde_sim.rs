//! Fixed-step RK4 integration of linear DDEs with cubic Hermite dense output.
//!
//! Both the original system `x' = A0 x(t) + A1 x(t - tau(t))` and the
//! transformed system `y' = h'(l) (A0 y(l) + A1 y(l - tau*))` go through the
//! same integrator. Delayed values come from the initial function when the
//! delayed time is `<= 0` and from the dense output otherwise; with the step
//! capped at half the smallest delay they never reach the current step.
//!
//! A history that is not compatible with the equation at `t = 0` produces
//! derivative jumps at `xi_1 = g^{-1}(0)`, `xi_2 = g^{-1}(xi_1)`, ... of
//! increasing order. The first three are placed on the grid (method of
//! steps); later ones are smooth enough for RK4 to pass over. Between them
//! the grid is uniform.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::abel::g_inverse;
use crate::error::{Error, Result};
use crate::fmt::csv_row;
use crate::periodic_delay::PeriodicDelay;
use crate::perturbation::TimeTransform;
use crate::roots::RootOptions;

/// Initial function, evaluated on the initial interval.
pub type History = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// `x' = A0 x(t) + A1 x(t - tau(t))` with initial function `x0`.
#[derive(Clone)]
pub struct DdeSystem {
    a0: DMatrix<f64>,
    a1: DMatrix<f64>,
    history: History,
}

impl fmt::Debug for DdeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DdeSystem").field("a0", &self.a0).field("a1", &self.a1).finish_non_exhaustive()
    }
}

impl DdeSystem {
    pub fn new(a0: DMatrix<f64>, a1: DMatrix<f64>, history: History) -> Result<Self> {
        let n = a0.nrows();
        if n == 0 || !a0.is_square() || a1.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "A0 is {:?} and A1 is {:?}; both must be the same square size",
                a0.shape(),
                a1.shape()
            )));
        }
        let x0 = history(0.0);
        if x0.len() != n {
            return Err(Error::Dimension(format!("history has dimension {}, system {n}", x0.len())));
        }
        Ok(Self { a0, a1, history })
    }

    /// System with a constant initial function.
    pub fn with_constant_history(a0: DMatrix<f64>, a1: DMatrix<f64>, x0: DVector<f64>) -> Result<Self> {
        Self::new(a0, a1, Arc::new(move |_| x0.clone()))
    }

    /// Same matrices, different initial function.
    pub fn with_history(&self, history: History) -> Result<Self> {
        Self::new(self.a0.clone(), self.a1.clone(), history)
    }

    /// Same matrices, history `x0 = (1, ..., 1)`.
    pub fn with_ones_history(&self) -> Self {
        let ones = DVector::from_element(self.dim(), 1.0);
        Self { a0: self.a0.clone(), a1: self.a1.clone(), history: Arc::new(move |_| ones.clone()) }
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn history(&self) -> &History {
        &self.history
    }
}

/// Solution on a grid with stored derivatives for Hermite dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Vec<f64>,
    values: Vec<DVector<f64>>,
    derivatives: Vec<DVector<f64>>,
}

fn hermite(t0: f64, dt: f64, y0: &DVector<f64>, d0: &DVector<f64>, y1: &DVector<f64>, d1: &DVector<f64>, t: f64) -> DVector<f64> {
    let s = (t - t0) / dt;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    y0 * h00 + d0 * (h10 * dt) + y1 * h01 + d1 * (h11 * dt)
}

impl Trajectory {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn derivatives(&self) -> &[DVector<f64>] {
        &self.derivatives
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn t_end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn final_value(&self) -> &DVector<f64> {
        self.values.last().unwrap()
    }

    fn segment(&self, t: f64) -> usize {
        self.grid.partition_point(|x| *x <= t).saturating_sub(1).min(self.grid.len() - 2)
    }

    fn interpolate(&self, t: f64) -> DVector<f64> {
        let i = self.segment(t);
        if t == self.grid[i] {
            return self.values[i].clone();
        }
        let dt = self.grid[i + 1] - self.grid[i];
        hermite(self.grid[i], dt, &self.values[i], &self.derivatives[i], &self.values[i + 1], &self.derivatives[i + 1], t)
    }

    /// Dense-output value at `t` in `[0, t_end]`.
    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        let (start, end) = (self.grid[0], self.t_end());
        if t.is_nan() || t < start || t > end {
            return Err(Error::Domain { lambda: t, start, end });
        }
        Ok(self.interpolate(t))
    }

    /// Largest Euclidean norm over grid points in `[a, b]`.
    pub fn sup_norm(&self, a: f64, b: f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= a && **t <= b)
            .map(|(_, x)| x.norm())
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,x_1,...,x_n`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("x_{i}")).collect();
        writeln!(out, "t,{}", header.join(","))?;
        let mut row = Vec::with_capacity(self.dim() + 1);
        for (t, x) in self.grid.iter().zip(&self.values) {
            row.clear();
            row.push(*t);
            row.extend(x.iter());
            writeln!(out, "{}", csv_row(&row))?;
        }
        Ok(())
    }
}

/// Delay model seen by the integrator.
enum DelayFn<'a> {
    Varying(&'a PeriodicDelay),
    Constant(f64),
}

/// Breakpoints of order below this are placed on the grid.
const BREAKPOINT_LEVELS: usize = 3;

impl DelayFn<'_> {
    fn at(&self, t: f64) -> f64 {
        match self {
            DelayFn::Varying(d) => d.tau(t),
            DelayFn::Constant(c) => *c,
        }
    }

    /// Times where the delayed argument reaches an earlier breakpoint,
    /// starting from `t = 0`: `xi_{k+1} = g^{-1}(xi_k)`.
    fn breakpoints(&self, t_end: f64) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        let mut xi = 0.0;
        for _ in 0..BREAKPOINT_LEVELS {
            xi = match self {
                DelayFn::Varying(d) => g_inverse(d, xi, &RootOptions::default())?,
                DelayFn::Constant(c) => xi + c,
            };
            if xi >= t_end {
                break;
            }
            out.push(xi);
        }
        Ok(out)
    }
}

/// Grid on `[0, t_end]` with the breakpoints as nodes and each piece split
/// uniformly into steps no longer than `step`.
fn build_grid(breakpoints: &[f64], t_end: f64, step: f64) -> Vec<f64> {
    let mut nodes = vec![0.0];
    nodes.extend(breakpoints.iter().copied().filter(|b| *b > 0.0 && *b < t_end));
    nodes.push(t_end);
    let mut grid = vec![0.0];
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((b - a) / step).ceil().max(1.0) as usize;
        let dt = (b - a) / n as f64;
        grid.extend((1..n).map(|i| a + i as f64 * dt));
        grid.push(b);
    }
    grid
}

fn integrate(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    history: &dyn Fn(f64) -> DVector<f64>,
    delay: DelayFn<'_>,
    gain: &dyn Fn(f64) -> Result<f64>,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidParameter(format!("t_end must be positive, got {t_end}")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let nodes = build_grid(&delay.breakpoints(t_end)?, t_end, step);

    let mut traj = Trajectory {
        grid: Vec::with_capacity(nodes.len()),
        values: Vec::with_capacity(nodes.len()),
        derivatives: Vec::with_capacity(nodes.len()),
    };

    let delayed = |traj: &Trajectory, t: f64| -> DVector<f64> {
        let td = t - delay.at(t);
        if td <= 0.0 || traj.grid.len() < 2 {
            history(td)
        } else {
            traj.interpolate(td)
        }
    };
    let rhs = |traj: &Trajectory, t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        Ok((a0 * x + a1 * delayed(traj, t)) * gain(t)?)
    };

    let x0 = history(0.0);
    let d0 = rhs(&traj, 0.0, &x0)?;
    traj.grid.push(0.0);
    traj.values.push(x0);
    traj.derivatives.push(d0);

    for (i, w) in nodes.windows(2).enumerate() {
        let (t, t_next) = (w[0], w[1]);
        let dt = t_next - t;
        let x = &traj.values[i];
        let k1 = &traj.derivatives[i];
        let k2 = rhs(&traj, t + 0.5 * dt, &(x + k1 * (0.5 * dt)))?;
        let k3 = rhs(&traj, t + 0.5 * dt, &(x + &k2 * (0.5 * dt)))?;
        let k4 = rhs(&traj, t_next, &(x + &k3 * dt))?;
        let x_next = x + (k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (dt / 6.0);
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { time: t_next });
        }
        // Delayed arguments stay at least one step behind, so the new node
        // can be appended before its derivative is known.
        traj.grid.push(t_next);
        traj.values.push(x_next);
        let x_next = traj.values.last().unwrap().clone();
        let d_next = rhs(&traj, t_next, &x_next)?;
        traj.derivatives.push(d_next);
    }
    Ok(traj)
}

/// Default step `tau_min / 100`.
pub fn default_step(delay: &PeriodicDelay) -> f64 {
    delay.tau_min() / 100.0
}

/// Integrates the original system on `[0, t_end]`.
///
/// The step is capped at `tau_min / 2`.
pub fn simulate_original(sys: &DdeSystem, delay: &PeriodicDelay, t_end: f64, step: f64) -> Result<Trajectory> {
    let limit = delay.tau_min() / 2.0;
    if step > limit {
        return Err(Error::StepTooLarge { step, limit });
    }
    integrate(&sys.a0, &sys.a1, sys.history.as_ref(), DelayFn::Varying(delay), &|_| Ok(1.0), t_end, step)
}

/// Integrates the transformed system with constant delay `tau*` on `[0, t_end]`.
///
/// `history` is the initial function on `[-tau*, 0]` in the new time; for an
/// equivalence check it is `x0 . h`. The step is capped at `tau* / 2`.
pub fn simulate_transformed(
    sys: &DdeSystem,
    tt: &TimeTransform,
    history: &dyn Fn(f64) -> DVector<f64>,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    let tau_star = tt.tau_star();
    let limit = tau_star / 2.0;
    if step > limit {
        return Err(Error::StepTooLarge { step, limit });
    }
    if t_end > tt.domain_end() {
        return Err(Error::Domain { lambda: t_end, start: tt.domain_start(), end: tt.domain_end() });
    }
    let x0 = history(0.0);
    if x0.len() != sys.dim() {
        return Err(Error::Dimension(format!("history has dimension {}, system {}", x0.len(), sys.dim())));
    }
    integrate(&sys.a0, &sys.a1, history, DelayFn::Constant(tau_star), &|l| tt.h_dot(l), t_end, step)
}

/// Differences between `x(h(l))` and the transformed solution `y(l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub t_end: f64,
    pub step: f64,
    pub samples: usize,
    pub sup: f64,
    pub rms: f64,
    /// Where the sup is attained.
    pub argmax: f64,
}

/// Runs both simulations and compares `x(h(l))` with `y(l)` on the transformed grid.
///
/// The original system is integrated on `[0, h(t_end)]` and the transformed
/// one on `[0, t_end]`, both with `step`; the transformed history is `x0 . h`.
pub fn verify_equivalence(
    sys: &DdeSystem,
    delay: &PeriodicDelay,
    tt: &TimeTransform,
    t_end: f64,
    step: f64,
) -> Result<EquivalenceReport> {
    if t_end > tt.domain_end() {
        return Err(Error::Domain { lambda: t_end, start: tt.domain_start(), end: tt.domain_end() });
    }
    let t_orig = tt.h(t_end)?;
    let original = simulate_original(sys, delay, t_orig, step)?;
    let x0 = sys.history.clone();
    let history = move |l: f64| x0(tt.h(l).unwrap_or(f64::NAN));
    let transformed = simulate_transformed(sys, tt, &history, t_end, step)?;

    let mut sup = 0.0;
    let mut argmax = 0.0;
    let mut sq = 0.0;
    for (l, y) in transformed.grid.iter().zip(&transformed.values) {
        let t = tt.h(*l)?.clamp(0.0, original.t_end());
        let diff = (original.interpolate(t) - y).norm();
        sq += diff * diff;
        if diff > sup {
            sup = diff;
            argmax = *l;
        }
    }
    let samples = transformed.grid.len();
    Ok(EquivalenceReport { t_end, step, samples, sup, rms: (sq / samples as f64).sqrt(), argmax })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeVerdict {
    Decayed,
    Grew,
    Inconclusive,
}

/// What to simulate in a stability probe.
#[derive(Debug, Clone, Copy)]
pub enum ProbeTarget<'a> {
    Original(&'a PeriodicDelay),
    Transformed(&'a TimeTransform),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    /// `None` picks `delay / 100`.
    pub step: Option<f64>,
    pub decay_ratio: f64,
    pub growth_ratio: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { step: None, decay_ratio: 1e-3, growth_ratio: 1e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub verdict: ProbeVerdict,
    pub t_end: f64,
    pub step: f64,
    /// Largest `|x|` over the first 20% of the window.
    pub early_sup: f64,
    /// Largest `|x|` over the last 20% of the window.
    pub late_sup: f64,
    pub ratio: f64,
    /// Set when the state overflowed; the verdict is then `grew`.
    pub divergence_time: Option<f64>,
}

/// Simulates from the history `(1, ..., 1)` and compares the late and early
/// sup-norms of the state.
pub fn stability_probe(sys: &DdeSystem, target: ProbeTarget<'_>, t_end: f64, opts: &ProbeOptions) -> Result<ProbeReport> {
    let sys = sys.with_ones_history();
    let (result, step) = match target {
        ProbeTarget::Original(delay) => {
            let step = opts.step.unwrap_or_else(|| default_step(delay));
            (simulate_original(&sys, delay, t_end, step), step)
        }
        ProbeTarget::Transformed(tt) => {
            let step = opts.step.unwrap_or(tt.tau_star() / 100.0);
            let ones = DVector::from_element(sys.dim(), 1.0);
            (simulate_transformed(&sys, tt, &move |_| ones.clone(), t_end, step), step)
        }
    };
    match result {
        Ok(traj) => {
            let early_sup = traj.sup_norm(0.0, 0.2 * t_end);
            let late_sup = traj.sup_norm(0.8 * t_end, t_end);
            let ratio = late_sup / early_sup;
            let verdict = if ratio < opts.decay_ratio {
                ProbeVerdict::Decayed
            } else if ratio > opts.growth_ratio {
                ProbeVerdict::Grew
            } else {
                ProbeVerdict::Inconclusive
            };
            Ok(ProbeReport { verdict, t_end, step, early_sup, late_sup, ratio, divergence_time: None })
        }
        Err(Error::Divergence { time }) => Ok(ProbeReport {
            verdict: ProbeVerdict::Grew,
            t_end,
            step,
            early_sup: f64::NAN,
            late_sup: f64::INFINITY,
            ratio: f64::INFINITY,
            divergence_time: Some(time),
        }),
        Err(e) => Err(e),
    }
}
