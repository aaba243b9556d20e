//! Comparisons between the approximations and the exact transform.

use serde::{Deserialize, Serialize};

use crate::abel::{exact_transform, PropagationOptions};
use crate::error::{Error, Result};
use crate::periodic_delay::PeriodicDelay;
use crate::perturbation::{linspace, seed_compatibility_error, ExpansionOrder, TimeTransform};

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest pairwise differences between the `h'` curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spreads {
    pub order1_order2: f64,
    pub order1_exact: Option<f64>,
    pub order2_exact: Option<f64>,
    pub max: f64,
}

/// `h'` of both approximations and, optionally, the exact transform on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdotCurves {
    pub lambda: Vec<f64>,
    pub order1: Vec<f64>,
    pub order2: Vec<f64>,
    pub exact: Option<Vec<f64>>,
    pub spreads: Spreads,
}

impl HdotCurves {
    /// CSV with header `lambda,hdot_order1,hdot_order2,hdot_exact`; the last
    /// column is empty when the exact transform was not computed.
    pub fn to_csv(&self) -> String {
        use crate::fmt::f17;
        let mut out = String::from("lambda,hdot_order1,hdot_order2,hdot_exact\n");
        for i in 0..self.lambda.len() {
            let exact = self.exact.as_ref().map(|e| f17(e[i])).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                f17(self.lambda[i]),
                f17(self.order1[i]),
                f17(self.order2[i]),
                exact
            ));
        }
        out
    }
}

/// Evaluates `h'` on `points + 1` uniform points of `window`.
pub fn hdot_curves(
    delay: &PeriodicDelay,
    tau_star: f64,
    window: (f64, f64),
    points: usize,
    exact: Option<&PropagationOptions>,
) -> Result<HdotCurves> {
    let (a, b) = window;
    if !(b > a) || points == 0 {
        return Err(Error::InvalidParameter(format!("bad window [{a}, {b}] or point count {points}")));
    }
    let lambda = linspace(a, b, points);
    let eval = |tt: &TimeTransform| lambda.iter().map(|l| tt.h_dot(*l)).collect::<Result<Vec<_>>>();
    let order1 = eval(&TimeTransform::perturbative(delay, tau_star, ExpansionOrder::First)?)?;
    let order2 = eval(&TimeTransform::perturbative(delay, tau_star, ExpansionOrder::Second)?)?;
    let exact = match exact {
        Some(opts) => {
            let p = exact_transform(delay, tau_star, b.max(tau_star), opts)?;
            Some(eval(&TimeTransform::Exact(p))?)
        }
        None => None,
    };
    let o12 = sup_diff(&order1, &order2);
    let o1e = exact.as_ref().map(|e| sup_diff(&order1, e));
    let o2e = exact.as_ref().map(|e| sup_diff(&order2, e));
    let max = o12.max(o1e.unwrap_or(0.0)).max(o2e.unwrap_or(0.0));
    let spreads = Spreads { order1_order2: o12, order1_exact: o1e, order2_exact: o2e, max };
    Ok(HdotCurves { lambda, order1, order2, exact, spreads })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub eps: f64,
    pub order1: f64,
    pub order2: f64,
}

/// Seed-compatibility error of both approximations at `delay.with_eps(eps)`.
pub fn error_point(delay: &PeriodicDelay, tau_star: f64, eps: f64) -> Result<ErrorPoint> {
    let d = delay.with_eps(eps)?;
    let e = |o| seed_compatibility_error(&TimeTransform::perturbative(&d, tau_star, o)?, &d);
    Ok(ErrorPoint { eps, order1: e(ExpansionOrder::First)?, order2: e(ExpansionOrder::Second)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSweep {
    pub points: Vec<ErrorPoint>,
    pub slope_order1: f64,
    pub slope_order2: f64,
}

impl ErrorSweep {
    /// Requires a strictly increasing, positive `eps` sequence.
    pub fn from_points(points: Vec<ErrorPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameter("an error sweep needs at least two eps values".into()));
        }
        if points[0].eps <= 0.0 || points.windows(2).any(|w| !(w[1].eps > w[0].eps)) {
            return Err(Error::InvalidParameter("eps grid must be positive and strictly increasing".into()));
        }
        let eps: Vec<f64> = points.iter().map(|p| p.eps).collect();
        let e1: Vec<f64> = points.iter().map(|p| p.order1).collect();
        let e2: Vec<f64> = points.iter().map(|p| p.order2).collect();
        Ok(Self { slope_order1: loglog_slope(&eps, &e1), slope_order2: loglog_slope(&eps, &e2), points })
    }

    /// CSV with header `eps,e_order1,e_order2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,e_order1,e_order2\n");
        for p in &self.points {
            out.push_str(&crate::fmt::csv_row(&[p.eps, p.order1, p.order2]));
            out.push('\n');
        }
        out
    }
}

/// Sequential sweep over `eps_grid`.
pub fn error_sweep(delay: &PeriodicDelay, tau_star: f64, eps_grid: &[f64]) -> Result<ErrorSweep> {
    let points = eps_grid.iter().map(|e| error_point(delay, tau_star, *e)).collect::<Result<Vec<_>>>()?;
    ErrorSweep::from_points(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::FIG3_EPS;

    fn delay() -> PeriodicDelay {
        PeriodicDelay::sinusoid(3.0, 5.0, 0.1).unwrap()
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(3)).collect();
        assert!((loglog_slope(&x, &y) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_slopes() {
        let s = error_sweep(&delay(), 3.0, &FIG3_EPS).unwrap();
        assert!((s.slope_order1 - 2.0).abs() < 0.2, "{}", s.slope_order1);
        assert!((s.slope_order2 - 3.0).abs() < 0.3, "{}", s.slope_order2);
        assert!(s.points.windows(2).all(|w| w[1].order1 > w[0].order1 && w[1].order2 > w[0].order2));
        let csv = s.to_csv();
        let first: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first, vec![0.0125, s.points[0].order1, s.points[0].order2]);
    }

    #[test]
    fn sweep_rejects_unsorted_grid() {
        assert!(error_sweep(&delay(), 3.0, &[0.1, 0.05]).is_err());
    }

    #[test]
    fn curves_at_zero_eps_are_one() {
        let d = delay().with_eps(0.0).unwrap();
        let c = hdot_curves(&d, 3.0, (0.0, 3.0), 30, Some(&PropagationOptions::default())).unwrap();
        for v in c.order1.iter().chain(&c.order2).chain(c.exact.as_ref().unwrap()) {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let csv = c.to_csv();
        let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row.len(), 4);
        assert!(row[1..].iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}
