//! Monotone piecewise-cubic Hermite interpolation.

use crate::error::{Error, Result};

/// Cubic Hermite interpolant through `(x_i, y_i)` with knot slopes `d_i`.
///
/// Slopes are limited with the Fritsch-Carlson criterion so that the
/// interpolant is monotone on every interval where the data is. Slopes that
/// already satisfy the criterion are left untouched, so exact derivative data
/// keeps the fourth-order accuracy of Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneHermite {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
    limited: usize,
}

impl MonotoneHermite {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, mut ds: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n || ds.len() != n {
            return Err(Error::Dimension(format!(
                "need matching knot arrays of length >= 2 (x: {n}, y: {}, d: {})",
                ys.len(),
                ds.len()
            )));
        }
        if let Some(w) = xs.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Parse(format!("knots not strictly increasing at x = {}", w[0])));
        }

        let mut limited = 0;
        for i in 0..n - 1 {
            let secant = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
            if secant == 0.0 {
                if ds[i] != 0.0 || ds[i + 1] != 0.0 {
                    limited += 1;
                }
                ds[i] = 0.0;
                ds[i + 1] = 0.0;
                continue;
            }
            let mut alpha = ds[i] / secant;
            let mut beta = ds[i + 1] / secant;
            let mut touched = false;
            if alpha < 0.0 {
                alpha = 0.0;
                touched = true;
            }
            if beta < 0.0 {
                beta = 0.0;
                touched = true;
            }
            let r2 = alpha * alpha + beta * beta;
            if r2 > 9.0 {
                let scale = 3.0 / r2.sqrt();
                alpha *= scale;
                beta *= scale;
                touched = true;
            }
            if touched {
                limited += 1;
                ds[i] = alpha * secant;
                ds[i + 1] = beta * secant;
            }
        }
        Ok(Self { xs, ys, ds, limited })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn slopes(&self) -> &[f64] {
        &self.ds
    }

    /// Number of intervals whose slopes the limiter changed.
    pub fn limited_intervals(&self) -> usize {
        self.limited
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    fn segment(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&k| k <= x);
        i.saturating_sub(1).min(self.xs.len() - 2)
    }

    /// Value at `x`; callers are expected to stay within `[x_min, x_max]`.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * t;
        let dh11 = 3.0 * t2 - 2.0 * t;
        (dh00 * self.ys[i] + dh01 * self.ys[i + 1]) / h + dh10 * self.ds[i] + dh11 * self.ds[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_knots() {
        let xs = vec![0.0, 0.5, 1.3, 2.0];
        let ys = vec![0.0, 0.2, 1.0, 4.0];
        let ds = vec![0.3, 0.8, 2.0, 5.0];
        let f = MonotoneHermite::new(xs.clone(), ys.clone(), ds).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(f.eval(*x), *y);
        }
    }

    #[test]
    fn exact_slopes_give_fourth_order() {
        let err = |n: usize| {
            let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            let ys = xs.iter().map(|x: &f64| x + 0.1 * (3.0 * x).sin()).collect();
            let ds = xs.iter().map(|x: &f64| 1.0 + 0.3 * (3.0 * x).cos()).collect();
            let f = MonotoneHermite::new(xs, ys, ds).unwrap();
            (0..997)
                .map(|i| i as f64 / 996.0)
                .map(|x| (f.eval(x) - (x + 0.1 * (3.0 * x).sin())).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(10) / err(20);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn limiter_removes_overshoot() {
        let xs = vec![0.0, 1.0, 2.0];
        let ys = vec![0.0, 1.0, 1.01];
        let f = MonotoneHermite::new(xs, ys, vec![5.0, 5.0, 5.0]).unwrap();
        assert!(f.limited_intervals() > 0);
        let mut prev = f.eval(0.0);
        for i in 1..=200 {
            let v = f.eval(i as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(MonotoneHermite::new(vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(MonotoneHermite::new(vec![0.0], vec![0.0], vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(
            steps in prop::collection::vec(0.01f64..2.0, 3..12),
            rises in prop::collection::vec(0.0f64..3.0, 12),
            slopes in prop::collection::vec(0.0f64..20.0, 12),
        ) {
            let mut xs = vec![0.0];
            let mut ys = vec![0.0];
            for (i, s) in steps.iter().enumerate() {
                xs.push(xs[i] + s);
                ys.push(ys[i] + rises[i]);
            }
            let ds = slopes[..xs.len()].to_vec();
            let f = MonotoneHermite::new(xs.clone(), ys, ds).unwrap();
            let (a, b) = (f.x_min(), f.x_max());
            let mut prev = f.eval(a);
            for i in 1..=400 {
                let v = f.eval(a + (b - a) * i as f64 / 400.0);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
