//! Built-in parameter sets.
//!
//! `fig1` and `fig2` compare the approximations at `eps = 0.01` and `0.1`,
//! `fig3` is the error sweep, and `gu-example` is a two-state benchmark
//! system that is stable for constant delay 3.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dde_sim::DdeSystem;
use crate::error::{Error, Result};
use crate::periodic_delay::PeriodicDelay;

pub const PRESET_NAMES: [&str; 4] = ["fig1", "fig2", "fig3", "gu-example"];

/// Error-sweep grid of `fig3`.
pub const FIG3_EPS: [f64; 5] = [0.0125, 0.025, 0.05, 0.1, 0.2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub tau0: f64,
    pub omega: f64,
    pub eps: f64,
    pub tau_star: f64,
    /// Plotting window in the new time.
    pub window: (f64, f64),
    pub eps_grid: Vec<f64>,
    /// `A0`, `A1` rows, for presets that carry a system.
    pub a0: Option<Vec<Vec<f64>>>,
    pub a1: Option<Vec<Vec<f64>>>,
}

impl Preset {
    pub fn delay(&self) -> Result<PeriodicDelay> {
        PeriodicDelay::sinusoid(self.tau0, self.omega, self.eps)
    }

    /// The preset's system with history `(1, ..., 1)`, if it has one.
    pub fn system(&self) -> Option<DdeSystem> {
        let (a0, a1) = (self.a0.as_ref()?, self.a1.as_ref()?);
        Some(system_from_rows(a0, a1).expect("preset matrices are consistent"))
    }
}

/// Builds a system with history `(1, ..., 1)` from row-major matrices.
pub fn system_from_rows(a0: &[Vec<f64>], a1: &[Vec<f64>]) -> Result<DdeSystem> {
    let to_matrix = |rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("system matrices must be square".into()));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    };
    let a0 = to_matrix(a0)?;
    let a1 = to_matrix(a1)?;
    let n = a0.nrows();
    DdeSystem::with_constant_history(a0, a1, DVector::from_element(n, 1.0))
}

fn base(name: &str, eps: f64) -> Preset {
    Preset {
        name: name.into(),
        tau0: 3.0,
        omega: 5.0,
        eps,
        tau_star: 3.0,
        window: (0.0, 3.0),
        eps_grid: Vec::new(),
        a0: None,
        a1: None,
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    Ok(match name {
        "fig1" => base(name, 0.01),
        "fig2" => base(name, 0.1),
        "fig3" => Preset { eps_grid: FIG3_EPS.to_vec(), ..base(name, 0.1) },
        "gu-example" => Preset {
            window: (0.0, 30.0),
            a0: Some(vec![vec![-2.0, 0.0], vec![0.0, -0.9]]),
            a1: Some(vec![vec![-1.0, 0.0], vec![-1.0, -1.0]]),
            ..base(name, 0.01)
        },
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}

/// The `gu-example` system.
pub fn gu_system() -> DdeSystem {
    preset("gu-example").unwrap().system().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_resolve() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            assert_eq!(p.name, name);
            assert!(p.delay().unwrap().validate_hypotheses().passed());
        }
        assert!(preset("fig4").is_err());
    }

    #[test]
    fn gu_matrices() {
        let sys = gu_system();
        assert_eq!(sys.dim(), 2);
        assert_eq!(sys.a0()[(1, 1)], -0.9);
        assert_eq!(sys.a1()[(1, 0)], -1.0);
    }

    #[test]
    fn non_square_rows_rejected() {
        assert!(system_from_rows(&[vec![1.0, 2.0]], &[vec![1.0]]).is_err());
    }
}
