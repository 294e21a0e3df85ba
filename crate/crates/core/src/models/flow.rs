//! Steady one-dimensional groundwater flow through two aquifer zones with
//! uniform recharge and fixed zero heads at both ends.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ErrorModel, GenericAuxiliary, ModelSpec, ObservationOperator};
use crate::numerics::{uniform_grid, Scalar};
use crate::Bounds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub length: f64,
    pub fine_points: usize,
    /// Every `obs_stride`-th interior grid point is observed.
    pub obs_stride: usize,
    pub sigma: f64,
    pub true_params: [f64; 3],
    pub bounds: (f64, f64),
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            length: 100.0,
            fine_points: 201,
            obs_stride: 10,
            sigma: 0.2,
            true_params: [3.0, 1.0, 1.0],
            bounds: (0.1, 5.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowAuxiliary {
    pub length: f64,
    pub grid: Vec<f64>,
}

/// Coefficients `(alpha, beta2)` of the two quadratic branches.
pub fn flow_coefficients(length: f64, t1: f64, t2: f64, r: f64) -> (f64, f64) {
    let (a, b) = (r / t1, r / t2);
    let alpha = 3.0 * length / 8.0 * b + length / 8.0 * a;
    let beta2 = length * length / 8.0 * (b - a);
    (alpha, beta2)
}

impl GenericAuxiliary for FlowAuxiliary {
    fn evaluate<S: Scalar>(&self, theta: &[S]) -> Result<Vec<S>> {
        if theta.len() != 3 {
            return Err(Error::invalid(format!("flow model takes (T1, T2, R), got {} values", theta.len())));
        }
        let l = self.length;
        let a = theta[2].clone() / theta[0].clone();
        let b = theta[2].clone() / theta[1].clone();
        let alpha = b.clone().scale(3.0 * l / 8.0) + a.clone().scale(l / 8.0);
        // Factored branches vanish exactly at both ends.
        Ok(self
            .grid
            .iter()
            .map(|&x| {
                if x < 0.5 * l {
                    (alpha.clone() - a.clone().scale(0.5 * x)).scale(x)
                } else {
                    (b.clone().scale(0.5 * (x + l)) - alpha.clone()).scale(l - x)
                }
            })
            .collect())
    }
}

impl FlowConfig {
    pub fn auxiliary(&self) -> FlowAuxiliary {
        FlowAuxiliary {
            length: self.length,
            grid: uniform_grid(0.0, self.length, self.fine_points),
        }
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        if self.fine_points < 3 {
            return Err(Error::invalid("flow model needs at least three grid points"));
        }
        let aux = self.auxiliary();
        let grid = aux.grid.clone();
        let last = self.fine_points - 1;
        let op = ObservationOperator::new((self.obs_stride..last).step_by(self.obs_stride.max(1)).collect())?;
        Ok(ModelSpec::new(
            "flow",
            vec!["T1".into(), "T2".into(), "R".into()],
            Bounds::new(vec![self.bounds.0; 3], vec![self.bounds.1; 3])?,
            Arc::new(aux),
            grid,
            op,
            ErrorModel::LogNormal { sigma: self.sigma },
        )?
        .with_true_params(self.true_params.to_vec()))
    }
}

/// Hydraulic head on the fine grid.
pub fn flow_solution(config: &FlowConfig, t1: f64, t2: f64, r: f64) -> Result<Vec<f64>> {
    if !(t1 > 0.0 && t2 > 0.0 && r > 0.0) {
        return Err(Error::Domain(format!("flow model needs positive parameters, got ({t1}, {t2}, {r})")));
    }
    config.auxiliary().evaluate(&[t1, t2, r])
}
