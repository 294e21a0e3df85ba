//! Substrate depletion under saturating kinetics, and its low-concentration limit.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ErrorModel, GenericAuxiliary, ModelSpec, ObservationOperator};
use crate::numerics::{solve_ode, uniform_grid, OdeProblem, Scalar};
use crate::Bounds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmVariant {
    /// `dS/dt = -nu S / (K + S)`
    Full,
    /// `dS/dt = -(nu / K) S`
    Reduced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmConfig {
    pub variant: MmVariant,
    pub s0: f64,
    pub t_span: (f64, f64),
    pub fine_points: usize,
    pub obs_points: usize,
    pub sigma: f64,
    pub true_nu: f64,
    pub true_k: f64,
    pub nu_bounds: (f64, f64),
    pub k_bounds: (f64, f64),
    /// Largest `h * nu / K` allowed per RK4 step; fine-grid intervals are
    /// subdivided to stay under it.
    pub max_step_rate: f64,
}

impl Default for MmConfig {
    fn default() -> Self {
        Self {
            variant: MmVariant::Full,
            s0: 1.0,
            t_span: (0.0, 20.0),
            fine_points: 201,
            obs_points: 11,
            sigma: 0.05,
            true_nu: 1.0,
            true_k: 5.0,
            nu_bounds: (0.05, 10.0),
            k_bounds: (0.1, 50.0),
            max_step_rate: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MmAuxiliary {
    pub variant: MmVariant,
    pub s0: f64,
    pub t_span: (f64, f64),
    pub n_steps: usize,
    pub max_step_rate: f64,
}

impl GenericAuxiliary for MmAuxiliary {
    fn evaluate<S: Scalar>(&self, theta: &[S]) -> Result<Vec<S>> {
        if theta.len() != 2 {
            return Err(Error::invalid(format!("mm model takes (nu, K), got {} values", theta.len())));
        }
        let variant = self.variant;
        // nu / K bounds the decay rate in both variants
        let h = (self.t_span.1 - self.t_span.0) / self.n_steps as f64;
        let stiff = h * theta[0].re() / theta[1].re() / self.max_step_rate;
        let substeps = if stiff.is_finite() && stiff > 1.0 { stiff.ceil().min(1e5) as usize } else { 1 };
        let rhs = move |_t: f64, s: &[S], p: &[S]| -> Vec<S> {
            let (nu, k) = (p[0].clone(), p[1].clone());
            let s = s[0].clone();
            let rate = match variant {
                MmVariant::Full => nu * s.clone() / (k + s),
                MmVariant::Reduced => nu / k * s,
            };
            vec![-rate]
        };
        let prob = OdeProblem::new(rhs, self.t_span, vec![S::cst(self.s0)], self.n_steps)?.with_substeps(substeps)?;
        let sol = solve_ode(&prob, theta)?;
        Ok(sol.into_iter().map(|mut row| row.swap_remove(0)).collect())
    }
}

impl MmConfig {
    pub fn name(&self) -> &'static str {
        match self.variant {
            MmVariant::Full => "mm-full",
            MmVariant::Reduced => "mm-reduced",
        }
    }

    pub fn auxiliary(&self) -> MmAuxiliary {
        MmAuxiliary {
            variant: self.variant,
            s0: self.s0,
            t_span: self.t_span,
            n_steps: self.fine_points.saturating_sub(1),
            max_step_rate: self.max_step_rate,
        }
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        if !(self.max_step_rate > 0.0) {
            return Err(Error::invalid("max_step_rate must be positive"));
        }
        if self.fine_points < 2 || self.obs_points < 2 {
            return Err(Error::invalid("mm model needs at least two fine and two observation points"));
        }
        let n_steps = self.fine_points - 1;
        if n_steps % (self.obs_points - 1) != 0 {
            return Err(Error::invalid(format!(
                "{} observation points do not sit on a {}-point grid",
                self.obs_points, self.fine_points
            )));
        }
        let stride = n_steps / (self.obs_points - 1);
        let bounds = Bounds::new(
            vec![self.nu_bounds.0, self.k_bounds.0],
            vec![self.nu_bounds.1, self.k_bounds.1],
        )?;
        Ok(ModelSpec::new(
            self.name(),
            vec!["nu".into(), "K".into()],
            bounds,
            Arc::new(self.auxiliary()),
            uniform_grid(self.t_span.0, self.t_span.1, self.fine_points),
            ObservationOperator::strided(0, stride, self.fine_points)?,
            ErrorModel::NormalAdditive { sigma: self.sigma },
        )?
        .with_true_params(vec![self.true_nu, self.true_k]))
    }
}

/// Trajectory of `S` on the fine grid.
pub fn mm_solution(config: &MmConfig, nu: f64, k: f64) -> Result<Vec<f64>> {
    if !(nu > 0.0 && k > 0.0) {
        return Err(Error::Domain(format!("mm model needs nu, K > 0, got ({nu}, {k})")));
    }
    config.auxiliary().evaluate(&[nu, k])
}
