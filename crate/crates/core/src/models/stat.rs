//! Normal approximations to replicated binomial counts.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ErrorModel, GenericAuxiliary, ModelSpec, ObservationOperator};
use crate::numerics::Scalar;
use crate::Bounds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatVariant {
    /// Variance equals the mean.
    PoissonLimit,
    /// Variance `np(1 - p)`.
    Binomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatModelConfig {
    pub variant: StatVariant,
    pub true_n: f64,
    pub true_p: f64,
    pub n_samples: usize,
    pub n_bounds: (f64, f64),
    pub p_bounds: (f64, f64),
}

impl Default for StatModelConfig {
    fn default() -> Self {
        Self {
            variant: StatVariant::Binomial,
            true_n: 100.0,
            true_p: 0.2,
            n_samples: 10,
            n_bounds: (1e-6, 500.0),
            p_bounds: (1e-6, 1.0),
        }
    }
}

/// `(n, p) -> (mu, var)`.
#[derive(Clone, Copy, Debug)]
pub struct StatAuxiliary {
    pub variant: StatVariant,
}

impl GenericAuxiliary for StatAuxiliary {
    fn evaluate<S: Scalar>(&self, theta: &[S]) -> Result<Vec<S>> {
        if theta.len() != 2 {
            return Err(Error::invalid(format!("stat model takes (n, p), got {} values", theta.len())));
        }
        let (n, p) = (theta[0].clone(), theta[1].clone());
        let mu = n * p.clone();
        let var = match self.variant {
            StatVariant::PoissonLimit => mu.clone(),
            StatVariant::Binomial => mu.clone() * (S::one() - p),
        };
        Ok(vec![mu, var])
    }
}

pub fn stat_auxiliary(variant: StatVariant, n: f64, p: f64) -> Result<(f64, f64)> {
    if !(n > 0.0) || !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("stat model needs n > 0 and 0 < p < 1, got ({n}, {p})")));
    }
    let out = StatAuxiliary { variant }.evaluate(&[n, p])?;
    Ok((out[0], out[1]))
}

impl StatModelConfig {
    pub fn name(&self) -> &'static str {
        match self.variant {
            StatVariant::PoissonLimit => "stat-poisson-limit",
            StatVariant::Binomial => "stat-binomial",
        }
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let bounds = Bounds::new(
            vec![self.n_bounds.0, self.p_bounds.0],
            vec![self.n_bounds.1, self.p_bounds.1],
        )?;
        Ok(ModelSpec::new(
            self.name(),
            vec!["n".into(), "p".into()],
            bounds,
            Arc::new(StatAuxiliary { variant: self.variant }),
            Vec::new(),
            ObservationOperator::all(2),
            ErrorModel::MeanVariance,
        )?
        .with_true_params(vec![self.true_n, self.true_p]))
    }
}
