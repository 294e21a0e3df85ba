//! The contract every analysable model satisfies.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::{Bounds, Dual64};

/// A model's auxiliary mapping written once for any scalar type.
///
/// Implement this for user models; the blanket impl of [`AuxiliaryMap`]
/// provides the `f64` and dual-number evaluations.
pub trait GenericAuxiliary: Send + Sync {
    fn evaluate<S: Scalar>(&self, theta: &[S]) -> Result<Vec<S>>;
}

/// Object-safe form of the auxiliary mapping, stored in [`ModelSpec`].
pub trait AuxiliaryMap: Send + Sync {
    fn eval(&self, theta: &[f64]) -> Result<Vec<f64>>;
    fn eval_dual(&self, theta: &[Dual64]) -> Result<Vec<Dual64>>;
}

impl<G: GenericAuxiliary> AuxiliaryMap for G {
    fn eval(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(theta)
    }
    fn eval_dual(&self, theta: &[Dual64]) -> Result<Vec<Dual64>> {
        self.evaluate(theta)
    }
}

/// Row-selection form of the observation operator: observation `k` is fine
/// grid point `indices[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationOperator {
    pub indices: Vec<usize>,
}

impl ObservationOperator {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("observation indices must be strictly increasing"));
        }
        Ok(Self { indices })
    }

    /// Every point of an `n`-point output.
    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    /// Every `stride`-th point of an `n`-point grid, starting at `first`.
    pub fn strided(first: usize, stride: usize, n: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("observation stride must be positive"));
        }
        Self::new((first..n).step_by(stride).collect())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn apply<T: Clone>(&self, fine: &[T]) -> Result<Vec<T>> {
        self.indices
            .iter()
            .map(|&i| {
                fine.get(i).cloned().ok_or_else(|| {
                    Error::invalid(format!("observation index {i} outside output of length {}", fine.len()))
                })
            })
            .collect()
    }

    /// The 0/1 selection matrix `B_obs` for an `n`-point fine grid.
    pub fn matrix(&self, n: usize) -> crate::Matrix {
        let mut b = crate::Matrix::zeros(self.len(), n);
        for (k, &i) in self.indices.iter().enumerate() {
            b[(k, i)] = 1.0;
        }
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ErrorModel {
    /// `y ~ N(mean, sigma^2)` independently at every observation point.
    NormalAdditive { sigma: f64 },
    /// `log y ~ N(log mean, sigma^2)`.
    LogNormal { sigma: f64 },
    /// Scalar replicates `y ~ N(mu, var)` where the auxiliary output is
    /// `(mu, var)` itself (grid-free statistical models).
    MeanVariance,
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorModel::NormalAdditive { sigma } | ErrorModel::LogNormal { sigma } if !(sigma > 0.0) => {
                Err(Error::invalid(format!("noise sigma must be positive, got {sigma}")))
            }
            _ => Ok(()),
        }
    }
}

/// Observations, replicate-major: replicate `r` occupies
/// `observations[r * per_replicate..(r + 1) * per_replicate]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub observations: Vec<f64>,
    pub n_replicates: usize,
}

impl Dataset {
    pub fn new(observations: Vec<f64>, n_replicates: usize) -> Result<Self> {
        if n_replicates == 0 || observations.len() % n_replicates != 0 {
            return Err(Error::invalid(format!(
                "{} observations cannot be split into {n_replicates} replicates",
                observations.len()
            )));
        }
        Ok(Self {
            observations,
            n_replicates,
        })
    }

    pub fn per_replicate(&self) -> usize {
        self.observations.len() / self.n_replicates
    }

    pub fn replicates(&self) -> impl Iterator<Item = &[f64]> {
        self.observations.chunks(self.per_replicate().max(1))
    }
}

#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub param_names: Vec<String>,
    /// Original-scale box; strictly positive so every component can be logged.
    pub bounds: Bounds,
    pub auxiliary: Arc<dyn AuxiliaryMap>,
    /// Abscissae of the auxiliary output; empty for grid-free models.
    pub fine_grid: Vec<f64>,
    pub obs_operator: ObservationOperator,
    pub error_model: ErrorModel,
    /// Data-generating parameter values, when known.
    pub true_params: Option<Vec<f64>>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("param_names", &self.param_names)
            .field("bounds", &self.bounds)
            .field("fine_grid_len", &self.fine_grid.len())
            .field("obs_operator", &self.obs_operator)
            .field("error_model", &self.error_model)
            .finish()
    }
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        param_names: Vec<String>,
        bounds: Bounds,
        auxiliary: Arc<dyn AuxiliaryMap>,
        fine_grid: Vec<f64>,
        obs_operator: ObservationOperator,
        error_model: ErrorModel,
    ) -> Result<Self> {
        let name = name.into();
        if param_names.len() != bounds.dim() {
            return Err(Error::invalid(format!(
                "{name}: {} parameter names for {} bounds",
                param_names.len(),
                bounds.dim()
            )));
        }
        if bounds.lower.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::invalid(format!(
                "{name}: bounds must be strictly positive to take logs"
            )));
        }
        if let Some(&last) = obs_operator.indices.last() {
            if !fine_grid.is_empty() && last >= fine_grid.len() {
                return Err(Error::invalid(format!(
                    "{name}: observation index {last} outside fine grid of {} points",
                    fine_grid.len()
                )));
            }
        }
        error_model.validate()?;
        Ok(Self {
            name,
            param_names,
            bounds,
            auxiliary,
            fine_grid,
            obs_operator,
            error_model,
            true_params: None,
        })
    }

    pub fn with_true_params(mut self, theta: Vec<f64>) -> Self {
        self.true_params = Some(theta);
        self
    }

    pub fn with_obs_operator(mut self, op: ObservationOperator) -> Self {
        self.obs_operator = op;
        self
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn is_grid_free(&self) -> bool {
        self.fine_grid.is_empty()
    }

    /// Interior test: strictly inside the box.
    pub fn is_interior(&self, theta: &[f64]) -> bool {
        theta.len() == self.n_params()
            && theta
                .iter()
                .zip(self.bounds.lower.iter().zip(&self.bounds.upper))
                .all(|(t, (l, u))| t > l && t < u)
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if !self.bounds.contains(theta) {
            return Err(Error::OutOfBounds(format!(
                "{}: theta {theta:?} outside [{:?}, {:?}]",
                self.name, self.bounds.lower, self.bounds.upper
            )));
        }
        Ok(())
    }

    fn wrap<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| Error::Model {
            model: self.name.clone(),
            source: Box::new(e),
        })
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if !self.fine_grid.is_empty() && n != self.fine_grid.len() {
            return Err(Error::invalid(format!(
                "{}: auxiliary output has {n} entries but the fine grid has {}",
                self.name,
                self.fine_grid.len()
            )));
        }
        Ok(())
    }

    /// Auxiliary mapping on the fine grid.
    pub fn predict_fine(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let out = self.wrap(self.auxiliary.eval(theta))?;
        self.check_len(out.len())?;
        Ok(out)
    }

    /// Auxiliary mapping carrying derivatives.
    pub fn predict_fine_dual(&self, theta: &[Dual64]) -> Result<Vec<Dual64>> {
        let values: Vec<f64> = theta.iter().map(|d| d.value).collect();
        self.check_theta(&values)?;
        let out = self.wrap(self.auxiliary.eval_dual(theta))?;
        self.check_len(out.len())?;
        Ok(out)
    }

    /// Fine prediction restricted to the observation points.
    pub fn predict_obs(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let fine = self.predict_fine(theta)?;
        self.obs_operator.apply(&fine)
    }

    /// Number of data values one replicate provides.
    pub fn obs_dim(&self) -> usize {
        match self.error_model {
            ErrorModel::MeanVariance => 1,
            _ => self.obs_operator.len(),
        }
    }

    pub fn validate_dataset(&self, data: &Dataset) -> Result<()> {
        let expected = data.n_replicates * self.obs_dim();
        if data.observations.len() != expected {
            return Err(Error::invalid(format!(
                "{}: dataset has {} values, expected {} ({} replicates x {})",
                self.name,
                data.observations.len(),
                expected,
                data.n_replicates,
                self.obs_dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Square;
    impl GenericAuxiliary for Square {
        fn evaluate<S: Scalar>(&self, theta: &[S]) -> Result<Vec<S>> {
            Ok((0..5).map(|i| theta[0].clone() * S::cst(i as f64)).collect())
        }
    }

    fn toy() -> ModelSpec {
        ModelSpec::new(
            "toy",
            vec!["a".into()],
            Bounds::new(vec![0.1], vec![10.0]).unwrap(),
            Arc::new(Square),
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            ObservationOperator::new(vec![1, 3]).unwrap(),
            ErrorModel::NormalAdditive { sigma: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn obs_is_selection_of_fine() {
        let m = toy();
        let fine = m.predict_fine(&[2.0]).unwrap();
        let obs = m.predict_obs(&[2.0]).unwrap();
        let b = m.obs_operator.matrix(5);
        let via_matrix = &b * nalgebra::DVector::from_vec(fine);
        assert_eq!(obs, via_matrix.as_slice());
    }

    #[test]
    fn full_selection_is_identity() {
        let m = toy().with_obs_operator(ObservationOperator::all(5));
        assert_eq!(m.predict_obs(&[3.0]).unwrap(), m.predict_fine(&[3.0]).unwrap());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ObservationOperator::new(vec![2, 2]).is_err());
        let bad = ModelSpec::new(
            "bad",
            vec!["a".into()],
            Bounds::new(vec![-1.0], vec![1.0]).unwrap(),
            Arc::new(Square),
            vec![],
            ObservationOperator::all(5),
            ErrorModel::MeanVariance,
        );
        assert!(bad.is_err());
        let bad_grid = ModelSpec::new(
            "bad",
            vec!["a".into()],
            Bounds::new(vec![1.0], vec![2.0]).unwrap(),
            Arc::new(Square),
            vec![0.0, 1.0],
            ObservationOperator::new(vec![0, 4]).unwrap(),
            ErrorModel::NormalAdditive { sigma: 1.0 },
        );
        assert!(bad_grid.is_err());
    }

    #[test]
    fn out_of_bounds_theta_is_error() {
        assert!(matches!(toy().predict_fine(&[20.0]), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn dataset_shape_checks() {
        let m = toy();
        assert!(m.validate_dataset(&Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2).unwrap()).is_ok());
        assert!(m.validate_dataset(&Dataset::new(vec![1.0, 2.0, 3.0], 1).unwrap()).is_err());
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2).is_err());
    }
}
