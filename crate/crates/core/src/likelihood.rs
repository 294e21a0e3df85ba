//! Log-likelihoods, maximum likelihood and chi-square cutoffs.
//!
//! A problem is optimised in its *active* coordinates: the original parameters,
//! or monomial coordinates when a [`Reparameterisation`] is attached. All
//! active coordinates are positive, and every optimiser here works on their
//! logarithms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ErrorModel, ModelSpec};
use crate::numerics::{jacobian_from_duals, minimize_box, Dual, OptimOptions, Scalar};
use crate::reparam::Reparameterisation;
use crate::{Bounds, Matrix};

/// Widening factor applied to the corner range of monomial coordinates.
const COORDINATE_MARGIN: f64 = 1.1;
/// Relative slack when mapping back onto the original box.
const BOX_SLACK: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct LikelihoodProblem {
    pub model: ModelSpec,
    pub data: Dataset,
    pub coordinates: Option<Reparameterisation>,
}

impl LikelihoodProblem {
    pub fn new(model: ModelSpec, data: Dataset) -> Result<Self> {
        model.validate_dataset(&data)?;
        Ok(Self {
            model,
            data,
            coordinates: None,
        })
    }

    pub fn with_coordinates(mut self, coords: Reparameterisation) -> Result<Self> {
        if coords.dim() != self.model.n_params() {
            return Err(Error::invalid(format!(
                "{}-dimensional coordinates for a {}-parameter model",
                coords.dim(),
                self.model.n_params()
            )));
        }
        self.coordinates = Some(coords);
        Ok(self)
    }

    pub fn without_coordinates(&self) -> Self {
        Self {
            coordinates: None,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.model.n_params()
    }

    pub fn coordinate_names(&self) -> Vec<String> {
        match &self.coordinates {
            Some(c) => c.labels.clone(),
            None => self.model.param_names.clone(),
        }
    }

    /// The box searched in active coordinates. For monomial coordinates this is
    /// the range over the corners of the original box, widened by 10% on a
    /// log scale; points whose inverse leaves the original box are infeasible.
    pub fn coordinate_bounds(&self) -> Bounds {
        let Some(coords) = &self.coordinates else {
            return self.model.bounds.clone();
        };
        let b = &self.model.bounds;
        let n = b.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for mask in 0..(1usize << n) {
            let corner: Vec<f64> = (0..n)
                .map(|i| if mask >> i & 1 == 1 { b.upper[i] } else { b.lower[i] })
                .collect();
            for (i, v) in coords.forward(&corner).into_iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        Bounds {
            lower: lo.into_iter().map(|v| v / COORDINATE_MARGIN).collect(),
            upper: hi.into_iter().map(|v| v * COORDINATE_MARGIN).collect(),
        }
    }

    pub fn to_active(&self, theta: &[f64]) -> Vec<f64> {
        match &self.coordinates {
            Some(c) => c.forward(theta),
            None => theta.to_vec(),
        }
    }

    /// Original parameters for an active point, or `None` if they fall
    /// outside the model box.
    pub fn to_original(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut theta = match &self.coordinates {
            Some(c) => c.inverse(x),
            None => x.to_vec(),
        };
        let b = &self.model.bounds;
        for (i, t) in theta.iter_mut().enumerate() {
            if !t.is_finite() {
                return None;
            }
            if *t < b.lower[i] {
                if *t < b.lower[i] * (1.0 - BOX_SLACK) {
                    return None;
                }
                *t = b.lower[i];
            } else if *t > b.upper[i] {
                if *t > b.upper[i] * (1.0 + BOX_SLACK) {
                    return None;
                }
                *t = b.upper[i];
            }
        }
        Some(theta)
    }

    /// Log-likelihood at a point in active coordinates.
    ///
    /// Monomial points whose inverse leaves the original box give `-inf`;
    /// original-coordinate points outside the box are an error.
    pub fn loglik(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!("expected {} coordinates, got {}", self.dim(), x.len())));
        }
        if self.coordinates.is_none() && !self.model.bounds.contains(x) {
            return Err(Error::OutOfBounds(format!("{}: {x:?}", self.model.name)));
        }
        match self.to_original(x) {
            Some(theta) => self.loglik_original(&theta),
            None => Ok(f64::NEG_INFINITY),
        }
    }

    /// Log-likelihood at original parameters.
    pub fn loglik_original(&self, theta: &[f64]) -> Result<f64> {
        let pred = self.model.predict_obs(theta)?;
        Ok(loglik_from_prediction(&self.model.error_model, &pred, &self.data))
    }

    /// Log-likelihood with every failure mapped to `-inf`, for optimisers.
    pub(crate) fn objective(&self, x: &[f64]) -> f64 {
        self.to_original(x)
            .and_then(|t| self.loglik_original(&t).ok())
            .filter(|v| !v.is_nan())
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// Scaled residuals (so that loglik = const - |r|^2 / 2) and their
    /// Jacobian with respect to the logs of the `free` active coordinates.
    fn residual_jacobian(&self, x: &[f64], free: &[usize]) -> Result<(Vec<f64>, Matrix)> {
        let nf = free.len();
        let mut xd: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant(v)).collect();
        for (k, &i) in free.iter().enumerate() {
            xd[i] = Dual::seeded(x[i], k, nf, x[i]);
        }
        let theta = match &self.coordinates {
            Some(c) => c.inverse_scalar(&xd),
            None => xd,
        };
        let fine = self.model.predict_fine_dual(&theta)?;
        let pred = self.model.obs_operator.apply(&fine)?;
        let mut res = Vec::with_capacity(self.data.observations.len());
        for rep in self.data.replicates() {
            for (y, m) in rep.iter().zip(&pred) {
                let r = match self.model.error_model {
                    ErrorModel::NormalAdditive { sigma } => (Dual::cst(*y) - m.clone()).scale(1.0 / sigma),
                    ErrorModel::LogNormal { sigma } => {
                        if !(*y > 0.0 && m.value > 0.0) {
                            return Err(Error::Domain("non-positive value under log-normal error".into()));
                        }
                        (Dual::cst(y.ln()) - m.clone().ln()).scale(1.0 / sigma)
                    }
                    ErrorModel::MeanVariance => {
                        return Err(Error::invalid("mean-variance likelihood is not least squares"));
                    }
                };
                res.push(r);
            }
        }
        let j = jacobian_from_duals(&res, nf)?;
        Ok((res.iter().map(|r| r.value).collect(), j))
    }

    /// Maximise over the coordinates not fixed in `fixed`, starting at `x0`.
    pub(crate) fn maximize(&self, fixed: &[Option<f64>], x0: &[f64], opts: &OptimOptions) -> Result<Inner> {
        let n = self.dim();
        let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
        let bounds = self.coordinate_bounds();
        let log_bounds = Bounds {
            lower: free.iter().map(|&i| bounds.lower[i].ln()).collect(),
            upper: free.iter().map(|&i| bounds.upper[i].ln()).collect(),
        };
        let assemble = |y: &[f64]| -> Vec<f64> {
            let mut x: Vec<f64> = (0..n).map(|i| fixed[i].unwrap_or(0.0)).collect();
            for (k, &i) in free.iter().enumerate() {
                x[i] = y[k].exp();
            }
            x
        };
        let mut y0: Vec<f64> = free.iter().map(|&i| x0[i].ln()).collect();
        log_bounds.clamp(&mut y0);

        let run = minimize_box(|y: &[f64]| -self.objective(&assemble(y)), &y0, &log_bounds, opts)?;
        let mut x = assemble(&run.argmin);
        let mut best = -run.fmin;
        if best.is_finite() && !free.is_empty() && !matches!(self.model.error_model, ErrorModel::MeanVariance) {
            let (y, v) = self.polish(&run.argmin, best, &free, &log_bounds, &assemble);
            if v >= best {
                x = assemble(&y);
                best = v;
            }
        }
        Ok(Inner {
            x,
            loglik: best,
            converged: run.converged && best.is_finite(),
            n_evals: run.n_evals,
        })
    }

    /// Damped Gauss-Newton refinement in log coordinates. Nelder-Mead stops
    /// on function-value spread, which leaves weakly curved directions
    /// resolved only to about the square root of that tolerance.
    fn polish(
        &self,
        y0: &[f64],
        f0: f64,
        free: &[usize],
        log_bounds: &Bounds,
        assemble: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> (Vec<f64>, f64) {
        let mut y = y0.to_vec();
        let mut ll = f0;
        let mut lambda = 1e-3;
        'outer: for _ in 0..100 {
            let x = assemble(&y);
            let Ok((r, j)) = self.residual_jacobian(&x, free) else {
                break;
            };
            let g = j.transpose() * nalgebra::DVector::from_vec(r);
            let a = j.transpose() * &j;
            let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
            if !(scale > 0.0) {
                break;
            }
            loop {
                let mut m = a.clone();
                for i in 0..m.nrows() {
                    m[(i, i)] += lambda * (a[(i, i)] + 1e-12 * scale);
                }
                let Some(step) = m.lu().solve(&(-&g)) else {
                    lambda *= 10.0;
                    if lambda > 1e12 {
                        break 'outer;
                    }
                    continue;
                };
                let mut y_new: Vec<f64> = y.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                log_bounds.clamp(&mut y_new);
                let ll_new = self.objective(&assemble(&y_new));
                let moved = y_new.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if ll_new >= ll - 1e-15 * (1.0 + ll.abs()) {
                    y = y_new;
                    ll = ll.max(ll_new);
                    lambda = (lambda / 3.0).max(1e-12);
                    if moved < 1e-13 {
                        break 'outer;
                    }
                    break;
                }
                lambda *= 4.0;
                if lambda > 1e12 {
                    break 'outer;
                }
            }
        }
        (y, ll)
    }
}

pub(crate) struct Inner {
    pub x: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub n_evals: usize,
}

fn loglik_from_prediction(error: &ErrorModel, pred: &[f64], data: &Dataset) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    match *error {
        ErrorModel::NormalAdditive { sigma } => {
            let c = -half_log_2pi - sigma.ln();
            let inv = 0.5 / (sigma * sigma);
            data.replicates()
                .flat_map(|rep| rep.iter().zip(pred))
                .map(|(y, m)| c - (y - m) * (y - m) * inv)
                .sum()
        }
        ErrorModel::LogNormal { sigma } => {
            let c = -half_log_2pi - sigma.ln();
            let inv = 0.5 / (sigma * sigma);
            let mut total = 0.0;
            for rep in data.replicates() {
                for (y, m) in rep.iter().zip(pred) {
                    if !(*y > 0.0 && *m > 0.0) {
                        return f64::NEG_INFINITY;
                    }
                    let d = y.ln() - m.ln();
                    total += c - d * d * inv;
                }
            }
            total
        }
        ErrorModel::MeanVariance => {
            let (mu, var) = (pred[0], pred[1]);
            if !(var > 0.0) {
                return f64::NEG_INFINITY;
            }
            let c = -half_log_2pi - 0.5 * var.ln();
            data.observations
                .iter()
                .map(|y| c - (y - mu) * (y - mu) / (2.0 * var))
                .sum()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    /// Active coordinates.
    pub theta_hat: Vec<f64>,
    pub theta_original: Vec<f64>,
    pub loglik_max: f64,
    pub at_bound: Vec<bool>,
    pub n_evals: usize,
    pub converged: bool,
}

/// Maximum likelihood by multistart Nelder-Mead in log coordinates, refined
/// by Gauss-Newton for least-squares error models.
pub fn mle(problem: &LikelihoodProblem, opts: &OptimOptions) -> Result<MleResult> {
    let bounds = problem.coordinate_bounds();
    // geometric centre of the original box, always feasible
    let centre: Vec<f64> = problem
        .model
        .bounds
        .lower
        .iter()
        .zip(&problem.model.bounds.upper)
        .map(|(l, u)| (l * u).sqrt())
        .collect();
    let x0 = problem.to_active(&centre);
    let fixed = vec![None; problem.dim()];
    let inner = problem.maximize(&fixed, &x0, opts)?;
    if !inner.loglik.is_finite() {
        return Err(Error::Optimization(format!(
            "{}: no start produced a finite log-likelihood",
            problem.model.name
        )));
    }
    let theta_original = problem
        .to_original(&inner.x)
        .ok_or_else(|| Error::Optimization("maximiser maps outside the parameter box".into()))?;
    let at_bound = inner
        .x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let l = v.ln();
            (l - bounds.lower[i].ln()).abs() < 1e-6 || (l - bounds.upper[i].ln()).abs() < 1e-6
        })
        .collect();
    Ok(MleResult {
        theta_hat: inner.x,
        theta_original,
        loglik_max: inner.loglik,
        at_bound,
        n_evals: inner.n_evals,
        converged: inner.converged,
    })
}

/// Chi-square cumulative distribution function.
pub fn chi_square_cdf(q: f64, df: u32) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    statrs::function::gamma::checked_gamma_lr(0.5 * df as f64, 0.5 * q).unwrap_or(f64::NAN)
}

/// Chi-square quantile by bisection on the CDF.
pub fn chi_square_quantile(level: f64, df: u32) -> Result<f64> {
    if df == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("need df >= 1 and 0 < level < 1, got df={df}, level={level}")));
    }
    let mut hi = df as f64 + 10.0;
    while chi_square_cdf(hi, df) < level {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Optimization("chi-square quantile bracket diverged".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_cdf(mid, df) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Relative-likelihood cutoff `exp(-q / 2)` for a `level` confidence set.
pub fn confidence_threshold(df: u32, level: f64) -> Result<f64> {
    if !(1..=3).contains(&df) {
        return Err(Error::invalid(format!("df must be 1, 2 or 3, got {df}")));
    }
    Ok((-0.5 * chi_square_quantile(level, df)?).exp())
}
