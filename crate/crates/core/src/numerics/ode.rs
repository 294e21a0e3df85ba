//! Fixed-step classic Runge–Kutta integration, generic over the state scalar
//! so parameter sensitivities can be carried through the solve.

use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Right-hand side `f(t, state, params) -> d state / dt`.
pub type Rhs<'a, S> = dyn Fn(f64, &[S], &[S]) -> Vec<S> + Send + Sync + 'a;

pub struct OdeProblem<'a, S> {
    pub rhs: Box<Rhs<'a, S>>,
    pub t_span: (f64, f64),
    pub initial_state: Vec<S>,
    pub n_steps: usize,
    /// RK4 steps taken inside each output interval.
    pub substeps: usize,
}

impl<'a, S: Scalar> OdeProblem<'a, S> {
    pub fn new<F>(rhs: F, t_span: (f64, f64), initial_state: Vec<S>, n_steps: usize) -> Result<Self>
    where
        F: Fn(f64, &[S], &[S]) -> Vec<S> + Send + Sync + 'a,
    {
        if !(t_span.1 > t_span.0) {
            return Err(Error::invalid(format!(
                "t_span must be increasing, got [{}, {}]",
                t_span.0, t_span.1
            )));
        }
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        Ok(Self {
            rhs: Box::new(rhs),
            t_span,
            initial_state,
            n_steps,
            substeps: 1,
        })
    }

    pub fn with_substeps(mut self, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        self.substeps = substeps;
        Ok(self)
    }

    pub fn step_size(&self) -> f64 {
        (self.t_span.1 - self.t_span.0) / self.n_steps as f64
    }

    /// The `n_steps + 1` output times, endpoints included.
    pub fn output_grid(&self) -> Vec<f64> {
        uniform_grid(self.t_span.0, self.t_span.1, self.n_steps + 1)
    }
}

/// `n` equally spaced points from `a` to `b` inclusive; endpoints are exact.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { b } else { a + h * i as f64 })
                .collect()
        }
    }
}

fn axpy<S: Scalar>(x: &[S], h: f64, k: &[S]) -> Vec<S> {
    x.iter()
        .zip(k)
        .map(|(xi, ki)| xi.clone() + ki.clone().scale(h))
        .collect()
}

fn rk4_step<S: Scalar>(f: &Rhs<'_, S>, t: f64, h: f64, x: Vec<S>, params: &[S]) -> Vec<S> {
    let k1 = f(t, &x, params);
    let k2 = f(t + 0.5 * h, &axpy(&x, 0.5 * h, &k1), params);
    let k3 = f(t + 0.5 * h, &axpy(&x, 0.5 * h, &k2), params);
    let k4 = f(t + h, &axpy(&x, h, &k3), params);
    x.into_iter()
        .zip(k1)
        .zip(k2)
        .zip(k3)
        .zip(k4)
        .map(|((((xi, a), b), c), d)| {
            let incr = a + (b + c).scale(2.0) + d;
            xi + incr.scale(h / 6.0)
        })
        .collect()
}

/// Integrate with RK4 and return the state at every output time
/// (`n_steps + 1` rows). Each output interval is split into `substeps`
/// equal steps.
pub fn solve_ode<S: Scalar>(prob: &OdeProblem<'_, S>, params: &[S]) -> Result<Vec<Vec<S>>> {
    let h = prob.step_size();
    let hs = h / prob.substeps as f64;
    let mut out = Vec::with_capacity(prob.n_steps + 1);
    let mut x = prob.initial_state.clone();
    out.push(x.clone());

    for step in 1..=prob.n_steps {
        let t0 = prob.t_span.0 + h * (step - 1) as f64;
        for j in 0..prob.substeps {
            x = rk4_step(&*prob.rhs, t0 + hs * j as f64, hs, x, params);
        }
        if !x.iter().all(Scalar::is_finite) {
            return Err(Error::Integration { step });
        }
        out.push(x.clone());
    }
    Ok(out)
}
