//! Bounded Nelder–Mead with Latin-hypercube multistart.
//!
//! Bounds are enforced by clamping every trial point into the box. After the
//! simplex collapses the search restarts from the (clamped) best point with a
//! fresh simplex, which recovers progress lost to clamping against a face.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scalar::Real;
use crate::error::{Error, Result};

/// Axis-aligned box `lower <= x <= upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds<R> {
    pub lower: Vec<R>,
    pub upper: Vec<R>,
}

impl<R: Real> BoxBounds<R> {
    pub fn new(lower: Vec<R>, upper: Vec<R>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid("bounds: lower and upper differ in length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::invalid("bounds: need finite lower < upper in every coordinate"));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[R]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v >= l && v <= u)
    }

    pub fn clamp(&self, x: &mut [R]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.max(*l).min(*u);
        }
    }

    pub fn width(&self, i: usize) -> R {
        self.upper[i] - self.lower[i]
    }

    /// The sub-box over the given coordinates.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            lower: idx.iter().map(|&i| self.lower[i]).collect(),
            upper: idx.iter().map(|&i| self.upper[i]).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Self {
            lower: self.lower.iter().map(|&x| f(x)).collect(),
            upper: self.upper.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `n` points, one per stratum in every coordinate.
    pub fn latin_hypercube(&self, n: usize, rng: &mut impl Rng) -> Vec<Vec<R>> {
        let d = self.dim();
        let mut points = vec![vec![R::zero(); d]; n];
        for j in 0..d {
            let mut strata: Vec<usize> = (0..n).collect();
            // Fisher–Yates
            for i in (1..n).rev() {
                let k = rng.random_range(0..=i);
                strata.swap(i, k);
            }
            for (i, p) in points.iter_mut().enumerate() {
                let u: f64 = (strata[i] as f64 + rng.random::<f64>()) / n as f64;
                p[j] = self.lower[j] + self.width(j) * R::cst(u);
            }
        }
        points
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimOptions {
    /// Stop when the simplex function-value spread drops below this.
    pub f_tol: f64,
    /// Evaluation budget per start.
    pub max_evals: usize,
    /// Latin-hypercube starts in addition to the supplied point.
    pub n_starts: usize,
    /// Restarts from the best point after the simplex has converged.
    pub max_restarts: usize,
    /// Initial simplex edge as a fraction of the box width.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-10,
            max_evals: 5000,
            n_starts: 5,
            max_restarts: 3,
            initial_step: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimResult<R> {
    pub argmin: Vec<R>,
    pub fmin: R,
    pub n_evals: usize,
    pub converged: bool,
}

/// Minimise `f` over `bounds` starting from `x0` and from
/// `opts.n_starts` Latin-hypercube points; returns the best run.
///
/// Non-finite objective values are treated as `+inf`.
pub fn minimize_box<R, F>(f: F, x0: &[R], bounds: &BoxBounds<R>, opts: &OptimOptions) -> Result<OptimResult<R>>
where
    R: Real,
    F: Fn(&[R]) -> R,
{
    if !bounds.contains(x0) {
        return Err(Error::OutOfBounds(format!(
            "initial point {x0:?} not inside [{:?}, {:?}]",
            bounds.lower, bounds.upper
        )));
    }
    let objective = |x: &[R]| {
        let v = f(x);
        if v.is_nan() {
            R::infinity()
        } else {
            v
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![x0.to_vec()];
    if opts.n_starts > 0 {
        starts.extend(bounds.latin_hypercube(opts.n_starts, &mut rng));
    }

    let mut best: Option<OptimResult<R>> = None;
    let mut total_evals = 0;
    for start in starts {
        let run = nelder_mead_restarted(&objective, start, bounds, opts);
        total_evals += run.n_evals;
        // Strict improvement only, so ties keep the earliest start.
        if best.as_ref().is_none_or(|b| run.fmin < b.fmin) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one start");
    best.n_evals = total_evals;
    Ok(best)
}

fn nelder_mead_restarted<R, F>(f: &F, x0: Vec<R>, bounds: &BoxBounds<R>, opts: &OptimOptions) -> OptimResult<R>
where
    R: Real,
    F: Fn(&[R]) -> R,
{
    let mut run = nelder_mead(f, x0, bounds, opts, opts.max_evals);
    for _ in 0..opts.max_restarts {
        if !run.fmin.is_finite() || run.n_evals >= opts.max_evals {
            break;
        }
        let budget = opts.max_evals - run.n_evals;
        let next = nelder_mead(f, run.argmin.clone(), bounds, opts, budget);
        let improvement = run.fmin - next.fmin;
        let evals = run.n_evals + next.n_evals;
        let improved = next.fmin < run.fmin;
        if improved {
            run = OptimResult {
                n_evals: evals,
                ..next
            };
        } else {
            run.n_evals = evals;
        }
        if !(improvement > R::cst(opts.f_tol)) {
            break;
        }
    }
    run
}

fn nelder_mead<R, F>(f: &F, mut x0: Vec<R>, bounds: &BoxBounds<R>, opts: &OptimOptions, budget: usize) -> OptimResult<R>
where
    R: Real,
    F: Fn(&[R]) -> R,
{
    let n = x0.len();
    bounds.clamp(&mut x0);
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[R]| {
        evals.set(evals.get() + 1);
        f(x)
    };

    if n == 0 {
        let v = eval(&x0);
        return OptimResult {
            argmin: x0,
            fmin: v,
            n_evals: 1,
            converged: true,
        };
    }

    let (alpha, gamma, rho, sigma) = (R::one(), R::cst(2.0), R::cst(0.5), R::cst(0.5));
    let mut simplex = Vec::with_capacity(n + 1);
    simplex.push(x0.clone());
    for i in 0..n {
        let mut v = x0.clone();
        let step = bounds.width(i) * R::cst(opts.initial_step);
        v[i] = if v[i] + step <= bounds.upper[i] { v[i] + step } else { v[i] - step };
        bounds.clamp(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<R> = simplex.iter().map(|v| eval(v)).collect();
    let mut converged = false;

    let trial = |centroid: &[R], toward: &[R], coef: R| -> Vec<R> {
        let mut p: Vec<R> = centroid
            .iter()
            .zip(toward)
            .map(|(&c, &w)| c + coef * (w - c))
            .collect();
        bounds.clamp(&mut p);
        p
    };

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("no NaN"));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let (lo, hi) = (values[0], values[n]);
        if hi.is_finite() && hi - lo < R::cst(opts.f_tol) {
            converged = true;
            break;
        }
        if !lo.is_finite() {
            // Entire simplex infeasible; nothing to follow.
            break;
        }
        if evals.get() >= budget {
            break;
        }

        let mut centroid = vec![R::zero(); n];
        for v in &simplex[..n] {
            for (c, &x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        let inv = R::one() / R::cst(n as f64);
        centroid.iter_mut().for_each(|c| *c *= inv);

        let reflected = trial(&centroid, &simplex[n], -alpha);
        let f_r = eval(&reflected);
        if f_r < values[0] {
            let expanded = trial(&centroid, &simplex[n], -gamma);
            let f_e = eval(&expanded);
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        let (contracted, f_c) = if f_r < values[n] {
            let c = trial(&centroid, &reflected, rho);
            let v = eval(&c);
            (c, v)
        } else {
            let c = trial(&centroid, &simplex[n], rho);
            let v = eval(&c);
            (c, v)
        };
        if f_c < values[n].min(f_r) {
            simplex[n] = contracted;
            values[n] = f_c;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            let shrunk = trial(&best, &simplex[i], sigma);
            values[i] = eval(&shrunk);
            simplex[i] = shrunk;
        }
    }

    OptimResult {
        argmin: simplex[0].clone(),
        fmin: values[0],
        n_evals: evals.get(),
        converged,
    }
}
