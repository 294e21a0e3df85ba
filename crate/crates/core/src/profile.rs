//! Profile likelihoods over one or two active coordinates.
//!
//! Each grid node fixes the target coordinate(s) and maximises over the rest.
//! Nodes are visited outward from the node nearest the MLE and each is warm
//! started from its already-solved neighbour, which keeps the inner optimiser
//! on flat ridges that cold starts tend to lose.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{confidence_threshold, LikelihoodProblem, MleResult};
use crate::numerics::OptimOptions;
use crate::table::Table;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Linear,
    /// Geometric spacing; the natural choice for positive scale parameters.
    #[default]
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridRange {
    Explicit {
        lo: f64,
        hi: f64,
    },
    /// The full coordinate box.
    Bounds,
    /// The segment of the target axis through the MLE, other coordinates held
    /// at their MLE values, along which the original parameters stay in the
    /// box. Equals `Bounds` in original coordinates.
    #[default]
    ThroughMle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub range: GridRange,
    pub n_points: usize,
    pub spacing: Spacing,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            range: GridRange::ThroughMle,
            n_points: 50,
            spacing: Spacing::Log,
        }
    }
}

impl GridSpec {
    pub fn with_points(n_points: usize) -> Self {
        Self {
            n_points,
            ..Self::default()
        }
    }

    /// `(lo, hi)` for `target` in the problem's active coordinates.
    pub fn interval(&self, problem: &LikelihoodProblem, target: usize, mle: &MleResult) -> Result<(f64, f64)> {
        let b = problem.coordinate_bounds();
        if target >= b.dim() {
            return Err(Error::invalid(format!("target index {target} out of range for {} coordinates", b.dim())));
        }
        let (lo, hi) = match self.range {
            GridRange::Explicit { lo, hi } => {
                let tol = 1e-12 * b.upper[target];
                if !(lo < hi) || lo < b.lower[target] - tol || hi > b.upper[target] + tol {
                    return Err(Error::invalid(format!(
                        "grid [{lo}, {hi}] for {} must be increasing and inside [{}, {}]",
                        problem.coordinate_names()[target],
                        b.lower[target],
                        b.upper[target]
                    )));
                }
                (lo, hi)
            }
            GridRange::Bounds => (b.lower[target], b.upper[target]),
            GridRange::ThroughMle => through_mle(problem, target, mle)?,
        };
        if self.spacing == Spacing::Log && !(lo > 0.0) {
            return Err(Error::invalid("log-spaced grids need a positive lower end"));
        }
        Ok((lo, hi))
    }

    pub fn nodes(&self, problem: &LikelihoodProblem, target: usize, mle: &MleResult) -> Result<Vec<f64>> {
        if self.n_points < 3 {
            return Err(Error::invalid(format!("profile grids need at least 3 points, got {}", self.n_points)));
        }
        let (lo, hi) = self.interval(problem, target, mle)?;
        Ok(spaced(lo, hi, self.n_points, self.spacing))
    }
}

fn spaced(lo: f64, hi: f64, n: usize, spacing: Spacing) -> Vec<f64> {
    match spacing {
        Spacing::Linear => crate::numerics::uniform_grid(lo, hi, n),
        Spacing::Log => {
            let mut g: Vec<f64> = crate::numerics::uniform_grid(lo.ln(), hi.ln(), n)
                .into_iter()
                .map(f64::exp)
                .collect();
            g[0] = lo;
            g[n - 1] = hi;
            g
        }
    }
}

fn scale(spacing: Spacing, v: f64) -> f64 {
    match spacing {
        Spacing::Linear => v,
        Spacing::Log => v.ln(),
    }
}

fn through_mle(problem: &LikelihoodProblem, target: usize, mle: &MleResult) -> Result<(f64, f64)> {
    let b = problem.coordinate_bounds();
    let Some(coords) = &problem.coordinates else {
        return Ok((b.lower[target], b.upper[target]));
    };
    let x_t = mle.theta_hat[target];
    let log_theta: Vec<f64> = mle.theta_original.iter().map(|t| t.ln()).collect();
    let (mut s_lo, mut s_hi) = ((b.lower[target] / x_t).ln(), (b.upper[target] / x_t).ln());
    let mb = &problem.model.bounds;
    for (i, lt) in log_theta.iter().enumerate() {
        let c = coords.inverse_exponents[(i, target)];
        if c.abs() < 1e-14 {
            continue;
        }
        let a = (mb.lower[i].ln() - lt) / c;
        let z = (mb.upper[i].ln() - lt) / c;
        s_lo = s_lo.max(a.min(z));
        s_hi = s_hi.min(a.max(z));
    }
    if !(s_lo < s_hi) {
        return Err(Error::invalid(format!(
            "no feasible segment through the MLE along {}",
            problem.coordinate_names()[target]
        )));
    }
    Ok((x_t * s_lo.exp(), x_t * s_hi.exp()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileOptions {
    /// Degrees of freedom for the threshold; 1 for 1-D and 2 for 2-D when unset.
    pub df: Option<u32>,
    pub level: f64,
    pub optim: OptimOptions,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            df: None,
            level: 0.95,
            optim: OptimOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub target_values: Vec<f64>,
    pub loglik: f64,
    pub normalized: f64,
    /// Full maximiser in active coordinates, targets included.
    pub argmax: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileResult {
    pub model: String,
    pub coordinate_names: Vec<String>,
    pub reparameterised: bool,
    pub targets: Vec<usize>,
    pub axes: Vec<Vec<f64>>,
    pub spacing: Vec<Spacing>,
    /// Row-major over the axes: node `(i, j)` is `points[i * axes[1].len() + j]`.
    pub points: Vec<ProfilePoint>,
    /// Largest profile log-likelihood on the grid.
    pub loglik_max: f64,
    pub df: u32,
    pub level: f64,
    pub threshold: f64,
}

impl ProfileResult {
    pub fn target_names(&self) -> Vec<String> {
        self.targets.iter().map(|&t| self.coordinate_names[t].clone()).collect()
    }

    pub fn normalized(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.normalized).collect()
    }

    /// Node indices in the confidence set.
    pub fn crossing_set(&self) -> Vec<usize> {
        self.crossing_set_at(self.threshold)
    }

    pub fn crossing_set_at(&self, threshold: f64) -> Vec<usize> {
        (0..self.points.len())
            .filter(|&i| self.points[i].normalized >= threshold)
            .collect()
    }

    /// Maximal runs of consecutive 1-D nodes in the confidence set, as
    /// `(first value, last value)`.
    pub fn crossing_intervals(&self) -> Vec<(f64, f64)> {
        let axis = &self.axes[0];
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for (i, p) in self.points.iter().enumerate() {
            let inside = p.normalized >= self.threshold;
            match (inside, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push((axis[s], axis[i - 1]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((axis[s], axis[self.points.len() - 1]));
        }
        out
    }

    /// 1-D node indices whose grid-scale position is at least `margin` (a
    /// fraction of the grid span) away from both ends.
    pub fn interior_indices(&self, margin: f64) -> Vec<usize> {
        let axis = &self.axes[0];
        let sp = self.spacing[0];
        let (a, b) = (scale(sp, axis[0]), scale(sp, axis[axis.len() - 1]));
        let w = b - a;
        (0..axis.len())
            .filter(|&i| {
                let g = scale(sp, axis[i]);
                g >= a + margin * w - 1e-12 * w.abs() && g <= b - margin * w + 1e-12 * w.abs()
            })
            .collect()
    }

    pub fn table(&self) -> Table {
        let mut headers = self.target_names();
        headers.extend(["loglik", "normalized", "in_set", "converged"].map(String::from));
        headers.extend(self.coordinate_names.iter().map(|n| format!("argmax_{n}")));
        let rows = self
            .points
            .iter()
            .map(|p| {
                let mut r = p.target_values.clone();
                r.push(p.loglik);
                r.push(p.normalized);
                r.push(f64::from(u8::from(p.normalized >= self.threshold)));
                r.push(f64::from(u8::from(p.converged)));
                r.extend(&p.argmax);
                r
            })
            .collect();
        Table { headers, rows }
    }
}

fn nearest(axis: &[f64], spacing: Spacing, v: f64) -> usize {
    let g = scale(spacing, v);
    (0..axis.len())
        .min_by(|&a, &b| {
            let da = (scale(spacing, axis[a]) - g).abs();
            let db = (scale(spacing, axis[b]) - g).abs();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0)
}

fn solve_node(
    problem: &LikelihoodProblem,
    targets: &[usize],
    values: &[f64],
    warm: &[f64],
    opts: &OptimOptions,
) -> ProfilePoint {
    let n = problem.dim();
    let mut fixed = vec![None; n];
    let mut x0 = warm.to_vec();
    for (&t, &v) in targets.iter().zip(values) {
        fixed[t] = Some(v);
        x0[t] = v;
    }
    match problem.maximize(&fixed, &x0, opts) {
        Ok(inner) => ProfilePoint {
            target_values: values.to_vec(),
            loglik: inner.loglik,
            normalized: 0.0,
            argmax: inner.x,
            converged: inner.converged,
        },
        Err(_) => ProfilePoint {
            target_values: values.to_vec(),
            loglik: f64::NEG_INFINITY,
            normalized: 0.0,
            argmax: x0,
            converged: false,
        },
    }
}

/// Solve the nodes of one line outward from `start`, which is solved from
/// `warm`. `value_at(k)` gives the target values of node `k`.
fn sweep_line(
    problem: &LikelihoodProblem,
    targets: &[usize],
    len: usize,
    start: usize,
    warm: &[f64],
    value_at: &(dyn Fn(usize) -> Vec<f64> + Sync),
    opts: &OptimOptions,
) -> Vec<ProfilePoint> {
    let centre = solve_node(problem, targets, &value_at(start), warm, opts);
    let chain = |range: Box<dyn Iterator<Item = usize> + Send>| -> Vec<(usize, ProfilePoint)> {
        let mut prev = centre.argmax.clone();
        let mut out = Vec::new();
        for k in range {
            let p = solve_node(problem, targets, &value_at(k), &prev, opts);
            if p.loglik.is_finite() {
                prev = p.argmax.clone();
            }
            out.push((k, p));
        }
        out
    };
    let (up, down) = rayon::join(
        || chain(Box::new(start + 1..len)),
        || chain(Box::new((0..start).rev())),
    );
    let mut slots: Vec<Option<ProfilePoint>> = vec![None; len];
    slots[start] = Some(centre);
    for (k, p) in up.into_iter().chain(down) {
        slots[k] = Some(p);
    }
    slots.into_iter().map(|p| p.expect("every node solved")).collect()
}

fn finish(
    problem: &LikelihoodProblem,
    targets: Vec<usize>,
    axes: Vec<Vec<f64>>,
    spacing: Vec<Spacing>,
    mut points: Vec<ProfilePoint>,
    df: u32,
    level: f64,
) -> Result<ProfileResult> {
    let threshold = confidence_threshold(df, level)?;
    let loglik_max = points
        .iter()
        .map(|p| p.loglik)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !loglik_max.is_finite() {
        return Err(Error::Optimization(format!(
            "{}: every profile node failed",
            problem.model.name
        )));
    }
    for p in &mut points {
        p.normalized = if p.loglik.is_finite() {
            (p.loglik - loglik_max).exp()
        } else {
            0.0
        };
    }
    Ok(ProfileResult {
        model: problem.model.name.clone(),
        coordinate_names: problem.coordinate_names(),
        reparameterised: problem.coordinates.is_some(),
        targets,
        axes,
        spacing,
        points,
        loglik_max,
        df,
        level,
        threshold,
    })
}

pub fn profile_1d(
    problem: &LikelihoodProblem,
    target: usize,
    grid: &GridSpec,
    mle: &MleResult,
    opts: &ProfileOptions,
) -> Result<ProfileResult> {
    let axis = grid.nodes(problem, target, mle)?;
    let start = nearest(&axis, grid.spacing, mle.theta_hat[target]);
    let value_at = |k: usize| vec![axis[k]];
    let points = sweep_line(problem, &[target], axis.len(), start, &mle.theta_hat, &value_at, &opts.optim);
    finish(
        problem,
        vec![target],
        vec![axis],
        vec![grid.spacing],
        points,
        opts.df.unwrap_or(1),
        opts.level,
    )
}

/// Joint profile over two coordinates. With exactly two coordinates this is
/// the plain likelihood on the grid.
pub fn profile_2d(
    problem: &LikelihoodProblem,
    targets: [usize; 2],
    grids: [&GridSpec; 2],
    mle: &MleResult,
    opts: &ProfileOptions,
) -> Result<ProfileResult> {
    if targets[0] == targets[1] {
        return Err(Error::invalid("2-D profile needs two distinct coordinates"));
    }
    let a0 = grids[0].nodes(problem, targets[0], mle)?;
    let a1 = grids[1].nodes(problem, targets[1], mle)?;
    let (n0, n1) = (a0.len(), a1.len());
    let i0 = nearest(&a0, grids[0].spacing, mle.theta_hat[targets[0]]);
    let j0 = nearest(&a1, grids[1].spacing, mle.theta_hat[targets[1]]);

    // seed column j0, then every row from its seed, rows in parallel
    let column = sweep_line(
        problem,
        &targets,
        n0,
        i0,
        &mle.theta_hat,
        &|i| vec![a0[i], a1[j0]],
        &opts.optim,
    );
    let rows: Vec<Vec<ProfilePoint>> = (0..n0)
        .into_par_iter()
        .map(|i| {
            let seed = &column[i];
            let warm = if seed.loglik.is_finite() {
                seed.argmax.clone()
            } else {
                mle.theta_hat.clone()
            };
            let mut row = sweep_line(problem, &targets, n1, j0, &warm, &|j| vec![a0[i], a1[j]], &opts.optim);
            // keep the seed itself when the row re-solve did worse
            if seed.loglik > row[j0].loglik {
                row[j0] = seed.clone();
            }
            row
        })
        .collect();
    finish(
        problem,
        targets.to_vec(),
        vec![a0, a1],
        vec![grids[0].spacing, grids[1].spacing],
        rows.into_iter().flatten().collect(),
        opts.df.unwrap_or(2),
        opts.level,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    TwoSided,
    OneSided,
    /// The confidence set reaches both ends of the grid.
    Flat,
    /// The maximum sits on the grid edge; no ratio.
    BoundLimited,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SidednessReport {
    pub status: Sidedness,
    /// Grid-scale distance from the maximum to the threshold crossing (or to
    /// the grid end when there is no crossing).
    pub left_extent: f64,
    pub right_extent: f64,
    pub left_crosses: bool,
    pub right_crosses: bool,
    pub ratio: Option<f64>,
    pub ratio_limit: f64,
}

impl SidednessReport {
    pub fn is_one_sided(&self) -> bool {
        self.status == Sidedness::OneSided
    }
}

/// Compare how far the confidence set extends on each side of the maximum.
pub fn one_sidedness(profile: &ProfileResult, ratio_limit: f64) -> Result<SidednessReport> {
    if profile.targets.len() != 1 {
        return Err(Error::invalid("one-sidedness needs a 1-D profile"));
    }
    let axis = &profile.axes[0];
    let sp = profile.spacing[0];
    let g: Vec<f64> = axis.iter().map(|&v| scale(sp, v)).collect();
    let nz = profile.normalized();
    let thr = profile.threshold;
    let n = nz.len();
    let k = (0..n)
        .max_by(|&a, &b| nz[a].partial_cmp(&nz[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);

    let crossing = |step: isize| -> (f64, bool) {
        let mut j = k as isize;
        loop {
            let next = j + step;
            if next < 0 || next >= n as isize {
                return ((g[j as usize] - g[k]).abs(), false);
            }
            let (a, b) = (j as usize, next as usize);
            if nz[b] < thr {
                let t = (nz[a] - thr) / (nz[a] - nz[b]);
                let pos = g[a] + t * (g[b] - g[a]);
                return ((pos - g[k]).abs(), true);
            }
            j = next;
        }
    };
    let (left_extent, left_crosses) = crossing(-1);
    let (right_extent, right_crosses) = crossing(1);

    let (status, ratio) = if !left_crosses && !right_crosses {
        (Sidedness::Flat, None)
    } else if k == 0 || k == n - 1 {
        (Sidedness::BoundLimited, None)
    } else if left_crosses != right_crosses {
        (Sidedness::OneSided, None)
    } else {
        let (lo, hi) = (left_extent.min(right_extent), left_extent.max(right_extent));
        let r = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        let s = if r > ratio_limit {
            Sidedness::OneSided
        } else {
            Sidedness::TwoSided
        };
        (s, Some(r))
    };
    Ok(SidednessReport {
        status,
        left_extent,
        right_extent,
        left_crosses,
        right_crosses,
        ratio,
        ratio_limit,
    })
}
