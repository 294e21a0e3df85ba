//! Profile-wise prediction bands: push every parameter point of a profile's
//! confidence set through the model and take the pointwise envelope.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{confidence_threshold, LikelihoodProblem, MleResult};
use crate::profile::ProfileResult;
use crate::table::Table;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionBand {
    /// Fine-grid abscissae, or output indices for grid-free models.
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mle_trajectory: Vec<f64>,
    pub source: String,
    pub df_used: u32,
    /// Profile nodes that contributed.
    pub n_points: usize,
}

impl PredictionBand {
    pub fn width(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }

    /// `self` contains `other` pointwise, up to `tol`.
    pub fn contains(&self, other: &PredictionBand, tol: f64) -> bool {
        self.grid.len() == other.grid.len()
            && self.lower.iter().zip(&other.lower).all(|(a, b)| *a <= b + tol)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| *a >= b - tol)
    }

    pub fn table(&self) -> Table {
        Table {
            headers: ["x", "lower", "mle", "upper"].map(String::from).to_vec(),
            rows: (0..self.grid.len())
                .map(|i| vec![self.grid[i], self.lower[i], self.mle_trajectory[i], self.upper[i]])
                .collect(),
        }
    }
}

fn output_grid(problem: &LikelihoodProblem, len: usize) -> Vec<f64> {
    if problem.model.is_grid_free() {
        (0..len).map(|i| i as f64).collect()
    } else {
        problem.model.fine_grid.clone()
    }
}

/// Envelope of the mean trajectory over the profile nodes whose relative
/// likelihood passes the `df` threshold at `level`. The MLE trajectory is
/// always part of the envelope.
pub fn prediction_band(
    problem: &LikelihoodProblem,
    profile: &ProfileResult,
    mle: &MleResult,
    df: u32,
    level: f64,
) -> Result<PredictionBand> {
    if profile.model != problem.model.name || profile.coordinate_names != problem.coordinate_names() {
        return Err(Error::invalid(format!(
            "profile of {} ({:?}) does not belong to this problem",
            profile.model, profile.coordinate_names
        )));
    }
    let threshold = confidence_threshold(df, level)?;
    let nodes = profile.crossing_set_at(threshold);
    if nodes.is_empty() {
        return Err(Error::EmptyCrossingSet { df, level });
    }
    let trajectories: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&k| {
            let x = &profile.points[k].argmax;
            let theta = problem
                .to_original(x)
                .ok_or_else(|| Error::OutOfBounds(format!("profile node {x:?} maps outside the box")))?;
            problem.model.predict_fine(&theta)
        })
        .collect::<Result<_>>()?;

    let mle_trajectory = problem.model.predict_fine(&mle.theta_original)?;
    let mut lower = mle_trajectory.clone();
    let mut upper = mle_trajectory.clone();
    for t in &trajectories {
        for (i, v) in t.iter().enumerate() {
            lower[i] = lower[i].min(*v);
            upper[i] = upper[i].max(*v);
        }
    }
    Ok(PredictionBand {
        grid: output_grid(problem, mle_trajectory.len()),
        lower,
        upper,
        mle_trajectory,
        source: format!("profile:{}", profile.target_names().join(",")),
        df_used: df,
        n_points: nodes.len(),
    })
}

/// Pointwise union of bands on a shared grid.
pub fn band_union(bands: &[PredictionBand]) -> Result<PredictionBand> {
    let first = bands.first().ok_or_else(|| Error::invalid("band union of nothing"))?;
    let mut out = first.clone();
    for b in &bands[1..] {
        if b.grid != first.grid {
            return Err(Error::invalid("bands are on different grids"));
        }
        for i in 0..out.grid.len() {
            out.lower[i] = out.lower[i].min(b.lower[i]);
            out.upper[i] = out.upper[i].max(b.upper[i]);
        }
        out.n_points += b.n_points;
        out.df_used = out.df_used.max(b.df_used);
    }
    out.source = "union".into();
    Ok(out)
}
