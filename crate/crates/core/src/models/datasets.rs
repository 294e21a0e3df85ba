//! Published data realisations and seeded synthetic data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{Dataset, ErrorModel, ModelSpec};

/// Seed used for synthetic data when none is given.
pub const DEFAULT_SEED: u64 = 20_240_601;

pub const STAT_DATA: [f64; 10] = [21.9, 22.3, 12.8, 16.4, 16.4, 20.3, 16.2, 20.0, 19.7, 24.4];

pub const FLOW_DATA: [f64; 19] = [
    186.4, 402.6, 505.2, 756.1, 1144.1, 790.9, 1283.5, 1647.6, 872.3, 1144.4, 1691.2, 1352.7, 1519.9,
    1316.0, 1437.1, 726.7, 952.3, 759.4, 272.0,
];

/// The published realisation for `stat` (either variant) or `flow`.
pub fn paper_dataset(name: &str) -> Result<Dataset> {
    match name {
        "stat" | "stat-poisson-limit" | "stat-binomial" => Dataset::new(STAT_DATA.to_vec(), STAT_DATA.len()),
        "flow" => Dataset::new(FLOW_DATA.to_vec(), 1),
        "mm" | "mm-full" | "mm-reduced" => Err(Error::NoPublishedData(format!(
            "{name}: no data realisation was published; generate synthetic data with a seed"
        ))),
        other => Err(Error::Unknown {
            kind: "dataset",
            name: other.to_string(),
        }),
    }
}

/// One replicate of noisy observations at the true parameters.
pub fn synthetic_dataset(model: &ModelSpec, seed: u64, n_replicates: usize) -> Result<Dataset> {
    let theta = model
        .true_params
        .as_deref()
        .ok_or_else(|| Error::invalid(format!("{}: no true parameters to simulate from", model.name)))?;
    let mean = model.predict_obs(theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = Vec::with_capacity(n_replicates * model.obs_dim());
    for _ in 0..n_replicates {
        match model.error_model {
            ErrorModel::NormalAdditive { sigma } => {
                let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
                obs.extend(mean.iter().map(|m| m + noise.sample(&mut rng)));
            }
            ErrorModel::LogNormal { sigma } => {
                let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
                obs.extend(mean.iter().map(|m| m * noise.sample(&mut rng).exp()));
            }
            ErrorModel::MeanVariance => {
                let d = Normal::new(mean[0], mean[1].sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
                obs.push(d.sample(&mut rng));
            }
        }
    }
    Dataset::new(obs, n_replicates)
}
