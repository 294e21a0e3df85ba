//! Built-in example models.

mod datasets;
mod flow;
mod mm;
mod stat;

pub use datasets::{paper_dataset, synthetic_dataset, DEFAULT_SEED, FLOW_DATA, STAT_DATA};
pub use flow::{flow_coefficients, flow_solution, FlowAuxiliary, FlowConfig};
pub use mm::{mm_solution, MmAuxiliary, MmConfig, MmVariant};
pub use stat::{stat_auxiliary, StatAuxiliary, StatModelConfig, StatVariant};

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec};

pub const BUILTIN_MODELS: [&str; 5] = ["stat-poisson-limit", "stat-binomial", "mm-full", "mm-reduced", "flow"];

pub fn builtin(name: &str) -> Result<ModelSpec> {
    match name {
        "stat-poisson-limit" => StatModelConfig {
            variant: StatVariant::PoissonLimit,
            ..Default::default()
        }
        .spec(),
        "stat-binomial" => StatModelConfig::default().spec(),
        "mm-full" => MmConfig::default().spec(),
        "mm-reduced" => MmConfig {
            variant: MmVariant::Reduced,
            ..Default::default()
        }
        .spec(),
        "flow" => FlowConfig::default().spec(),
        other => Err(Error::Unknown {
            kind: "model",
            name: other.to_string(),
        }),
    }
}

/// Published data where it exists, otherwise one seeded synthetic replicate.
pub fn default_dataset(model: &ModelSpec, seed: u64) -> Result<Dataset> {
    match paper_dataset(&model.name) {
        Err(Error::NoPublishedData(_)) => synthetic_dataset(model, seed, 1),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_builds_and_evaluates() {
        for name in BUILTIN_MODELS {
            let m = builtin(name).unwrap();
            let theta = m.true_params.clone().unwrap();
            let out = m.predict_fine(&theta).unwrap();
            assert!(out.iter().all(|v| v.is_finite()), "{name}");
            let d = default_dataset(&m, DEFAULT_SEED).unwrap();
            m.validate_dataset(&d).unwrap();
        }
        assert!(builtin("nope").is_err());
    }
}
