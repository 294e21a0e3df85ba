//! Run configuration: one JSON document describing the model, data, reference
//! point, tolerances and the profile and band requests.

use std::path::{Path, PathBuf};

use iir::models::{FlowConfig, MmConfig, StatModelConfig, DEFAULT_SEED};
use iir::numerics::OptimOptions;
use iir::profile::GridSpec;
use iir::reparam::Tolerances;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// A built-in name, or a built-in family with its own settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Builtin(String),
    Custom(CustomModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CustomModel {
    Stat(StatModelConfig),
    Mm(MmConfig),
    Flow(FlowConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Published,
    /// Numbers separated by commas, whitespace or newlines; replicates are
    /// stored one after another.
    File {
        path: PathBuf,
        #[serde(default = "one")]
        replicates: usize,
    },
    /// Seeded draw from the model's error model at its true parameters.
    /// Uses the run seed when `seed` is absent.
    Synthetic {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "one")]
        replicates: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferencePoint {
    #[default]
    Mle,
    /// The model's true parameter values.
    Truth,
    Explicit(Vec<f64>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coordinates {
    Original,
    #[default]
    Reparameterised,
}

/// A coordinate given by position or by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Index(usize),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRequest {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub coordinates: Coordinates,
    /// One target for a 1-D profile, two for a joint profile.
    pub targets: Vec<Target>,
    /// Empty for the default grid, one entry shared by all targets, or one
    /// per target.
    #[serde(default)]
    pub grid: Vec<GridSpec>,
    #[serde(default)]
    pub df: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictionRequest {
    /// Band from the profile at this position of `profiles`.
    Profile {
        profile: usize,
        #[serde(default)]
        df: Option<u32>,
        #[serde(default)]
        level: Option<f64>,
    },
    /// Pointwise union of earlier bands, by position in `predictions`.
    Union { union: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelRef,
    /// Published data when it exists, otherwise a synthetic draw.
    pub data: Option<DataSource>,
    pub reference_point: ReferencePoint,
    pub tolerances: Tolerances,
    /// Use rounded exponents for the reparameterised coordinates.
    pub rounded: bool,
    pub profiles: Vec<ProfileRequest>,
    pub predictions: Vec<PredictionRequest>,
    /// Extra Fisher checks with the observation grid cut down to these
    /// fine-grid indices.
    pub fisher_obs_subsets: Vec<Vec<usize>>,
    /// Points for the invariance check, the reference point included.
    pub invariance_points: usize,
    pub level: f64,
    /// Overrides every profile and band df when set.
    pub df: Option<u32>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub optim: OptimOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelRef::Builtin("flow".into()),
            data: None,
            reference_point: ReferencePoint::Mle,
            tolerances: Tolerances::default(),
            rounded: true,
            profiles: Vec::new(),
            predictions: Vec::new(),
            fisher_obs_subsets: Vec::new(),
            invariance_points: 3,
            level: 0.95,
            df: None,
            output_dir: PathBuf::from("iir-out"),
            seed: DEFAULT_SEED,
            optim: OptimOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn for_model(name: &str) -> Self {
        Self {
            model: ModelRef::Builtin(name.into()),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        // relative data paths are relative to the config file
        if let Some(DataSource::File { path: p, .. }) = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn model_name(&self) -> String {
        match &self.model {
            ModelRef::Builtin(n) => n.clone(),
            ModelRef::Custom(CustomModel::Stat(c)) => c.name().into(),
            ModelRef::Custom(CustomModel::Mm(c)) => c.name().into(),
            ModelRef::Custom(CustomModel::Flow(_)) => "flow".into(),
        }
    }

    /// Checks that do not need the model.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Validation(msg));
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level: {} is not in (0, 1)", self.level));
        }
        if let Some(df) = self.df {
            if !(1..=3).contains(&df) {
                return bad(format!("df: {df} is not 1, 2 or 3"));
            }
        }
        if self.invariance_points < 2 {
            return bad("invariance_points: at least 2 are needed".into());
        }
        self.tolerances
            .validate()
            .map_err(|e| CliError::Validation(format!("tolerances: {e}")))?;
        for (i, p) in self.profiles.iter().enumerate() {
            if !(1..=2).contains(&p.targets.len()) {
                return bad(format!("profiles[{i}].targets: need one or two targets"));
            }
            if p.grid.len() > 1 && p.grid.len() != p.targets.len() {
                return bad(format!("profiles[{i}].grid: give none, one, or one per target"));
            }
        }
        for (i, r) in self.predictions.iter().enumerate() {
            match r {
                PredictionRequest::Profile { profile, level, .. } => {
                    if *profile >= self.profiles.len() {
                        return bad(format!("predictions[{i}].profile: no profile {profile}"));
                    }
                    if let Some(l) = level {
                        if !(*l > 0.0 && *l < 1.0) {
                            return bad(format!("predictions[{i}].level: {l} is not in (0, 1)"));
                        }
                    }
                }
                PredictionRequest::Union { union } => {
                    if union.is_empty() || union.iter().any(|&j| j >= i) {
                        return bad(format!("predictions[{i}].union: must list earlier bands"));
                    }
                }
            }
        }
        Ok(())
    }
}
