//! The commands. Each writes into an [`Output`] and leaves the manifest to
//! the caller.

use std::path::Path;

use iir::likelihood::{mle, LikelihoodProblem, MleResult};
use iir::model::{Dataset, ModelSpec, ObservationOperator};
use iir::models::{builtin, paper_dataset, synthetic_dataset};
use iir::numerics::OptimOptions;
use iir::predict::{band_union, prediction_band, PredictionBand};
use iir::profile::{one_sidedness, profile_1d, profile_2d, GridSpec, ProfileOptions, ProfileResult, SidednessReport};
use iir::reparam::{
    analyze, build_reparam, fisher_rank_check, invariance_check, FisherReport, InvarianceReport, Reparameterisation,
    SvdAnalysis,
};
use iir::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{
    Coordinates, CustomModel, DataSource, ModelRef, PredictionRequest, ProfileRequest, ReferencePoint, RunConfig,
    Target,
};
use crate::error::CliError;
use crate::output::{sha256_hex, slug, Output};

/// Ratio above which a 1-D profile counts as one-sided.
pub const SIDEDNESS_RATIO: f64 = 5.0;

pub struct Session {
    pub config: RunConfig,
    pub model: ModelSpec,
    pub plain: LikelihoodProblem,
    pub optim: OptimOptions,
}

/// Everything downstream of the fit.
pub struct Fitted {
    pub mle: MleResult,
    pub reference: Vec<f64>,
    pub analysis: SvdAnalysis,
    pub coords: Reparameterisation,
    pub reparameterised: LikelihoodProblem,
    pub reparameterised_mle: MleResult,
}

fn resolve_model(cfg: &RunConfig) -> Result<ModelSpec, CliError> {
    let m = match &cfg.model {
        ModelRef::Builtin(name) => builtin(name),
        ModelRef::Custom(CustomModel::Stat(c)) => c.spec(),
        ModelRef::Custom(CustomModel::Mm(c)) => c.spec(),
        ModelRef::Custom(CustomModel::Flow(c)) => c.spec(),
    };
    m.map_err(|e| CliError::Validation(format!("model: {e}")))
}

fn read_numbers(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("data file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("data file {}: {e}", path.display())))?;
        for field in rec.iter().flat_map(str::split_whitespace) {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Validation(format!("data file {} line {}: `{field}` is not a number", path.display(), line + 1))
            })?;
            out.push(v);
        }
    }
    Ok(out)
}

fn load_data(cfg: &RunConfig, model: &ModelSpec) -> Result<Dataset, CliError> {
    let synthetic = |seed: Option<u64>, reps| synthetic_dataset(model, seed.unwrap_or(cfg.seed), reps);
    let data = match &cfg.data {
        None => match paper_dataset(&model.name) {
            Err(Error::NoPublishedData(_)) => synthetic(None, 1),
            other => other,
        },
        Some(DataSource::Published) => paper_dataset(&model.name),
        Some(DataSource::Synthetic { seed, replicates }) => synthetic(*seed, *replicates),
        Some(DataSource::File { path, replicates }) => Dataset::new(read_numbers(path)?, *replicates),
    };
    data.map_err(|e| CliError::Validation(format!("data: {e}")))
}

impl Session {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        config.validate()?;
        let model = resolve_model(&config)?;
        let data = load_data(&config, &model)?;
        let plain = LikelihoodProblem::new(model.clone(), data).map_err(|e| CliError::Validation(format!("data: {e}")))?;
        let optim = OptimOptions {
            seed: config.seed,
            ..config.optim.clone()
        };
        Ok(Self {
            config,
            model,
            plain,
            optim,
        })
    }

    /// SHA-256 of the effective configuration, output location excluded.
    pub fn config_hash(&self) -> String {
        let cfg = RunConfig {
            output_dir: Default::default(),
            ..self.config.clone()
        };
        sha256_hex(serde_json::to_string(&cfg).unwrap_or_default().as_bytes())
    }

    pub fn fit(&self) -> Result<Fitted, CliError> {
        let m = mle(&self.plain, &self.optim)?;
        let reference = match &self.config.reference_point {
            ReferencePoint::Mle => m.theta_original.clone(),
            ReferencePoint::Truth => self
                .model
                .true_params
                .clone()
                .ok_or_else(|| CliError::Validation("reference_point: model has no true parameters".into()))?,
            ReferencePoint::Explicit(v) => {
                if v.len() != self.model.n_params() || !self.model.bounds.contains(v) {
                    return Err(CliError::Validation(format!(
                        "reference_point: {v:?} is not a point of the {}-parameter box",
                        self.model.n_params()
                    )));
                }
                v.clone()
            }
        };
        let analysis = analyze(&self.model, &reference, &self.config.tolerances)?;
        let coords = build_reparam(&analysis, self.config.rounded)?;
        let reparameterised = self.plain.clone().with_coordinates(coords.clone())?;
        let reparameterised_mle = mle(&reparameterised, &self.optim)?;
        Ok(Fitted {
            mle: m,
            reference,
            analysis,
            coords,
            reparameterised,
            reparameterised_mle,
        })
    }

    /// Profiles to run: the configured list, or every 1-D profile in both
    /// coordinate systems.
    pub fn profile_requests(&self) -> Vec<ProfileRequest> {
        if !self.config.profiles.is_empty() {
            return self.config.profiles.clone();
        }
        let n = self.model.n_params();
        [Coordinates::Original, Coordinates::Reparameterised]
            .into_iter()
            .flat_map(|c| {
                (0..n).map(move |k| ProfileRequest {
                    name: None,
                    coordinates: c,
                    targets: vec![Target::Index(k)],
                    grid: Vec::new(),
                    df: None,
                })
            })
            .collect()
    }

    pub fn prediction_requests(&self, n_profiles: usize) -> Vec<PredictionRequest> {
        if !self.config.predictions.is_empty() {
            return self.config.predictions.clone();
        }
        (0..n_profiles)
            .map(|profile| PredictionRequest::Profile {
                profile,
                df: None,
                level: None,
            })
            .collect()
    }
}

#[derive(Serialize)]
struct ReparamFile<'a> {
    selected: &'static str,
    unrounded: &'a Reparameterisation,
    rounded: Option<&'a Reparameterisation>,
    rounding_error: Option<String>,
}

/// Reference point plus seeded log-uniform interior points.
fn invariance_points(model: &ModelSpec, reference: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = &model.bounds;
    let mut pts = vec![reference.to_vec()];
    while pts.len() < n {
        pts.push(
            (0..b.dim())
                .map(|i| {
                    let (lo, hi) = (b.lower[i].ln(), b.upper[i].ln());
                    let pad = 0.01 * (hi - lo);
                    rng.random_range(lo + pad..hi - pad).exp()
                })
                .collect(),
        );
    }
    pts
}

pub fn cmd_reparam(s: &Session, fit: &Fitted, out: &mut Output) -> Result<(), CliError> {
    out.write_json("svd_analysis.json", &fit.analysis)?;
    let unrounded = build_reparam(&fit.analysis, false)?;
    let rounded = build_reparam(&fit.analysis, true);
    out.write_json(
        "reparameterisation.json",
        &ReparamFile {
            selected: if s.config.rounded { "rounded" } else { "unrounded" },
            unrounded: &unrounded,
            rounded: rounded.as_ref().ok(),
            rounding_error: rounded.as_ref().err().map(ToString::to_string),
        },
    )?;
    let pts = invariance_points(&s.model, &fit.reference, s.config.invariance_points, s.config.seed);
    let report: InvarianceReport = invariance_check(&s.model, &pts, &s.config.tolerances)?;
    out.write_json("invariance.json", &report)
}

#[derive(Serialize)]
struct MleFile<'a> {
    model: &'a str,
    param_names: &'a [String],
    original: &'a MleResult,
    coordinate_names: Vec<String>,
    reparameterised: &'a MleResult,
}

pub fn cmd_mle(s: &Session, fit: &Fitted, out: &mut Output) -> Result<(), CliError> {
    out.write_json(
        "mle.json",
        &MleFile {
            model: &s.model.name,
            param_names: &s.model.param_names,
            original: &fit.mle,
            coordinate_names: fit.reparameterised.coordinate_names(),
            reparameterised: &fit.reparameterised_mle,
        },
    )
}

#[derive(Serialize)]
struct ProfileFile<'a> {
    name: &'a str,
    profile: &'a ProfileResult,
    crossing_intervals: Vec<(f64, f64)>,
    sidedness: Option<SidednessReport>,
}

pub struct NamedProfile {
    pub name: String,
    pub coordinates: Coordinates,
    pub result: ProfileResult,
}

fn resolve_target(t: &Target, names: &[String], ctx: &str) -> Result<usize, CliError> {
    match t {
        Target::Index(i) if *i < names.len() => Ok(*i),
        Target::Name(n) => names
            .iter()
            .position(|m| m == n)
            .ok_or_else(|| CliError::Validation(format!("{ctx}: no coordinate `{n}` among {names:?}"))),
        Target::Index(i) => Err(CliError::Validation(format!("{ctx}: index {i} out of range for {names:?}"))),
    }
}

pub fn run_profiles(s: &Session, fit: &Fitted, out: &mut Output) -> Result<Vec<NamedProfile>, CliError> {
    let mut results = Vec::new();
    for (i, req) in s.profile_requests().iter().enumerate() {
        let ctx = format!("profiles[{i}]");
        let (problem, m) = match req.coordinates {
            Coordinates::Original => (&s.plain, &fit.mle),
            Coordinates::Reparameterised => (&fit.reparameterised, &fit.reparameterised_mle),
        };
        let names = problem.coordinate_names();
        let targets = req
            .targets
            .iter()
            .map(|t| resolve_target(t, &names, &format!("{ctx}.targets")))
            .collect::<Result<Vec<_>, _>>()?;
        let grid_for = |k: usize| req.grid.get(k).or(req.grid.first()).cloned().unwrap_or_default();
        let opts = ProfileOptions {
            df: s.config.df.or(req.df),
            level: s.config.level,
            optim: s.optim.clone(),
        };
        let labels: Vec<String> = targets.iter().map(|&k| names[k].clone()).collect();
        let name = req.name.clone().unwrap_or_else(|| {
            let prefix = match req.coordinates {
                Coordinates::Original => "orig",
                Coordinates::Reparameterised => "rep",
            };
            format!("{prefix}_{}", labels.iter().map(|l| slug(l)).collect::<Vec<_>>().join("-"))
        });
        let result = match targets[..] {
            [t] => profile_1d(problem, t, &grid_for(0), m, &opts),
            [a, b] => {
                if a == b {
                    return Err(CliError::Validation(format!("{ctx}.targets: the two targets coincide")));
                }
                let (ga, gb): (GridSpec, GridSpec) = (grid_for(0), grid_for(1));
                profile_2d(problem, [a, b], [&ga, &gb], m, &opts)
            }
            _ => unreachable!("validated"),
        }
        .map_err(|e| match e {
            Error::InvalidInput(msg) => CliError::Validation(format!("{ctx}: {msg}")),
            other => other.into(),
        })?;
        let sidedness = if targets.len() == 1 {
            Some(one_sidedness(&result, SIDEDNESS_RATIO)?)
        } else {
            None
        };
        let stem = format!("profiles/{i:02}_{name}");
        out.write_table(&format!("{stem}.csv"), &result.table())?;
        out.write_json(
            &format!("{stem}.json"),
            &ProfileFile {
                name: &name,
                profile: &result,
                crossing_intervals: if targets.len() == 1 { result.crossing_intervals() } else { Vec::new() },
                sidedness,
            },
        )?;
        results.push(NamedProfile {
            name,
            coordinates: req.coordinates,
            result,
        });
    }
    Ok(results)
}

#[derive(Serialize)]
struct BandSummary {
    index: usize,
    file: String,
    source: String,
    df: u32,
    level: f64,
    n_points: usize,
    max_width: f64,
    max_relative_width: f64,
}

pub fn run_predictions(
    s: &Session,
    fit: &Fitted,
    profiles: &[NamedProfile],
    out: &mut Output,
) -> Result<Vec<PredictionBand>, CliError> {
    let mut bands: Vec<PredictionBand> = Vec::new();
    let mut summary = Vec::new();
    for (i, req) in s.prediction_requests(profiles.len()).iter().enumerate() {
        let (band, stem, level) = match req {
            PredictionRequest::Profile { profile, df, level } => {
                let p = profiles.get(*profile).ok_or_else(|| {
                    CliError::Validation(format!("predictions[{i}].profile: no profile {profile}"))
                })?;
                let (problem, m) = match p.coordinates {
                    Coordinates::Original => (&s.plain, &fit.mle),
                    Coordinates::Reparameterised => (&fit.reparameterised, &fit.reparameterised_mle),
                };
                let df = s.config.df.or(*df).unwrap_or(p.result.df);
                let level = level.unwrap_or(s.config.level);
                (prediction_band(problem, &p.result, m, df, level)?, p.name.clone(), level)
            }
            PredictionRequest::Union { union } => {
                let parts: Vec<PredictionBand> = union.iter().map(|&j| bands[j].clone()).collect();
                let stem = format!("union_{}", union.iter().map(|j| format!("{j:02}")).collect::<Vec<_>>().join("-"));
                (band_union(&parts)?, stem, s.config.level)
            }
        };
        let file = format!("bands/{i:02}_{stem}.csv");
        out.write_table(&file, &band.table())?;
        let w = band.width();
        let rel = (0..w.len())
            .map(|k| {
                let scale = band.mle_trajectory[k].abs();
                if scale > 0.0 { w[k] / scale } else { w[k] }
            })
            .fold(0.0, f64::max);
        summary.push(BandSummary {
            index: i,
            file,
            source: band.source.clone(),
            df: band.df_used,
            level,
            n_points: band.n_points,
            max_width: w.iter().cloned().fold(0.0, f64::max),
            max_relative_width: rel,
        });
        bands.push(band);
    }
    out.write_json("bands.json", &summary)?;
    Ok(bands)
}

#[derive(Serialize)]
struct ReducedFisher {
    obs_indices: Vec<usize>,
    report: FisherReport,
}

#[derive(Serialize)]
struct FisherFile {
    model: String,
    at: Vec<f64>,
    report: FisherReport,
    reduced: Vec<ReducedFisher>,
}

pub fn cmd_fisher(s: &Session, fit: &Fitted, out: &mut Output) -> Result<(), CliError> {
    let at = fit.mle.theta_original.clone();
    let report = fisher_rank_check(&s.plain, &at, &s.config.tolerances)?;
    let mut reduced = Vec::new();
    for (i, idx) in s.config.fisher_obs_subsets.iter().enumerate() {
        let op = ObservationOperator::new(idx.clone())
            .map_err(|e| CliError::Validation(format!("fisher_obs_subsets[{i}]: {e}")))?;
        let model = s.model.clone().with_obs_operator(op);
        // only the replicate count of the data enters the Fisher information
        let n_rep = s.plain.data.n_replicates;
        let mean = model
            .predict_obs(&at)
            .map_err(|e| CliError::Validation(format!("fisher_obs_subsets[{i}]: {e}")))?;
        let data = Dataset::new(mean.repeat(n_rep), n_rep)?;
        let problem =
            LikelihoodProblem::new(model, data).map_err(|e| CliError::Validation(format!("fisher_obs_subsets[{i}]: {e}")))?;
        reduced.push(ReducedFisher {
            obs_indices: idx.clone(),
            report: fisher_rank_check(&problem, &at, &s.config.tolerances)?,
        });
    }
    out.write_json(
        "fisher.json",
        &FisherFile {
            model: s.model.name.clone(),
            at,
            report,
            reduced,
        },
    )
}

/// The whole pipeline for one configuration.
pub fn run_all(s: &Session, out: &mut Output) -> Result<(), CliError> {
    let fit = s.fit()?;
    cmd_reparam(s, &fit, out)?;
    cmd_mle(s, &fit, out)?;
    cmd_fisher(s, &fit, out)?;
    let profiles = run_profiles(s, &fit, out)?;
    if !s.config.predictions.is_empty() {
        run_predictions(s, &fit, &profiles, out)?;
    }
    Ok(())
}

pub const PAPER_CONFIGS: [(&str, &str); 5] = [
    ("stat-poisson-limit", include_str!("../../../configs/stat-poisson-limit.json")),
    ("stat-binomial", include_str!("../../../configs/stat-binomial.json")),
    ("mm-full", include_str!("../../../configs/mm-full.json")),
    ("mm-reduced", include_str!("../../../configs/mm-reduced.json")),
    ("flow", include_str!("../../../configs/flow.json")),
];

/// Configurations of the worked examples, with the run seed replaced when
/// `seed` is given.
pub fn paper_configs(seed: Option<u64>) -> Result<Vec<(String, RunConfig)>, CliError> {
    PAPER_CONFIGS
        .iter()
        .map(|(name, text)| {
            let mut cfg = RunConfig::from_json(text, &format!("configs/{name}.json"))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            Ok((name.to_string(), cfg))
        })
        .collect()
}
