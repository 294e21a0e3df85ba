//! Command-line front end: runs the reparameterisation, fitting, profiling
//! and prediction pipeline from a JSON configuration and writes CSV and JSON
//! artifacts plus a manifest.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

use std::path::PathBuf;

use config::{DataSource, ModelRef, RunConfig};
pub use error::CliError;
use output::{sha256_hex, Output};
use run::Session;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Reparam,
    Mle,
    Profile,
    Predict,
    FisherCheck,
    ReproducePaper,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Reparam => "reparam",
            Command::Mle => "mle",
            Command::Profile => "profile",
            Command::Predict => "predict",
            Command::FisherCheck => "fisher-check",
            Command::ReproducePaper => "reproduce-paper",
        }
    }
}

/// Command-line values that take precedence over the configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<String>,
    /// `published`, `synthetic`, or a file path.
    pub data: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub rounded: Option<bool>,
    pub df: Option<u32>,
    pub level: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = &self.model {
            cfg.model = ModelRef::Builtin(m.clone());
        }
        if let Some(d) = &self.data {
            cfg.data = Some(match d.as_str() {
                "published" => DataSource::Published,
                "synthetic" => DataSource::Synthetic {
                    seed: None,
                    replicates: 1,
                },
                path => DataSource::File {
                    path: path.into(),
                    replicates: 1,
                },
            });
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.rounded {
            cfg.rounded = r;
        }
        if self.df.is_some() {
            cfg.df = self.df;
        }
        if let Some(l) = self.level {
            cfg.level = l;
        }
    }
}

/// Run `command` and return the output directory.
pub fn execute(command: Command, config: RunConfig) -> Result<PathBuf, CliError> {
    if command == Command::ReproducePaper {
        return reproduce_paper(&config, None);
    }
    let session = Session::new(config)?;
    let mut out = Output::new(&session.config.output_dir)?;
    let fit = session.fit()?;
    match command {
        Command::Reparam => run::cmd_reparam(&session, &fit, &mut out)?,
        Command::Mle => run::cmd_mle(&session, &fit, &mut out)?,
        Command::Profile => {
            run::cmd_mle(&session, &fit, &mut out)?;
            run::run_profiles(&session, &fit, &mut out)?;
        }
        Command::Predict => {
            run::cmd_mle(&session, &fit, &mut out)?;
            let profiles = run::run_profiles(&session, &fit, &mut out)?;
            run::run_predictions(&session, &fit, &profiles, &mut out)?;
        }
        Command::FisherCheck => run::cmd_fisher(&session, &fit, &mut out)?,
        Command::ReproducePaper => unreachable!(),
    }
    let hash = session.config_hash();
    let out = out.finish(command.name(), &session.config.model.name(), session.config.seed, hash)?;
    Ok(out.root().to_path_buf())
}

/// Every worked example, each in its own subdirectory of the output
/// directory. `base` carries the output directory, seed and the flag
/// overrides common to all examples.
pub fn reproduce_paper(base: &RunConfig, overrides: Option<&Overrides>) -> Result<PathBuf, CliError> {
    let mut top = Output::new(&base.output_dir)?;
    let mut hashes = String::new();
    for (name, mut cfg) in run::paper_configs(Some(base.seed))? {
        if let Some(o) = overrides {
            let o = Overrides {
                model: None,
                data: None,
                out: None,
                ..o.clone()
            };
            o.apply(&mut cfg);
        }
        cfg.output_dir = base.output_dir.join(&name);
        let session = Session::new(cfg)?;
        let mut out = Output::new(&session.config.output_dir)?;
        run::run_all(&session, &mut out)?;
        let hash = session.config_hash();
        hashes.push_str(&hash);
        let out = out.finish("reproduce-paper", &name, session.config.seed, hash)?;
        top.absorb(&name, out);
    }
    let out = top.finish("reproduce-paper", "all", base.seed, sha256_hex(hashes.as_bytes()))?;
    Ok(out.root().to_path_buf())
}

impl ModelRef {
    pub fn name(&self) -> String {
        RunConfig {
            model: self.clone(),
            ..RunConfig::default()
        }
        .model_name()
    }
}
