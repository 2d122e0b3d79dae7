//! Argument parsing and the top-level entry point.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pauli_lll::potentials::PotentialRecipe;

use crate::config::{Pipeline, PotentialRef, RunConfig};
use crate::error::{HarnessError, HarnessResult};
use crate::pipelines::{run, RunOutcome};
use crate::presets::{default_config, preset};

#[derive(Debug, Parser)]
#[command(name = "pauli-lll", version, about = "Resonances and spectral shift near the bottom of a Pauli spectrum")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Toeplitz spectrum, counting functions and phi.
    Toeplitz(RunArgs),
    /// Resonance scan.
    Scan(RunArgs),
    /// Spectral shift profile.
    Ssf(RunArgs),
    /// Lorentzian split of xi' near resonances.
    BreitWigner(RunArgs),
    /// xi against phi near the threshold.
    Singularity(RunArgs),
    /// Local trace formula across scales.
    TraceCheck(RunArgs),
    /// Rebuild the catalog's reference values.
    OracleRegen(RunArgs),
    /// Potential checks.
    Validate(RunArgs),
    /// Print the names of the bundled presets.
    Presets,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named preset.
    #[arg(long)]
    pub preset: Option<String>,
    /// Catalog name, or a JSON file holding a potential recipe.
    #[arg(long, conflicts_with = "synthetic")]
    pub potential: Option<String>,
    /// JSON file holding a synthetic model (scan only).
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    /// Transverse basis size.
    #[arg(long)]
    pub basis: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub b0: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    fn split(&self) -> Option<(Pipeline, &RunArgs)> {
        Some(match self {
            Command::Toeplitz(a) => (Pipeline::Toeplitz, a),
            Command::Scan(a) => (Pipeline::Scan, a),
            Command::Ssf(a) => (Pipeline::Ssf, a),
            Command::BreitWigner(a) => (Pipeline::BreitWigner, a),
            Command::Singularity(a) => (Pipeline::Singularity, a),
            Command::TraceCheck(a) => (Pipeline::TraceCheck, a),
            Command::OracleRegen(a) => (Pipeline::OracleRegen, a),
            Command::Validate(a) => (Pipeline::Validate, a),
            Command::Presets => return None,
        })
    }
}

/// Build the effective configuration from a subcommand's flags.
pub fn resolve(pipeline: Pipeline, a: &RunArgs) -> HarnessResult<RunConfig> {
    let mut cfg = if let Some(p) = &a.config {
        RunConfig::load(p)?
    } else if let Some(name) = &a.preset {
        preset(name).ok_or_else(|| HarnessError::Usage(format!("unknown preset '{name}'")))?
    } else {
        default_config(pipeline)
    };
    if cfg.pipeline != pipeline {
        return Err(HarnessError::Usage(format!("configuration is for '{}', not '{}'", cfg.pipeline.name(), pipeline.name())));
    }
    if let Some(p) = &a.potential {
        cfg.potential = if p.ends_with(".json") {
            let path = PathBuf::from(p);
            let s = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            let recipe: PotentialRecipe = serde_json::from_str(&s)?;
            PotentialRef::Inline(recipe)
        } else {
            PotentialRef::Catalog(p.clone())
        };
    }
    if let Some(p) = &a.synthetic {
        cfg.potential = PotentialRef::SyntheticFile(p.clone());
    }
    if let Some(m) = a.basis {
        cfg.grids.basis = m;
    }
    if let Some(b) = a.b0 {
        cfg.model.b0 = b;
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.check()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> HarnessResult<Option<RunOutcome>> {
    let Some((pipeline, args)) = cli.command.split() else {
        for (name, c) in crate::presets::preset_experiments() {
            println!("{name}\t{}", c.pipeline.name());
        }
        return Ok(None);
    };
    let cfg = resolve(pipeline, args)?;
    run(&cfg).map(Some)
}

/// Parse `argv` (including the program name), run, and return the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(Some(outcome)) => {
            let m = &outcome.manifest;
            println!("{} {} -> {} files, config {}", m.pipeline, m.run, m.files.len(), &m.config_hash[..12]);
            m.exit_code
        }
        Ok(None) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
