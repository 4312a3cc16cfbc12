//! Flag definitions and dispatch for the `kinseg` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use kinseg::metrics::EvaluationReport;
use kinseg::preprocess::FeatureSubset;

use crate::commands::{self, SynthParams};
use crate::config::{FeatureMode, InitMethod, LayoutKind, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "kinseg", version, about = "Gesture segmentation of robot kinematic recordings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the mixture, label every frame and write transcripts, model and report.
    Segment(RunArgs),
    /// Repeat the segmentation for several window lengths.
    SweepWindow {
        #[command(flatten)]
        run: RunArgs,
        /// Window lengths to try.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
        windows: Vec<usize>,
    },
    /// Repeat the segmentation for several feature subsets.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Feature subset (repeatable): all, no-pose, no-velocity,
        /// no-distance or a comma-separated list of 1-based channels.
        #[arg(long = "subset", value_parser = parse_subset)]
        subsets: Vec<FeatureSubset>,
    },
    /// Write synthetic demonstrations from a random switched linear system.
    Synth(SynthArgs),
}

fn parse_subset(s: &str) -> Result<FeatureSubset, String> {
    s.parse().map_err(|e: kinseg::Error| e.to_string())
}

/// Run settings; each flag overrides the config file.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// TOML file with run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input directory (repeatable).
    #[arg(long = "input", short = 'i')]
    pub inputs: Vec<PathBuf>,
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// jigsaws or csv.
    #[arg(long)]
    pub layout: Option<LayoutKind>,
    /// Sample rate of CSV inputs in Hz.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// auto, kinematic or raw.
    #[arg(long)]
    pub features: Option<FeatureMode>,
    #[arg(long)]
    pub fc_hz: Option<f64>,
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, short = 'w')]
    pub window: Option<usize>,
    #[arg(long, value_parser = parse_subset)]
    pub feature_subset: Option<FeatureSubset>,
    #[arg(long)]
    pub em_tol: Option<f64>,
    #[arg(long)]
    pub em_max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// weak or kmeans.
    #[arg(long)]
    pub init: Option<InitMethod>,
    /// Number of k-means clusters.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Only use this demonstration (repeatable).
    #[arg(long = "demo")]
    pub demo_ids: Vec<String>,
    /// Annotated demonstration for the weak initialization (repeatable).
    #[arg(long = "init-demo")]
    pub init_ids: Vec<String>,
    /// Label mapping file.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Split boundary file for the label mapping.
    #[arg(long)]
    pub boundaries: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if !self.inputs.is_empty() {
            c.inputs = self.inputs.clone();
        }
        if !self.demo_ids.is_empty() {
            c.demo_ids = self.demo_ids.clone();
        }
        if !self.init_ids.is_empty() {
            c.init_ids = self.init_ids.clone();
        }
        macro_rules! set {
            ($($field:ident => $target:ident),+) => {
                $(if let Some(v) = &self.$field { c.$target = v.clone(); })+
            };
        }
        set!(output => output, layout => layout, sample_rate => sample_rate_hz,
             features => features, fc_hz => fc_hz, subsample => subsample_factor,
             window => window, feature_subset => feature_subset, em_tol => em_tol,
             em_max_iter => em_max_iter, seed => seed, init => init_method);
        if self.clusters.is_some() {
            c.clusters = self.clusters;
        }
        if self.mapping.is_some() {
            c.mapping = self.mapping.clone();
        }
        if self.boundaries.is_some() {
            c.boundaries = self.boundaries.clone();
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub n_regimes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub contraction: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub demos: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SynthArgs {
    pub fn resolve(&self) -> Result<SynthParams, CliError> {
        let mut p = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str(&text).map_err(|e| CliError::Usage(format!("config: {e}")))?
            }
            None => SynthParams::default(),
        };
        macro_rules! set {
            ($($field:ident),+) => {
                $(if let Some(v) = &self.$field { p.$field = v.clone(); })+
            };
        }
        set!(output, n_regimes, dim, contraction, noise_std, demos, rounds, min_len, max_len, seed);
        Ok(p)
    }
}

fn summary(r: &EvaluationReport) -> String {
    let si = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    let acc = r
        .accuracy
        .map(|a| format!("{a:.4}"))
        .unwrap_or_else(|| "n/a".into());
    format!(
        "accuracy {acc}  nmi {:.4}  si_pred {}  si_truth {}  frames {}",
        r.nmi,
        si(r.si_pred),
        si(r.si_truth),
        r.n_frames_evaluated
    )
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Segment(args) => {
            let cfg = args.resolve()?;
            let outcome = commands::segment(&cfg)?;
            println!(
                "segmented {} demonstration(s) into {}",
                outcome.demos.len(),
                cfg.output.display()
            );
            if let Some(r) = &outcome.report {
                println!("{}", summary(r));
            }
        }
        Command::SweepWindow { run, windows } => {
            let cfg = run.resolve()?;
            for (w, r) in commands::sweep_window(&cfg, &windows)? {
                println!("W={w}: {}", summary(&r));
            }
        }
        Command::Ablate { run, subsets } => {
            let cfg = run.resolve()?;
            let subsets = if subsets.is_empty() {
                vec![
                    FeatureSubset::All,
                    FeatureSubset::NoPose,
                    FeatureSubset::NoVelocity,
                    FeatureSubset::NoDistance,
                ]
            } else {
                subsets
            };
            for (s, r) in commands::ablate(&cfg, &subsets)? {
                println!("{s}: {}", summary(&r));
            }
        }
        Command::Synth(args) => {
            let params = args.resolve()?;
            let ids = commands::synth(&params)?;
            println!("wrote {} demonstration(s) to {}", ids.len(), params.output.display());
        }
    }
    Ok(())
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
