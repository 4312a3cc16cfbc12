//! The `segment`, `sweep-window`, `ablate` and `synth` workflows.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kinseg::ingest::{Layout, Transcript};
use kinseg::metrics::EvaluationReport;
use kinseg::preprocess::FeatureSubset;
use kinseg::synth::{
    cyclic_schedule, make_random_regimes, SwitchedLds, DEFAULT_CONTRACTION, SYNTH_SAMPLE_RATE_HZ,
};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::config::RunConfig;
use crate::dataset::load_samples;
use crate::error::CliError;
use crate::pipeline::{run_on, RunOutcome};

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Write the artifacts of a segmentation run into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<(), CliError> {
    create_dir(dir)?;
    for d in &outcome.demos {
        write(
            &dir.join(format!("{}.predicted.txt", d.id)),
            &d.predicted_transcript().to_text(),
        )?;
        let mut csv = String::from("row_index,from_label,to_label");
        for name in d.augmented_names() {
            csv.push(',');
            csv.push_str(&csv_field(&name));
        }
        csv.push('\n');
        for tp in d.transitions()? {
            write!(csv, "{},{},{}", tp.row, csv_field(&tp.from), csv_field(&tp.to)).unwrap();
            for v in &tp.features {
                write!(csv, ",{v}").unwrap();
            }
            csv.push('\n');
        }
        write(&dir.join(format!("{}.transitions.csv", d.id)), &csv)?;
    }
    write(&dir.join("model.json"), &outcome.model.to_json())?;
    if let Some(report) = &outcome.report {
        write(&dir.join("report.json"), &report.to_json())?;
        let mut csv = String::from("demo,n_frames_evaluated,accuracy,nmi\n");
        for s in &outcome.per_demo {
            writeln!(
                csv,
                "{},{},{},{}",
                csv_field(&s.id),
                s.n_frames_evaluated,
                opt(s.accuracy),
                s.nmi
            )
            .unwrap();
        }
        write(&dir.join("per_demo.csv"), &csv)?;
    }
    Ok(())
}

/// Segment, evaluate and write every artifact to the configured output directory.
pub fn segment(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let samples = load_samples(cfg)?;
    let outcome = run_on(cfg, &samples)?;
    write_outputs(&outcome, &cfg.output)?;
    Ok(outcome)
}

const METRIC_COLUMNS: &str = "accuracy,nmi,si_pred,si_truth,n_frames_evaluated";

fn metric_cells(r: &EvaluationReport) -> String {
    format!(
        "{},{},{},{},{}",
        opt(r.accuracy),
        r.nmi,
        opt(r.si_pred),
        opt(r.si_truth),
        r.n_frames_evaluated
    )
}

fn require_report(outcome: RunOutcome) -> Result<EvaluationReport, CliError> {
    outcome
        .report
        .ok_or_else(|| CliError::Data("no annotated demonstrations to evaluate".into()))
}

/// One run per window length; writes `sweep_window.csv`.
pub fn sweep_window(cfg: &RunConfig, windows: &[usize]) -> Result<Vec<(usize, EvaluationReport)>, CliError> {
    if windows.is_empty() {
        return Err(CliError::Usage("give at least one window length".into()));
    }
    cfg.validate()?;
    let samples = load_samples(cfg)?;
    let mut rows = Vec::with_capacity(windows.len());
    let mut csv = format!("window,{METRIC_COLUMNS}\n");
    for &w in windows {
        let run = RunConfig {
            window: w,
            ..cfg.clone()
        };
        let report = require_report(run_on(&run, &samples)?)?;
        writeln!(csv, "{w},{}", metric_cells(&report)).unwrap();
        rows.push((w, report));
    }
    create_dir(&cfg.output)?;
    write(&cfg.output.join("sweep_window.csv"), &csv)?;
    Ok(rows)
}

/// One run per feature subset; writes `ablate.csv`.
pub fn ablate(
    cfg: &RunConfig,
    subsets: &[FeatureSubset],
) -> Result<Vec<(FeatureSubset, EvaluationReport)>, CliError> {
    if subsets.is_empty() {
        return Err(CliError::Usage("give at least one feature subset".into()));
    }
    cfg.validate()?;
    let samples = load_samples(cfg)?;
    let mut rows = Vec::with_capacity(subsets.len());
    let mut csv = format!("subset,n_channels,{METRIC_COLUMNS}\n");
    for subset in subsets {
        let run = RunConfig {
            feature_subset: subset.clone(),
            ..cfg.clone()
        };
        let outcome = run_on(&run, &samples)?;
        let channels = outcome.demos[0].features.n_channels();
        let report = require_report(outcome)?;
        writeln!(
            csv,
            "{},{channels},{}",
            csv_field(&subset.to_string()),
            metric_cells(&report)
        )
        .unwrap();
        rows.push((subset.clone(), report));
    }
    create_dir(&cfg.output)?;
    write(&cfg.output.join("ablate.csv"), &csv)?;
    Ok(rows)
}

/// Parameters of a synthetic data set.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_regimes: usize,
    pub dim: usize,
    pub contraction: f64,
    pub noise_std: f64,
    pub demos: usize,
    /// Each round visits every regime once, in random order.
    pub rounds: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_regimes: 4,
            dim: 6,
            contraction: DEFAULT_CONTRACTION,
            noise_std: 0.1,
            demos: 3,
            rounds: 3,
            min_len: 60,
            max_len: 120,
            seed: 0,
            output: PathBuf::from("synth"),
        }
    }
}

/// Id of the `i`-th (0-based) synthetic demonstration.
pub fn synth_id(i: usize) -> String {
    format!("synth_{:02}", i + 1)
}

/// Generate demonstrations sharing one set of regimes and write
/// `<id>.csv` / `<id>.transcript` pairs. Returns the ids written.
pub fn synth(params: &SynthParams) -> Result<Vec<String>, CliError> {
    if params.demos == 0 {
        return Err(CliError::Usage("demos must be at least 1".into()));
    }
    if !(params.noise_std >= 0.0) {
        return Err(CliError::Usage(format!(
            "noise_std must be non-negative, got {}",
            params.noise_std
        )));
    }
    let usage = |e: kinseg::Error| CliError::Usage(format!("synth parameters: {e}"));
    let regimes = match make_random_regimes(params.n_regimes, params.dim, params.seed, params.contraction) {
        Err(e) if !e.is_numerical() => return Err(usage(e)),
        r => r.map_err(|e| CliError::from_core("regimes", e))?,
    };
    create_dir(&params.output)?;
    let p = params.dim;
    let mut ids = Vec::with_capacity(params.demos);
    for i in 0..params.demos {
        let run_seed = params.seed * 1000 + i as u64 + 1;
        let schedule = cyclic_schedule(
            params.n_regimes,
            params.rounds,
            params.min_len,
            params.max_len,
            run_seed,
        )
        .map_err(usage)?;
        let system = SwitchedLds {
            regimes: regimes.clone(),
            noise_cov: DMatrix::identity(p, p) * params.noise_std.powi(2),
            schedule,
            x0: DVector::from_element(p, 1.0),
            seed: run_seed,
        };
        let id = synth_id(i);
        let (demo, labels) = system.generate().map_err(|e| CliError::from_core(&id, e))?;
        let csv = demo
            .to_text(Layout::GenericCsv {
                sample_rate_hz: SYNTH_SAMPLE_RATE_HZ,
            })
            .map_err(|e| CliError::from_core(&id, e))?;
        let opt_labels: Vec<Option<&str>> = labels.iter().map(|l| Some(l.as_str())).collect();
        let transcript = Transcript::from_frame_labels(&opt_labels);
        write(&params.output.join(format!("{id}.csv")), &csv)?;
        write(&params.output.join(format!("{id}.transcript")), &transcript.to_text())?;
        ids.push(id);
    }
    Ok(ids)
}
