//! Locating and loading demonstrations and their transcripts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kinseg::dictionary::{apply_mapping, BoundaryFile, LabelMapping};
use kinseg::ingest::{parse_kinematics, parse_transcript, Demonstration, Layout, Transcript};

use crate::config::{LayoutKind, RunConfig};
use crate::error::CliError;

/// A demonstration and its (relabelled) annotation, if one exists.
#[derive(Debug, Clone)]
pub struct Sample {
    pub demo: Demonstration,
    pub transcript: Option<Transcript>,
}

struct Source {
    kinematics: PathBuf,
    transcript: PathBuf,
}

fn list_sources(dir: &Path, layout: LayoutKind) -> Result<BTreeMap<String, Source>, CliError> {
    let (data_dir, ext) = match layout {
        LayoutKind::Jigsaws => (dir.join("kinematics").join("AllGestures"), "txt"),
        LayoutKind::Csv => (dir.to_path_buf(), "csv"),
    };
    let entries = fs::read_dir(&data_dir).map_err(|e| CliError::io(&data_dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(&data_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) || !path.is_file() {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
            continue;
        };
        let transcript = match layout {
            LayoutKind::Jigsaws => dir.join("transcriptions").join(format!("{id}.txt")),
            LayoutKind::Csv => dir.join(format!("{id}.transcript")),
        };
        out.insert(id, Source { kinematics: path, transcript });
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Load every selected demonstration of the configured input directories,
/// sorted by id, with the label mapping applied to the transcripts.
pub fn load_samples(cfg: &RunConfig) -> Result<Vec<Sample>, CliError> {
    let mut sources = BTreeMap::new();
    for dir in &cfg.inputs {
        for (id, src) in list_sources(dir, cfg.layout)? {
            if sources.insert(id.clone(), src).is_some() {
                return Err(CliError::Data(format!(
                    "demonstration '{id}' appears in more than one input directory"
                )));
            }
        }
    }
    if !cfg.demo_ids.is_empty() {
        if let Some(missing) = cfg.demo_ids.iter().find(|id| !sources.contains_key(*id)) {
            return Err(CliError::Data(format!("demonstration '{missing}' not found in inputs")));
        }
        sources.retain(|id, _| cfg.demo_ids.contains(id));
    }
    if sources.is_empty() {
        let dirs: Vec<String> = cfg.inputs.iter().map(|d| d.display().to_string()).collect();
        return Err(CliError::Data(format!(
            "no {} demonstrations found in {}",
            cfg.layout,
            dirs.join(", ")
        )));
    }

    let mapping = match &cfg.mapping {
        Some(p) => Some(
            LabelMapping::from_toml(&read(p)?).map_err(|e| CliError::from_core(p.display().to_string(), e))?,
        ),
        None => None,
    };
    let boundaries = match &cfg.boundaries {
        Some(p) => BoundaryFile::from_toml(&read(p)?)
            .map_err(|e| CliError::from_core(p.display().to_string(), e))?,
        None => BoundaryFile::default(),
    };
    let layout = match cfg.layout {
        LayoutKind::Jigsaws => Layout::Jigsaws,
        LayoutKind::Csv => Layout::GenericCsv {
            sample_rate_hz: cfg.sample_rate_hz,
        },
    };

    let mut samples = Vec::with_capacity(sources.len());
    for (id, src) in sources {
        let where_ = src.kinematics.display().to_string();
        let demo = parse_kinematics(&id, &read(&src.kinematics)?, layout)
            .map_err(|e| CliError::from_core(&where_, e))?;
        let transcript = if src.transcript.is_file() {
            let where_ = src.transcript.display().to_string();
            let t = parse_transcript(&read(&src.transcript)?)
                .map_err(|e| CliError::from_core(&where_, e))?;
            if let Some(last) = t.segments.last() {
                if last.end >= demo.n_frames() {
                    return Err(CliError::Data(format!(
                        "{where_}: annotation reaches frame {} but the recording has {} frames",
                        last.end + 1,
                        demo.n_frames()
                    )));
                }
            }
            Some(match &mapping {
                Some(m) => apply_mapping(&t, m, boundaries.for_demo(&id))
                    .map_err(|e| CliError::from_core(format!("{where_} (label mapping)"), e))?,
                None => t,
            })
        } else {
            None
        };
        samples.push(Sample { demo, transcript });
    }
    Ok(samples)
}
