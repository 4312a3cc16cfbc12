//! Run configuration, loaded from a TOML file and overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kinseg::gmm::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use kinseg::ingest::JIGSAWS_SAMPLE_RATE_HZ;
use kinseg::preprocess::{FeatureSubset, DEFAULT_CUTOFF_HZ, DEFAULT_SUBSAMPLE};
use serde::{Deserialize, Deserializer};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    /// `<dir>/kinematics/AllGestures/<id>.txt` with `<dir>/transcriptions/<id>.txt`.
    Jigsaws,
    /// `<dir>/<id>.csv` with `<dir>/<id>.transcript`.
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Kinematic features for the dataset layout, raw channels for CSV.
    Auto,
    /// Quaternions, distances, filter, z-score and subsampling.
    Kinematic,
    /// Input channels used as they are.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    Weak,
    Kmeans,
}

macro_rules! keyword_enum {
    ($ty:ty, $($name:literal => $variant:expr),+) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(format!(
                        "unknown value '{other}' (expected one of: {})",
                        [$($name),+].join(", ")
                    )),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(LayoutKind, "jigsaws" => LayoutKind::Jigsaws, "csv" => LayoutKind::Csv);
keyword_enum!(FeatureMode, "auto" => FeatureMode::Auto, "kinematic" => FeatureMode::Kinematic, "raw" => FeatureMode::Raw);
keyword_enum!(InitMethod, "weak" => InitMethod::Weak, "kmeans" => InitMethod::Kmeans);

fn subset_from_str<'de, D: Deserializer<'de>>(d: D) -> Result<FeatureSubset, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub layout: LayoutKind,
    /// Sample rate of CSV inputs.
    pub sample_rate_hz: f64,
    pub features: FeatureMode,
    pub fc_hz: f64,
    pub subsample_factor: usize,
    pub window: usize,
    #[serde(deserialize_with = "subset_from_str")]
    pub feature_subset: FeatureSubset,
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub seed: u64,
    pub init_method: InitMethod,
    /// Number of k-means clusters; defaults to the dictionary size.
    pub clusters: Option<usize>,
    pub inputs: Vec<PathBuf>,
    /// Restrict the run to these demonstrations (all when empty).
    pub demo_ids: Vec<String>,
    /// Annotated demonstrations that seed the weak initialization. When
    /// empty, the first annotated demonstration is used.
    pub init_ids: Vec<String>,
    pub mapping: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            layout: LayoutKind::Jigsaws,
            sample_rate_hz: JIGSAWS_SAMPLE_RATE_HZ,
            features: FeatureMode::Auto,
            fc_hz: DEFAULT_CUTOFF_HZ,
            subsample_factor: DEFAULT_SUBSAMPLE,
            window: 2,
            feature_subset: FeatureSubset::All,
            em_tol: DEFAULT_TOL,
            em_max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            init_method: InitMethod::Weak,
            clusters: None,
            inputs: vec![],
            demo_ids: vec![],
            init_ids: vec![],
            mapping: None,
            boundaries: None,
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parse a TOML config. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.inputs.iter_mut().for_each(fix);
        cfg.mapping.iter_mut().for_each(fix);
        cfg.boundaries.iter_mut().for_each(fix);
        fix(&mut cfg.output);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn kinematic_features(&self) -> bool {
        match self.features {
            FeatureMode::Kinematic => true,
            FeatureMode::Raw => false,
            FeatureMode::Auto => self.layout == LayoutKind::Jigsaws,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.inputs.is_empty() {
            return bad("no input directories given".into());
        }
        if !(self.fc_hz > 0.0) {
            return bad(format!("fc_hz must be positive, got {}", self.fc_hz));
        }
        if !(self.sample_rate_hz > 0.0) {
            return bad(format!("sample_rate_hz must be positive, got {}", self.sample_rate_hz));
        }
        if self.subsample_factor == 0 {
            return bad("subsample_factor must be at least 1".into());
        }
        if !(self.em_tol > 0.0) {
            return bad(format!("em_tol must be positive, got {}", self.em_tol));
        }
        if self.em_max_iter == 0 {
            return bad("em_max_iter must be at least 1".into());
        }
        if self.clusters == Some(0) {
            return bad("clusters must be at least 1".into());
        }
        Ok(())
    }
}
