//! One segmentation run: features, initialization, EM, prediction and
//! evaluation over a set of demonstrations.

use std::collections::BTreeSet;

use kinseg::dictionary::dictionary_labels;
use kinseg::gmm::{
    em_fit, kmeans_init, predict_labels, transition_points, weak_init, EmConfig, GmmModel,
    Prediction, TransitionPoint,
};
use kinseg::ingest::{frame_labels, Transcript};
use kinseg::metrics::{accuracy, nmi, silhouette_index, EvaluationReport};
use kinseg::preprocess::{
    augment, build_features_with, AugmentedMatrix, FeatureMatrix, PreprocessConfig,
};
use nalgebra::DMatrix;

use crate::config::{InitMethod, RunConfig};
use crate::dataset::Sample;
use crate::error::CliError;

/// Per-demonstration result of a run.
#[derive(Debug, Clone)]
pub struct DemoRun {
    pub id: String,
    pub features: FeatureMatrix,
    pub augmented: AugmentedMatrix,
    /// Annotation of each augmented row (None where unannotated).
    pub row_truth: Vec<Option<String>>,
    pub prediction: Prediction,
    /// Prediction projected back onto every original frame.
    pub frame_prediction: Vec<String>,
    /// Annotation of every original frame, when a transcript exists.
    pub frame_truth: Option<Vec<Option<String>>>,
}

impl DemoRun {
    pub fn predicted_transcript(&self) -> Transcript {
        let labels: Vec<Option<&str>> = self.frame_prediction.iter().map(|l| Some(l.as_str())).collect();
        Transcript::from_frame_labels(&labels)
    }

    pub fn transitions(&self) -> Result<Vec<TransitionPoint>, CliError> {
        transition_points(&self.prediction.labels, &self.augmented)
            .map_err(|e| CliError::from_core(&self.id, e))
    }

    /// Column names of the augmented state.
    pub fn augmented_names(&self) -> Vec<String> {
        (0..=self.augmented.window)
            .flat_map(|lag| {
                self.features
                    .channel_names
                    .iter()
                    .map(move |n| format!("{n}_lag{lag}"))
            })
            .collect()
    }

    /// Annotated frames as (prediction, truth) pairs.
    pub fn evaluated_frames(&self) -> Vec<(String, String)> {
        match &self.frame_truth {
            None => vec![],
            Some(truth) => truth
                .iter()
                .zip(&self.frame_prediction)
                .filter_map(|(t, p)| t.as_ref().map(|t| (p.clone(), t.clone())))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoScore {
    pub id: String,
    pub n_frames_evaluated: usize,
    pub accuracy: Option<f64>,
    pub nmi: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: GmmModel,
    pub demos: Vec<DemoRun>,
    /// Pooled metrics; absent when no demonstration is annotated.
    pub report: Option<EvaluationReport>,
    pub per_demo: Vec<DemoScore>,
}

/// Feature matrix for one demonstration under the configured mode and subset.
pub fn demo_features(cfg: &RunConfig, sample: &Sample) -> Result<FeatureMatrix, CliError> {
    let id = &sample.demo.id;
    let fm = if cfg.kinematic_features() {
        let pre = PreprocessConfig {
            cutoff_hz: cfg.fc_hz,
            subsample_factor: cfg.subsample_factor,
        };
        build_features_with(&sample.demo, &cfg.feature_subset, &pre)
    } else {
        let raw = FeatureMatrix::from_raw(&sample.demo);
        cfg.feature_subset
            .kept_indices(raw.n_channels())
            .and_then(|keep| raw.select_channels(&keep))
    };
    fm.map_err(|e| CliError::from_core(format!("demonstration '{id}'"), e))
}

/// Project row predictions onto the original frame grid: frame `f` takes the
/// prediction of the last row whose source frame is at or before `f`.
pub fn upsample(fm: &FeatureMatrix, n_rows: usize, labels: &[String], n_frames: usize) -> Vec<String> {
    (0..n_frames)
        .map(|f| {
            let row = f.saturating_sub(fm.frame_origin) / fm.frame_stride;
            labels[row.min(n_rows - 1)].clone()
        })
        .collect()
}

fn silhouette_or_none(x: &AugmentedMatrix, labels: &[&str]) -> Result<Option<f64>, CliError> {
    let distinct: BTreeSet<&str> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Ok(None);
    }
    silhouette_index(x, labels)
        .map(Some)
        .map_err(|e| CliError::from_core("silhouette", e))
}

fn initial_model(
    cfg: &RunConfig,
    samples: &[Sample],
    prepared: &[(FeatureMatrix, AugmentedMatrix, Vec<Option<String>>)],
    all: &AugmentedMatrix,
) -> Result<GmmModel, CliError> {
    match cfg.init_method {
        InitMethod::Weak => {
            let ids: Vec<String> = if cfg.init_ids.is_empty() {
                let first = samples.iter().find(|s| s.transcript.is_some()).ok_or_else(|| {
                    CliError::Data("weak initialization needs at least one annotated demonstration".into())
                })?;
                vec![first.demo.id.clone()]
            } else {
                cfg.init_ids.clone()
            };
            let mut labelled = Vec::with_capacity(ids.len());
            for id in &ids {
                let i = samples.iter().position(|s| &s.demo.id == id).ok_or_else(|| {
                    CliError::Data(format!("initialization demonstration '{id}' is not among the inputs"))
                })?;
                if samples[i].transcript.is_none() {
                    return Err(CliError::Data(format!(
                        "initialization demonstration '{id}' has no transcript"
                    )));
                }
                labelled.push((&prepared[i].1, prepared[i].2.as_slice()));
            }
            weak_init(&labelled).map_err(|e| CliError::from_core("weak initialization", e))
        }
        InitMethod::Kmeans => {
            let k = match cfg.clusters {
                Some(k) => k,
                None => {
                    let ts: Vec<Transcript> = samples.iter().filter_map(|s| s.transcript.clone()).collect();
                    let n = dictionary_labels(&ts).len();
                    if n == 0 {
                        return Err(CliError::Usage(
                            "k-means needs `clusters` when no demonstration is annotated".into(),
                        ));
                    }
                    n
                }
            };
            kmeans_init(all, k, cfg.seed).map_err(|e| CliError::from_core("k-means initialization", e))
        }
    }
}

/// Run the full pipeline on already loaded demonstrations.
pub fn run_on(cfg: &RunConfig, samples: &[Sample]) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(CliError::Data("no demonstrations to segment".into()));
    }
    let mut prepared = Vec::with_capacity(samples.len());
    for s in samples {
        let fm = demo_features(cfg, s)?;
        let aug = augment(&fm, cfg.window)
            .map_err(|e| CliError::from_core(format!("demonstration '{}'", s.demo.id), e))?;
        let row_truth = match &s.transcript {
            Some(t) => {
                let frames = frame_labels(t, s.demo.n_frames())
                    .map_err(|e| CliError::from_core(format!("demonstration '{}'", s.demo.id), e))?;
                (0..aug.n_rows()).map(|r| frames[fm.source_frame(r)].clone()).collect()
            }
            None => vec![None; aug.n_rows()],
        };
        prepared.push((fm, aug, row_truth));
    }
    let parts: Vec<&AugmentedMatrix> = prepared.iter().map(|p| &p.1).collect();
    let all = AugmentedMatrix::concat(&parts).map_err(|e| CliError::from_core("stacking features", e))?;

    let init = initial_model(cfg, samples, &prepared, &all)?;
    let em = EmConfig {
        tol: cfg.em_tol,
        max_iter: cfg.em_max_iter,
    };
    let model = em_fit(&all, &init, &em).map_err(|e| CliError::from_core("EM", e))?;

    let mut demos = Vec::with_capacity(samples.len());
    for (s, (fm, aug, row_truth)) in samples.iter().zip(prepared) {
        let prediction =
            predict_labels(&model, &aug).map_err(|e| CliError::from_core(&s.demo.id, e))?;
        let frame_prediction = upsample(&fm, aug.n_rows(), &prediction.labels, s.demo.n_frames());
        let frame_truth = match &s.transcript {
            Some(t) => Some(
                frame_labels(t, s.demo.n_frames()).map_err(|e| CliError::from_core(&s.demo.id, e))?,
            ),
            None => None,
        };
        demos.push(DemoRun {
            id: s.demo.id.clone(),
            features: fm,
            augmented: aug,
            row_truth,
            prediction,
            frame_prediction,
            frame_truth,
        });
    }

    let identity = model.is_labelled();
    let mut per_demo = Vec::new();
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for d in &demos {
        if d.frame_truth.is_none() {
            continue;
        }
        let pairs = d.evaluated_frames();
        if pairs.is_empty() {
            continue;
        }
        let (p, t): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
        let metric = |r: kinseg::Result<f64>| r.map_err(|e| CliError::from_core(&d.id, e));
        per_demo.push(DemoScore {
            id: d.id.clone(),
            n_frames_evaluated: t.len(),
            accuracy: if identity { Some(metric(accuracy(&p, &t))?) } else { None },
            nmi: metric(nmi(&p, &t))?,
        });
        pred.extend(p);
        truth.extend(t);
    }

    let report = if truth.is_empty() {
        None
    } else {
        let all_pred: Vec<&str> = demos
            .iter()
            .flat_map(|d| d.prediction.labels.iter().map(String::as_str))
            .collect();
        let si_pred = silhouette_or_none(&all, &all_pred)?;
        let mut rows = Vec::new();
        let mut row_labels = Vec::new();
        let mut offset = 0;
        for d in &demos {
            for (r, l) in d.row_truth.iter().enumerate() {
                if let Some(l) = l {
                    rows.push(offset + r);
                    row_labels.push(l.as_str());
                }
            }
            offset += d.augmented.n_rows();
        }
        let si_truth = if rows.is_empty() {
            None
        } else {
            let x: DMatrix<f64> = all.values.select_rows(&rows);
            silhouette_or_none(&AugmentedMatrix::from_matrix(x), &row_labels)?
        };
        Some(
            EvaluationReport::new(&pred, &truth, si_pred, si_truth, identity)
                .map_err(|e| CliError::from_core("evaluation", e))?,
        )
    };

    Ok(RunOutcome {
        model,
        demos,
        report,
        per_demo,
    })
}
