//! Kinematic feature extraction and window augmentation.
//!
//! The 38 patient-side channels of a [`Demonstration`] become the 32-channel
//! feature vector (per arm: position, orientation quaternion, linear and
//! angular velocity, gripper angle; then four inter-arm distance signals),
//! low-pass filtered, standardized and subsampled. [`augment`] stacks
//! `W + 1` consecutive feature vectors into one row.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{Error, Result};
use crate::ingest::{Demonstration, PSM_COLUMNS, VARIABLES_PER_ARM};

/// Channels in the full feature vector.
pub const FULL_FEATURES: usize = 32;
/// Default low-pass cut-off.
pub const DEFAULT_CUTOFF_HZ: f64 = 1.5;
/// Default subsampling factor (30 Hz to 10 Hz).
pub const DEFAULT_SUBSAMPLE: usize = 3;
/// Orthonormality tolerance for [`rotmat_to_quat`].
pub const ROTATION_TOLERANCE: f64 = 1e-6;
/// Orthonormality tolerance used on recorded rotation matrices, which are
/// stored with about six significant digits.
pub const RECORDED_ROTATION_TOLERANCE: f64 = 1e-3;

// Offsets of each arm inside the 38 retained columns: the first 19 columns
// are the left patient-side arm, the next 19 the right one.
const LEFT_ARM: usize = 0;
const RIGHT_ARM: usize = VARIABLES_PER_ARM;

/// Unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation matrix of a unit quaternion.
    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let Quaternion { w, x, y, z } = *self;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }
}

/// Convert a proper rotation matrix to a unit quaternion with `w >= 0`.
pub fn rotmat_to_quat(r: &Matrix3<f64>) -> Result<Quaternion> {
    rotmat_to_quat_with_tolerance(r, ROTATION_TOLERANCE)
}

/// As [`rotmat_to_quat`] with an explicit orthonormality tolerance.
///
/// Uses Shepperd's method: the quaternion component with the largest
/// magnitude is recovered from the diagonal first, so no branch divides by a
/// small number.
pub fn rotmat_to_quat_with_tolerance(r: &Matrix3<f64>, tolerance: f64) -> Result<Quaternion> {
    let gram_error = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det_error = (r.determinant() - 1.0).abs();
    let deviation = gram_error.max(det_error);
    if !(deviation <= tolerance) {
        return Err(Error::NotOrthonormal { deviation });
    }

    let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
    let q = if trace >= r[(0, 0)].max(r[(1, 1)]).max(r[(2, 2)]) {
        let s = 2.0 * (1.0 + trace).sqrt();
        Quaternion::new(
            0.25 * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        )
    } else if r[(0, 0)] >= r[(1, 1)] && r[(0, 0)] >= r[(2, 2)] {
        let s = 2.0 * (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt();
        Quaternion::new(
            (r[(2, 1)] - r[(1, 2)]) / s,
            0.25 * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        )
    } else if r[(1, 1)] >= r[(2, 2)] {
        let s = 2.0 * (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt();
        Quaternion::new(
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            0.25 * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        )
    } else {
        let s = 2.0 * (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt();
        Quaternion::new(
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            0.25 * s,
        )
    };
    let n = q.norm();
    let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
    Ok(Quaternion::new(
        sign * q.w / n,
        sign * q.x / n,
        sign * q.y / n,
        sign * q.z / n,
    ))
}

/// Second-order Butterworth low-pass section, bilinear transform with the
/// cut-off prewarped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// Denominator `[a1, a2]`, with `a0 = 1`.
    pub a: [f64; 2],
}

impl Biquad {
    pub fn butterworth_lowpass(fc_hz: f64, fs_hz: f64) -> Result<Self> {
        if !(fc_hz > 0.0 && fc_hz < fs_hz / 2.0) {
            return Err(Error::InvalidInput(format!(
                "cut-off {fc_hz} Hz must lie in (0, {}) Hz",
                fs_hz / 2.0
            )));
        }
        let k = (PI * fc_hz / fs_hz).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Ok(Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - SQRT_2 * k + k2) * norm],
        })
    }

    /// Single causal pass (transposed direct form II) starting from the
    /// steady state for a constant input equal to `signal[0]`.
    fn run(&self, signal: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let x0 = signal[0];
        let mut z2 = (b2 - a2) * x0;
        let mut z1 = (1.0 - b0) * x0;
        for v in signal.iter_mut() {
            let x = *v;
            let y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            *v = y;
        }
    }
}

/// Zero-phase low-pass filter: the Butterworth section applied forward then
/// backward, with odd reflective padding of 3 x filter order at both ends.
pub fn lowpass_filter(signal: &[f64], fc_hz: f64, fs_hz: f64) -> Result<Vec<f64>> {
    let biquad = Biquad::butterworth_lowpass(fc_hz, fs_hz)?;
    let n = signal.len();
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "signal of length {n} is too short to filter (need at least 4)"
        )));
    }
    let pad = 6.min(n - 1);
    let first = signal[0];
    let last = signal[n - 1];
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

    biquad.run(&mut ext);
    ext.reverse();
    biquad.run(&mut ext);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// Standardize to zero mean and unit (population) standard deviation.
/// A constant signal maps to all zeros.
pub fn zscore(signal: &[f64]) -> Result<Vec<f64>> {
    let n = signal.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "z-score needs at least 2 samples, got {n}"
        )));
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let var = signal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std <= 1e-12 * (1.0 + mean.abs()) {
        return Ok(vec![0.0; n]);
    }
    Ok(signal.iter().map(|v| (v - mean) / std).collect())
}

/// Per-axis and Euclidean distance between the two end-effectors:
/// columns `(d_x, d_y, d_z, d)` with `d_axis = right - left`.
pub fn distance_features(pos_right: &DMatrix<f64>, pos_left: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if pos_right.nrows() != pos_left.nrows() {
        return Err(Error::DimensionMismatch {
            expected: pos_right.nrows(),
            found: pos_left.nrows(),
        });
    }
    for m in [pos_right, pos_left] {
        if m.ncols() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: m.ncols(),
            });
        }
    }
    let t = pos_right.nrows();
    let mut out = DMatrix::zeros(t, 4);
    for i in 0..t {
        let mut sq = 0.0;
        for axis in 0..3 {
            let d = pos_right[(i, axis)] - pos_left[(i, axis)];
            out[(i, axis)] = d;
            sq += d * d;
        }
        out[(i, 3)] = sq.sqrt();
    }
    Ok(out)
}

/// Preprocessed trajectory. Row `i` corresponds to frame
/// `frame_origin + i * frame_stride` of the original recording.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: DMatrix<f64>,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    pub frame_origin: usize,
    pub frame_stride: usize,
}

impl FeatureMatrix {
    pub fn new(values: DMatrix<f64>, sample_rate_hz: f64, channel_names: Vec<String>) -> Result<Self> {
        if channel_names.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.ncols(),
                found: channel_names.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self {
            values,
            sample_rate_hz,
            channel_names,
            frame_origin: 0,
            frame_stride: 1,
        })
    }

    /// Use a demonstration's channels unchanged as features.
    pub fn from_raw(demo: &Demonstration) -> Self {
        Self {
            values: demo.frames.clone(),
            sample_rate_hz: demo.sample_rate_hz,
            channel_names: demo.channel_names.clone(),
            frame_origin: 0,
            frame_stride: 1,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }

    /// Original frame index of row `i`.
    pub fn source_frame(&self, row: usize) -> usize {
        self.frame_origin + row * self.frame_stride
    }

    /// Keep only the given (0-based) channels, in order.
    pub fn select_channels(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&c| c >= self.n_channels()) {
            return Err(Error::InvalidInput(format!(
                "channel index {} out of range (1..={})",
                bad + 1,
                self.n_channels()
            )));
        }
        Ok(Self {
            values: self.values.select_columns(keep),
            channel_names: keep.iter().map(|&c| self.channel_names[c].clone()).collect(),
            ..self.clone()
        })
    }
}

/// Keep rows `0, factor, 2 * factor, ...`.
pub fn subsample(fm: &FeatureMatrix, factor: usize) -> Result<FeatureMatrix> {
    if factor == 0 {
        return Err(Error::InvalidInput("subsample factor must be at least 1".into()));
    }
    let rows: Vec<usize> = (0..fm.n_rows()).step_by(factor).collect();
    Ok(FeatureMatrix {
        values: fm.values.select_rows(&rows),
        sample_rate_hz: fm.sample_rate_hz / factor as f64,
        channel_names: fm.channel_names.clone(),
        frame_origin: fm.frame_origin,
        frame_stride: fm.frame_stride * factor,
    })
}

/// Which of the 32 channels to keep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSubset {
    All,
    NoPose,
    NoVelocity,
    NoDistance,
    /// Explicit 1-based channel indices to keep.
    Indices(Vec<usize>),
}

impl FeatureSubset {
    /// 1-based channel indices dropped by the named subsets.
    fn dropped(&self) -> Vec<usize> {
        match self {
            FeatureSubset::All | FeatureSubset::Indices(_) => vec![],
            FeatureSubset::NoPose => (1..=7).chain(15..=21).collect(),
            FeatureSubset::NoVelocity => (8..=13).chain(22..=27).collect(),
            FeatureSubset::NoDistance => (29..=32).collect(),
        }
    }

    /// 0-based indices kept out of `n_channels`. Named ablations other than
    /// `all` only apply to the 32-channel kinematic feature vector.
    pub fn kept_indices(&self, n_channels: usize) -> Result<Vec<usize>> {
        match self {
            FeatureSubset::All => Ok((0..n_channels).collect()),
            FeatureSubset::Indices(idx) => {
                if idx.is_empty() {
                    return Err(Error::InvalidInput("empty channel index list".into()));
                }
                idx.iter()
                    .map(|&i| {
                        if i == 0 || i > n_channels {
                            Err(Error::InvalidInput(format!(
                                "channel index {i} out of range (1..={n_channels})"
                            )))
                        } else {
                            Ok(i - 1)
                        }
                    })
                    .collect()
            }
            named => {
                if n_channels != FULL_FEATURES {
                    return Err(Error::InvalidInput(format!(
                        "feature subset '{named}' needs the {FULL_FEATURES}-channel kinematic features, found {n_channels} channels"
                    )));
                }
                let dropped = named.dropped();
                Ok((0..n_channels).filter(|c| !dropped.contains(&(c + 1))).collect())
            }
        }
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSubset::All => f.write_str("all"),
            FeatureSubset::NoPose => f.write_str("no-pose"),
            FeatureSubset::NoVelocity => f.write_str("no-velocity"),
            FeatureSubset::NoDistance => f.write_str("no-distance"),
            FeatureSubset::Indices(idx) => {
                let s: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
                f.write_str(&s.join(","))
            }
        }
    }
}

impl FromStr for FeatureSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(FeatureSubset::All),
            "no-pose" => Ok(FeatureSubset::NoPose),
            "no-velocity" => Ok(FeatureSubset::NoVelocity),
            "no-distance" => Ok(FeatureSubset::NoDistance),
            other => other
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<usize>().map_err(|_| {
                        Error::InvalidInput(format!(
                            "unknown feature subset '{s}' (expected all, no-pose, no-velocity, no-distance or an index list)"
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(FeatureSubset::Indices),
        }
    }
}

/// Steps of the kinematic feature pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Quaternions,
    Distances,
    LowPass,
    Normalize,
    Subsample,
}

/// Stage order applied by [`build_features`].
pub const PIPELINE: [Stage; 5] = [
    Stage::Quaternions,
    Stage::Distances,
    Stage::LowPass,
    Stage::Normalize,
    Stage::Subsample,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub cutoff_hz: f64,
    pub subsample_factor: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: DEFAULT_CUTOFF_HZ,
            subsample_factor: DEFAULT_SUBSAMPLE,
        }
    }
}

/// Names of the 32 feature channels.
pub fn feature_channel_names() -> Vec<String> {
    let per_arm = [
        "pos_x", "pos_y", "pos_z", "quat_w", "quat_x", "quat_y", "quat_z", "vel_x", "vel_y",
        "vel_z", "angvel_x", "angvel_y", "angvel_z", "gripper",
    ];
    let mut names: Vec<String> = ["right", "left"]
        .iter()
        .flat_map(|arm| per_arm.iter().map(move |v| format!("{arm}_{v}")))
        .collect();
    names.extend(["dist_x", "dist_y", "dist_z", "dist"].map(String::from));
    names
}

fn arm_features(frames: &DMatrix<f64>, offset: usize) -> Result<DMatrix<f64>> {
    let t = frames.nrows();
    let mut out = DMatrix::zeros(t, 14);
    for i in 0..t {
        let v = |j: usize| frames[(i, offset + j)];
        let r = Matrix3::new(v(3), v(4), v(5), v(6), v(7), v(8), v(9), v(10), v(11));
        let q = rotmat_to_quat_with_tolerance(&r, RECORDED_ROTATION_TOLERANCE).map_err(|e| {
            Error::InvalidInput(format!("frame {}: {e}", i + 1))
        })?;
        for j in 0..3 {
            out[(i, j)] = v(j);
        }
        for (j, c) in q.to_array().into_iter().enumerate() {
            out[(i, 3 + j)] = c;
        }
        for j in 0..7 {
            out[(i, 7 + j)] = v(12 + j);
        }
    }
    Ok(out)
}

/// Build the kinematic feature matrix with the default parameters.
pub fn build_features(demo: &Demonstration, subset: &FeatureSubset) -> Result<FeatureMatrix> {
    build_features_with(demo, subset, &PreprocessConfig::default())
}

/// Build the kinematic feature matrix: quaternions, distance signals from the
/// raw positions, low-pass filter, per-channel z-score, subsample, then drop
/// the channels excluded by `subset`.
pub fn build_features_with(
    demo: &Demonstration,
    subset: &FeatureSubset,
    config: &PreprocessConfig,
) -> Result<FeatureMatrix> {
    if demo.n_channels() != PSM_COLUMNS {
        return Err(Error::DimensionMismatch {
            expected: PSM_COLUMNS,
            found: demo.n_channels(),
        });
    }
    let t = demo.n_frames();
    let mut values = DMatrix::zeros(t, 0);
    let mut fm = None;
    for stage in PIPELINE {
        match stage {
            Stage::Quaternions => {
                let right = arm_features(&demo.frames, RIGHT_ARM)?;
                let left = arm_features(&demo.frames, LEFT_ARM)?;
                values = DMatrix::zeros(t, 28);
                values.columns_mut(0, 14).copy_from(&right);
                values.columns_mut(14, 14).copy_from(&left);
            }
            Stage::Distances => {
                let right = values.columns(0, 3).into_owned();
                let left = values.columns(14, 3).into_owned();
                let d = distance_features(&right, &left)?;
                values = values.resize_horizontally(FULL_FEATURES, 0.0);
                values.columns_mut(28, 4).copy_from(&d);
            }
            Stage::LowPass => {
                for mut col in values.column_iter_mut() {
                    let filtered =
                        lowpass_filter(col.as_slice(), config.cutoff_hz, demo.sample_rate_hz)?;
                    col.copy_from_slice(&filtered);
                }
            }
            Stage::Normalize => {
                for mut col in values.column_iter_mut() {
                    let z = zscore(col.as_slice())?;
                    col.copy_from_slice(&z);
                }
            }
            Stage::Subsample => {
                let full = FeatureMatrix::new(
                    std::mem::replace(&mut values, DMatrix::zeros(0, 0)),
                    demo.sample_rate_hz,
                    feature_channel_names(),
                )?;
                fm = Some(subsample(&full, config.subsample_factor)?);
            }
        }
    }
    let fm = fm.expect("pipeline ends with subsampling");
    let keep = subset.kept_indices(fm.n_channels())?;
    fm.select_channels(&keep)
}

/// Window-augmented states: row `t` is `[x(t), x(t+1), ..., x(t+W)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMatrix {
    pub values: DMatrix<f64>,
    pub window: usize,
    pub base_channels: usize,
}

impl AugmentedMatrix {
    /// Wrap an arbitrary sample matrix (window 0).
    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        let base_channels = values.ncols();
        Self {
            values,
            window: 0,
            base_channels,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }

    /// Stack several matrices row-wise.
    pub fn concat(parts: &[&AugmentedMatrix]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput)?;
        let dim = first.dimension();
        if let Some(bad) = parts.iter().find(|p| p.dimension() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dimension(),
            });
        }
        let total: usize = parts.iter().map(|p| p.n_rows()).sum();
        let mut values = DMatrix::zeros(total, dim);
        let mut at = 0;
        for p in parts {
            values.rows_mut(at, p.n_rows()).copy_from(&p.values);
            at += p.n_rows();
        }
        Ok(Self {
            values,
            window: first.window,
            base_channels: first.base_channels,
        })
    }
}

/// Stack `window + 1` consecutive rows of `fm`.
pub fn augment(fm: &FeatureMatrix, window: usize) -> Result<AugmentedMatrix> {
    let t = fm.n_rows();
    if t <= window {
        return Err(Error::InvalidInput(format!(
            "trajectory of {t} rows is too short for window {window}"
        )));
    }
    let p = fm.n_channels();
    let rows = t - window;
    let mut values = DMatrix::zeros(rows, p * (window + 1));
    for lag in 0..=window {
        values
            .columns_mut(lag * p, p)
            .copy_from(&fm.values.rows(lag, rows));
    }
    Ok(AugmentedMatrix {
        values,
        window,
        base_channels: p,
    })
}
