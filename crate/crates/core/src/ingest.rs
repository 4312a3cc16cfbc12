//! Readers and writers for kinematic recordings and gesture transcripts.
//!
//! Two kinematic layouts are understood: the dataset's whitespace-separated
//! 76-column files (of which only the 38 patient-side columns are retained)
//! and a generic CSV with a header row of channel names.
//!
//! Transcript files use 1-based inclusive frame indices. Everything in memory
//! is 0-based; the conversion happens only in [`parse_transcript`] and
//! [`Transcript::to_text`].

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Columns per line in the dataset kinematics files (4 manipulators x 19).
pub const JIGSAWS_COLUMNS: usize = 76;
/// Patient-side columns kept from each line (the last 38).
pub const PSM_COLUMNS: usize = 38;
/// Kinematic variables recorded per arm.
pub const VARIABLES_PER_ARM: usize = 19;
/// Sample rate implied by the dataset files.
pub const JIGSAWS_SAMPLE_RATE_HZ: f64 = 30.0;

/// On-disk layout of a kinematic recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    Jigsaws,
    GenericCsv { sample_rate_hz: f64 },
}

/// A raw multi-channel trajectory, `T` frames by `C` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub id: String,
    pub frames: DMatrix<f64>,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
}

impl Demonstration {
    pub fn new(
        id: impl Into<String>,
        frames: DMatrix<f64>,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        if channel_names.len() != frames.ncols() {
            return Err(Error::DimensionMismatch {
                expected: frames.ncols(),
                found: channel_names.len(),
            });
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(pos) = frames.iter().position(|v| !v.is_finite()) {
            let row = pos % frames.nrows();
            return Err(Error::InvalidInput(format!("non-finite value in frame {row}")));
        }
        Ok(Self {
            id: id.into(),
            frames,
            sample_rate_hz,
            channel_names,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.frames.ncols()
    }

    /// Serialize in the given layout. The dataset layout zero-fills the 38
    /// master-side columns that are not retained on parse.
    pub fn to_text(&self, layout: Layout) -> Result<String> {
        let mut out = String::new();
        match layout {
            Layout::Jigsaws => {
                if self.n_channels() != PSM_COLUMNS {
                    return Err(Error::DimensionMismatch {
                        expected: PSM_COLUMNS,
                        found: self.n_channels(),
                    });
                }
                for row in self.frames.row_iter() {
                    let mut fields: Vec<String> =
                        vec!["0".to_string(); JIGSAWS_COLUMNS - PSM_COLUMNS];
                    fields.extend(row.iter().map(|v| v.to_string()));
                    out.push_str(&fields.join(" "));
                    out.push('\n');
                }
            }
            Layout::GenericCsv { .. } => {
                out.push_str(&self.channel_names.join(","));
                out.push('\n');
                for row in self.frames.row_iter() {
                    let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    out.push_str(&fields.join(","));
                    out.push('\n');
                }
            }
        }
        Ok(out)
    }
}

/// Channel names of the 38 retained patient-side columns, PSM1 then PSM2.
pub fn psm_channel_names() -> Vec<String> {
    let per_arm = [
        "pos_x", "pos_y", "pos_z", "rot_00", "rot_01", "rot_02", "rot_10", "rot_11", "rot_12",
        "rot_20", "rot_21", "rot_22", "vel_x", "vel_y", "vel_z", "angvel_x", "angvel_y",
        "angvel_z", "gripper",
    ];
    ["psm1", "psm2"]
        .iter()
        .flat_map(|arm| per_arm.iter().map(move |v| format!("{arm}_{v}")))
        .collect()
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: '{token}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value: '{token}'"),
        });
    }
    Ok(v)
}

/// Parse a kinematic recording.
pub fn parse_kinematics(id: &str, text: &str, layout: Layout) -> Result<Demonstration> {
    let mut rows: Vec<f64> = Vec::new();
    let mut n_rows = 0usize;
    let (names, rate) = match layout {
        Layout::Jigsaws => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.len() != JIGSAWS_COLUMNS {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!(
                            "expected {JIGSAWS_COLUMNS} columns, found {}",
                            tokens.len()
                        ),
                    });
                }
                for tok in &tokens[JIGSAWS_COLUMNS - PSM_COLUMNS..] {
                    rows.push(parse_number(tok, i + 1)?);
                }
                n_rows += 1;
            }
            (psm_channel_names(), JIGSAWS_SAMPLE_RATE_HZ)
        }
        Layout::GenericCsv { sample_rate_hz } => {
            let mut lines = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty());
            let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
            let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
            for (i, line) in lines {
                let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
                if tokens.len() != names.len() {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!(
                            "expected {} columns, found {}",
                            names.len(),
                            tokens.len()
                        ),
                    });
                }
                for tok in tokens {
                    rows.push(parse_number(tok, i + 1)?);
                }
                n_rows += 1;
            }
            (names, sample_rate_hz)
        }
    };
    if n_rows == 0 {
        return Err(Error::EmptyInput);
    }
    let frames = DMatrix::from_row_slice(n_rows, names.len(), &rows);
    Demonstration::new(id, frames, rate, names)
}

/// One annotated segment. Frames are 0-based and inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Segment {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Ordered, non-overlapping list of labelled segments.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    pub segments: Vec<Segment>,
}

impl Transcript {
    /// Build from segments, sorting them and rejecting reversed or overlapping ranges.
    pub fn new(mut segments: Vec<Segment>) -> Result<Self> {
        segments.sort_by_key(|s| s.start);
        for s in &segments {
            if s.start > s.end {
                return Err(Error::InvalidInput(format!(
                    "segment '{}' has start {} after end {}",
                    s.label,
                    s.start + 1,
                    s.end + 1
                )));
            }
        }
        for w in segments.windows(2) {
            if w[1].start <= w[0].end {
                return Err(Error::InvalidInput(format!(
                    "segments '{}' ({}..{}) and '{}' ({}..{}) overlap",
                    w[0].label,
                    w[0].start + 1,
                    w[0].end + 1,
                    w[1].label,
                    w[1].start + 1,
                    w[1].end + 1
                )));
            }
        }
        Ok(Self { segments })
    }

    /// Compress a per-frame sequence into runs. `None` frames are left uncovered.
    pub fn from_frame_labels<S: AsRef<str>>(labels: &[Option<S>]) -> Self {
        let mut segments: Vec<Segment> = Vec::new();
        for (i, label) in labels.iter().enumerate() {
            let Some(label) = label else { continue };
            let label = label.as_ref();
            match segments.last_mut() {
                Some(last) if last.end + 1 == i && last.label == label => last.end = i,
                _ => segments.push(Segment::new(i, i, label)),
            }
        }
        Self { segments }
    }

    /// Frames covered by some segment.
    pub fn labelled_frames(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    /// Serialize using the dataset's 1-based "start end label" lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            let _ = writeln!(out, "{} {} {}", s.start + 1, s.end + 1, s.label);
        }
        out
    }
}

/// Parse "start end label" lines (1-based inclusive frames).
pub fn parse_transcript(text: &str) -> Result<Transcript> {
    let mut segments = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 'start end label', found {} fields", tokens.len()),
            });
        }
        let frame = |tok: &str| -> Result<usize> {
            let v: usize = tok.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("not a frame index: '{tok}'"),
            })?;
            if v == 0 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "frame indices start at 1".into(),
                });
            }
            Ok(v - 1)
        };
        let start = frame(tokens[0])?;
        let end = frame(tokens[1])?;
        if start > end {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("start {} is after end {}", start + 1, end + 1),
            });
        }
        segments.push(Segment::new(start, end, tokens[2]));
    }
    Transcript::new(segments)
}

/// Per-frame labels, `None` where no segment covers the frame.
pub fn frame_labels(t: &Transcript, n_frames: usize) -> Result<Vec<Option<String>>> {
    let mut out = vec![None; n_frames];
    for s in &t.segments {
        if s.end >= n_frames {
            return Err(Error::InvalidInput(format!(
                "segment '{}' ends at frame {} but the trajectory has {} frames",
                s.label,
                s.end + 1,
                n_frames
            )));
        }
        for slot in &mut out[s.start..=s.end] {
            *slot = Some(s.label.clone());
        }
    }
    Ok(out)
}

/// Per-frame labels with uncovered frames set to `fill`.
pub fn expand_labels(t: &Transcript, n_frames: usize, fill: &str) -> Result<Vec<String>> {
    Ok(frame_labels(t, n_frames)?
        .into_iter()
        .map(|l| l.unwrap_or_else(|| fill.to_string()))
        .collect())
}
