#![allow(dead_code)]

use std::fs;
use std::path::Path;

use kinseg::ingest::{psm_channel_names, Demonstration, Layout, Segment, Transcript};
use kinseg_cli::commands::{synth, SynthParams};
use kinseg_cli::config::{LayoutKind, RunConfig};
use nalgebra::{DMatrix, Rotation3, Vector3};

/// Deterministic jitter in [-1, 1].
fn jitter(i: usize, j: usize, seed: u64) -> f64 {
    let x = (i as f64 * 12.9898 + j as f64 * 78.233 + seed as f64 * 37.719).sin() * 43758.5453;
    2.0 * (x - x.floor()) - 1.0
}

/// A two-arm recording cycling through gestures G1..G3, each with its own
/// direction of travel, rotation axis and gripper state.
pub fn gesture_recording(id: &str, seed: u64, lengths: &[usize]) -> (Demonstration, Transcript) {
    let n: usize = lengths.iter().sum();
    let dirs = [
        Vector3::new(1.0, 0.2, 0.0),
        Vector3::new(-0.3, 1.0, 0.4),
        Vector3::new(0.0, -0.5, -1.0),
    ];
    let mut frames = DMatrix::zeros(n, 38);
    let mut segments = Vec::new();
    let mut pos = [Vector3::new(-0.05, 0.0, 0.0), Vector3::new(0.05, 0.0, 0.0)];
    let mut angle = [0.0f64; 2];
    let mut t = 0;
    for (s, &len) in lengths.iter().enumerate() {
        let g = s % 3;
        segments.push(Segment::new(t, t + len - 1, format!("G{}", g + 1)));
        for _ in 0..len {
            for arm in 0..2 {
                let off = arm * 19;
                let sign = if arm == 0 { -1.0 } else { 1.0 };
                let vel = dirs[g] * (0.01 * sign) + Vector3::new(jitter(t, arm, seed), jitter(t, arm + 7, seed), 0.0) * 0.002;
                pos[arm] += vel / 30.0;
                angle[arm] += 0.02 * (g as f64 + 1.0) * sign;
                let axis = nalgebra::Unit::new_normalize(dirs[(g + arm) % 3]);
                let r = Rotation3::from_axis_angle(&axis, angle[arm]);
                for k in 0..3 {
                    frames[(t, off + k)] = pos[arm][k];
                    frames[(t, off + 12 + k)] = vel[k];
                    frames[(t, off + 15 + k)] = 0.3 * (g as f64 - 1.0) + 0.01 * jitter(t, off + k, seed);
                }
                for a in 0..3 {
                    for b in 0..3 {
                        frames[(t, off + 3 + 3 * a + b)] = r[(a, b)];
                    }
                }
                frames[(t, off + 18)] = if g == 1 { 0.8 } else { -0.2 } + 0.05 * jitter(t, off, seed);
            }
            t += 1;
        }
    }
    let demo = Demonstration::new(id, frames, 30.0, psm_channel_names()).unwrap();
    (demo, Transcript::new(segments).unwrap())
}

/// Write recordings in the dataset directory layout.
pub fn write_jigsaws(dir: &Path, demos: &[(Demonstration, Transcript)]) {
    let kin = dir.join("kinematics").join("AllGestures");
    let tr = dir.join("transcriptions");
    fs::create_dir_all(&kin).unwrap();
    fs::create_dir_all(&tr).unwrap();
    for (d, t) in demos {
        fs::write(kin.join(format!("{}.txt", d.id)), d.to_text(Layout::Jigsaws).unwrap()).unwrap();
        fs::write(tr.join(format!("{}.txt", d.id)), t.to_text()).unwrap();
    }
}

pub fn jigsaws_fixture(dir: &Path) {
    let demos: Vec<_> = (0..3)
        .map(|k| {
            let lengths: Vec<usize> = (0..9).map(|s| 60 + ((s * 7 + k * 13) % 5) * 10).collect();
            gesture_recording(&format!("Task_B00{}", k + 1), k as u64, &lengths)
        })
        .collect();
    write_jigsaws(dir, &demos);
}

/// Synthetic CSV data set plus a matching run configuration.
pub fn synth_fixture(dir: &Path, params: SynthParams) -> RunConfig {
    let data = dir.join("data");
    synth(&SynthParams {
        output: data.clone(),
        ..params
    })
    .unwrap();
    RunConfig {
        layout: LayoutKind::Csv,
        inputs: vec![data],
        output: dir.join("out"),
        ..RunConfig::default()
    }
}
