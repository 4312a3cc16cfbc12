#![allow(dead_code)]

use std::f64::consts::PI;

use kinseg::ingest::{psm_channel_names, Demonstration};
use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rodrigues' formula, written independently of the library's quaternion code.
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let skew = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + skew * angle.sin() + skew * skew * (1.0 - angle.cos())
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis };
    axis_angle(axis, rng.random_range(0.0..PI))
}

/// A smooth two-arm recording with valid rotation matrices, 38 columns
/// (left arm then right arm, 19 variables each).
pub fn kinematic_demo(t: usize, seed: u64) -> Demonstration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = DMatrix::zeros(t, 38);
    for arm in 0..2 {
        let off = arm * 19;
        let freq: Vec<f64> = (0..19).map(|_| rng.random_range(0.05..3.0)).collect();
        let phase: Vec<f64> = (0..19).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let axis = Vector3::new(rng.random_range(0.1..1.0), rng.random_range(-1.0..1.0), 0.3);
        for i in 0..t {
            let time = i as f64 / 30.0;
            let wave = |j: usize| (2.0 * PI * freq[j] * time + phase[j]).sin();
            for j in 0..3 {
                frames[(i, off + j)] = 0.05 * wave(j) + if arm == 0 { -0.02 } else { 0.03 };
            }
            let r = axis_angle(axis, 1.0 + 0.8 * wave(3));
            for a in 0..3 {
                for b in 0..3 {
                    frames[(i, off + 3 + 3 * a + b)] = r[(a, b)];
                }
            }
            for j in 12..19 {
                frames[(i, off + j)] = wave(j) + 0.05 * rng.random_range(-1.0..1.0);
            }
        }
    }
    Demonstration::new(format!("demo_{seed}"), frames, 30.0, psm_channel_names()).unwrap()
}
