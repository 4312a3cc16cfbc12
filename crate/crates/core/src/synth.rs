//! Synthetic trajectories from a switched linear dynamical system,
//! `x(t+1) = A_k x(t) + w(t)` with `w(t) ~ N(0, Q)` and the regime `k`
//! following a fixed schedule. The regime of each frame is its ground-truth
//! label.
//!
//! Noise is drawn as `L z` with `L` the Cholesky factor of `Q` and `z` a
//! vector of standard normals from a ChaCha8 generator seeded with the
//! model's seed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ingest::Demonstration;

/// Largest spectral radius accepted for a regime matrix.
pub const MAX_SPECTRAL_RADIUS: f64 = 1.05;
/// State norm at which generation is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;
/// Default spectral radius of random regimes.
pub const DEFAULT_CONTRACTION: f64 = 0.95;
/// Minimum Frobenius distance between random regimes.
pub const MIN_REGIME_DISTANCE: f64 = 0.1;
/// Draws allowed per regime in [`make_random_regimes`].
pub const REJECTION_BUDGET: usize = 100;
/// Sample rate written into generated demonstrations.
pub const SYNTH_SAMPLE_RATE_HZ: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedLds {
    pub regimes: Vec<DMatrix<f64>>,
    pub noise_cov: DMatrix<f64>,
    /// `(duration_frames, regime_index)` in order.
    pub schedule: Vec<(usize, usize)>,
    pub x0: DVector<f64>,
    pub seed: u64,
}

/// Label used for regime `k`.
pub fn regime_label(k: usize) -> String {
    format!("R{}", k + 1)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Lower-triangular `L` with `L L^T = m` for symmetric positive
/// semi-definite `m`; zero pivots give zero columns.
pub fn psd_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.ncols(),
        });
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    if (m - m.transpose()).abs().max() > tol.max(1e-12 * scale) {
        return Err(Error::InvalidInput("noise covariance is not symmetric".into()));
    }
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(Error::InvalidInput(
                "noise covariance is not positive semi-definite".into(),
            ));
        }
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Ok(l)
}

impl SwitchedLds {
    pub fn dimension(&self) -> usize {
        self.x0.len()
    }

    pub fn n_frames(&self) -> usize {
        self.schedule.iter().map(|(d, _)| d).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dimension();
        if p == 0 || self.regimes.is_empty() {
            return Err(Error::InvalidInput("empty system".into()));
        }
        for (k, a) in self.regimes.iter().enumerate() {
            if a.shape() != (p, p) {
                return Err(Error::InvalidInput(format!(
                    "regime {k} is {}x{}, expected {p}x{p}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            let rho = spectral_radius(a);
            if rho > MAX_SPECTRAL_RADIUS {
                return Err(Error::InvalidInput(format!(
                    "regime {k} has spectral radius {rho:.4} above {MAX_SPECTRAL_RADIUS}"
                )));
            }
        }
        if self.noise_cov.shape() != (p, p) {
            return Err(Error::InvalidInput(format!(
                "noise covariance must be {p}x{p}"
            )));
        }
        if self.schedule.is_empty() {
            return Err(Error::InvalidInput("empty schedule".into()));
        }
        for &(d, k) in &self.schedule {
            if d == 0 {
                return Err(Error::InvalidInput("schedule durations must be >= 1".into()));
            }
            if k >= self.regimes.len() {
                return Err(Error::InvalidInput(format!(
                    "schedule refers to regime {k} but only {} exist",
                    self.regimes.len()
                )));
            }
        }
        Ok(())
    }

    /// Run the recurrence. Returns the trajectory and per-frame regime labels.
    pub fn generate(&self) -> Result<(Demonstration, Vec<String>)> {
        self.validate()?;
        let p = self.dimension();
        let l = psd_cholesky(&self.noise_cov)?;
        let n = self.n_frames();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut frames = DMatrix::zeros(n, p);
        let mut labels = Vec::with_capacity(n);
        let mut x = self.x0.clone();
        let mut t = 0;
        for &(duration, k) in &self.schedule {
            for _ in 0..duration {
                frames.set_row(t, &x.transpose());
                labels.push(regime_label(k));
                t += 1;
                if t < n {
                    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                    x = &self.regimes[k] * &x + &l * z;
                    let norm = x.norm();
                    if !(norm <= DIVERGENCE_NORM) {
                        return Err(Error::Diverged { frame: t, norm });
                    }
                }
            }
        }
        let names = (1..=p).map(|i| format!("x{i}")).collect();
        let demo = Demonstration::new(format!("synth_{}", self.seed), frames, SYNTH_SAMPLE_RATE_HZ, names)?;
        Ok((demo, labels))
    }
}

/// `n` random `p x p` matrices rescaled to spectral radius `contraction`,
/// pairwise at least [`MIN_REGIME_DISTANCE`] apart in Frobenius norm.
pub fn make_random_regimes(
    n: usize,
    p: usize,
    seed: u64,
    contraction: f64,
) -> Result<Vec<DMatrix<f64>>> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput("need at least one regime of dimension >= 1".into()));
    }
    if !(contraction > 0.0 && contraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "contraction must lie in (0, 1], got {contraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut accepted = None;
        for _ in 0..REJECTION_BUDGET {
            let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let rho = spectral_radius(&a);
            if !(rho > 1e-8) {
                continue;
            }
            let a = a * (contraction / rho);
            if out.iter().all(|b| (b - &a).norm() >= MIN_REGIME_DISTANCE) {
                accepted = Some(a);
                break;
            }
        }
        out.push(accepted.ok_or_else(|| {
            Error::RejectionBudget(format!(
                "could not draw regime {k} distinct from the previous ones in {REJECTION_BUDGET} tries"
            ))
        })?);
    }
    Ok(out)
}

/// A schedule visiting every regime once per round in a random order, with
/// durations drawn uniformly from `min_len..=max_len`.
pub fn cyclic_schedule(
    n_regimes: usize,
    rounds: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if n_regimes == 0 || rounds == 0 || min_len == 0 || min_len > max_len {
        return Err(Error::InvalidInput(format!(
            "invalid schedule parameters: {n_regimes} regimes, {rounds} rounds, lengths {min_len}..={max_len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut schedule = Vec::with_capacity(n_regimes * rounds);
    for _ in 0..rounds {
        let mut order: Vec<usize> = (0..n_regimes).collect();
        // Fisher-Yates, avoiding a repeat across the round boundary.
        for i in (1..n_regimes).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        if let (Some(&(_, last)), true) = (schedule.last(), n_regimes > 1) {
            if order[0] == last {
                order.swap(0, n_regimes - 1);
            }
        }
        for k in order {
            schedule.push((rng.random_range(min_len..=max_len), k));
        }
    }
    Ok(schedule)
}
