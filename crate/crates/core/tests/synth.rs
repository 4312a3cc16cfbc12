use kinseg::gmm::{em_fit, predict_labels, weak_init, EmConfig};
use kinseg::metrics::{accuracy, nmi};
use kinseg::preprocess::{augment, FeatureMatrix};
use kinseg::synth::*;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Spectral radius from Gelfand's formula, `lim ||A^k||^(1/k)`, evaluated at
/// `k = 2^60` by repeated squaring with the norm factored out at each step.
fn gelfand_radius(a: &DMatrix<f64>) -> f64 {
    let mut b = a.clone();
    let mut log_norm = 0.0;
    for _ in 0..60 {
        b = &b * &b;
        log_norm *= 2.0;
        let n = b.norm();
        if n == 0.0 {
            return 0.0;
        }
        log_norm += n.ln();
        b /= n;
    }
    (log_norm / 2f64.powi(60)).exp()
}

fn radius_2x2(a: &DMatrix<f64>) -> f64 {
    let tr = a[(0, 0)] + a[(1, 1)];
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        (tr / 2.0 + disc.sqrt()).abs().max((tr / 2.0 - disc.sqrt()).abs())
    } else {
        det.sqrt()
    }
}

#[test]
fn regime_spectral_radius_matches_oracles() {
    for seed in 0..20 {
        let p = 2 + seed as usize % 5;
        let regimes = make_random_regimes(4, p, seed, 0.9).unwrap();
        for a in &regimes {
            assert!((spectral_radius(a) - 0.9).abs() < 1e-9);
            assert!((gelfand_radius(a) - 0.9).abs() < 1e-9, "{}", gelfand_radius(a));
            if p == 2 {
                assert!((radius_2x2(a) - 0.9).abs() < 1e-9);
            }
        }
        for i in 0..regimes.len() {
            for j in 0..i {
                assert!((&regimes[i] - &regimes[j]).norm() >= MIN_REGIME_DISTANCE);
            }
        }
        assert_eq!(regimes, make_random_regimes(4, p, seed, 0.9).unwrap());
    }
    let scalar = make_random_regimes(1, 1, 3, 1.0).unwrap();
    assert_eq!(scalar[0][(0, 0)].abs(), 1.0);
}

#[test]
fn oracle_agrees_with_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let a = DMatrix::from_fn(2, 2, |_, _| StandardNormal.sample(&mut rng));
        let r = radius_2x2(&a);
        assert!((gelfand_radius(&a) - r).abs() < 1e-9 * r.max(1.0));
        assert!((spectral_radius(&a) - r).abs() < 1e-9 * r.max(1.0));
    }
}

fn system(seed: u64, noise: f64) -> SwitchedLds {
    SwitchedLds {
        regimes: make_random_regimes(3, 4, seed, 0.95).unwrap(),
        noise_cov: DMatrix::identity(4, 4) * noise,
        schedule: cyclic_schedule(3, 2, 10, 30, seed).unwrap(),
        x0: DVector::from_element(4, 1.0),
        seed,
    }
}

#[test]
fn generation_is_deterministic() {
    let (a, la) = system(7, 0.01).generate().unwrap();
    let (b, lb) = system(7, 0.01).generate().unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    let (c, _) = system(8, 0.01).generate().unwrap();
    assert_ne!(a.frames, c.frames);
}

#[test]
fn zero_noise_follows_recurrence() {
    let s = system(3, 0.0);
    let (demo, labels) = s.generate().unwrap();
    assert_eq!(labels.len(), demo.n_frames());
    assert_eq!(demo.n_frames(), s.n_frames());
    for t in 0..demo.n_frames() - 1 {
        let k: usize = labels[t][1..].parse::<usize>().unwrap() - 1;
        let x = demo.frames.row(t).transpose();
        let next = demo.frames.row(t + 1).transpose();
        let residual = (next - &s.regimes[k] * x).norm();
        assert!(residual < 1e-12);
    }
}

#[test]
fn labels_follow_schedule() {
    let s = system(4, 0.01);
    let (_, labels) = s.generate().unwrap();
    let mut t = 0;
    for &(d, k) in &s.schedule {
        for _ in 0..d {
            assert_eq!(labels[t], regime_label(k));
            t += 1;
        }
    }
    assert_eq!(t, labels.len());
}

#[test]
fn cyclic_schedule_shape() {
    let s = cyclic_schedule(4, 5, 3, 9, 11).unwrap();
    assert_eq!(s.len(), 20);
    for round in s.chunks(4) {
        let mut ks: Vec<usize> = round.iter().map(|r| r.1).collect();
        ks.sort();
        assert_eq!(ks, vec![0, 1, 2, 3]);
    }
    assert!(s.windows(2).all(|w| w[0].1 != w[1].1));
    assert!(s.iter().all(|r| (3..=9).contains(&r.0)));
}

#[test]
fn divergence_is_reported() {
    let s = SwitchedLds {
        regimes: vec![DMatrix::identity(1, 1) * 1.05],
        noise_cov: DMatrix::zeros(1, 1),
        schedule: vec![(400, 0)],
        x0: DVector::from_element(1, 1.0),
        seed: 0,
    };
    let err = s.generate().unwrap_err();
    assert!(err.is_numerical());
}

#[test]
fn weak_init_recovers_regimes() {
    let mut acc = 0.0;
    let mut score = 0.0;
    let seeds = 5;
    for seed in 0..seeds {
        let regimes = make_random_regimes(2, 4, seed, 0.95).unwrap();
        let run = |s: u64| {
            SwitchedLds {
                regimes: regimes.clone(),
                noise_cov: DMatrix::identity(4, 4) * 0.01,
                schedule: cyclic_schedule(2, 3, 60, 120, s).unwrap(),
                x0: DVector::from_element(4, 1.0),
                seed: s,
            }
            .generate()
            .unwrap()
        };
        let (train, train_labels) = run(seed * 1000 + 1);
        let (test, test_labels) = run(seed * 1000 + 2);
        let xa = augment(&FeatureMatrix::from_raw(&train), 1).unwrap();
        let xb = augment(&FeatureMatrix::from_raw(&test), 1).unwrap();
        let la: Vec<Option<String>> = train_labels[..xa.n_rows()].iter().cloned().map(Some).collect();
        let init = weak_init(&[(&xa, &la)]).unwrap();
        let model = em_fit(&xb, &init, &EmConfig::default()).unwrap();
        let pred = predict_labels(&model, &xb).unwrap();
        let truth = &test_labels[..xb.n_rows()];
        acc += accuracy(&pred.labels, truth).unwrap();
        score += nmi(&pred.labels, truth).unwrap();
    }
    let (acc, score) = (acc / seeds as f64, score / seeds as f64);
    assert!(acc >= 0.9, "accuracy {acc}");
    assert!(score > 0.5, "nmi {score}");
}
