use std::collections::BTreeMap;

use kinseg::metrics::*;
use kinseg::preprocess::AugmentedMatrix;
use nalgebra::{DMatrix, Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LABELS: [&str; 5] = ["a", "b", "c", "d", "e"];

/// Textbook NMI from the contingency table, with no shortcuts.
fn brute_nmi(x: &[String], y: &[String]) -> f64 {
    let n = x.len() as f64;
    let xs: Vec<&String> = {
        let mut v: Vec<&String> = x.iter().collect();
        v.sort();
        v.dedup();
        v
    };
    let ys: Vec<&String> = {
        let mut v: Vec<&String> = y.iter().collect();
        v.sort();
        v.dedup();
        v
    };
    let count = |f: &dyn Fn(usize) -> bool| (0..x.len()).filter(|&i| f(i)).count() as f64 / n;
    let px: Vec<f64> = xs.iter().map(|a| count(&|i| &x[i] == *a)).collect();
    let py: Vec<f64> = ys.iter().map(|b| count(&|i| &y[i] == *b)).collect();
    let h = |p: &[f64]| -p.iter().map(|v| v * v.ln()).sum::<f64>();
    let (hx, hy) = (h(&px), h(&py));
    if hx == 0.0 || hy == 0.0 {
        return if hx == 0.0 && hy == 0.0 { 1.0 } else { 0.0 };
    }
    let mut mi = 0.0;
    for (i, a) in xs.iter().enumerate() {
        for (j, b) in ys.iter().enumerate() {
            let pxy = count(&|t| &x[t] == *a && &y[t] == *b);
            if pxy > 0.0 {
                mi += pxy * (pxy / (px[i] * py[j])).ln();
            }
        }
    }
    mi / (hx * hy).sqrt()
}

/// Mean-based silhouette with every distance recomputed per sample.
fn brute_silhouette(x: &DMatrix<f64>, labels: &[String]) -> f64 {
    let n = x.nrows();
    let mean_of = |l: &String| {
        let rows: Vec<usize> = (0..n).filter(|&i| &labels[i] == l).collect();
        (0..x.ncols())
            .map(|j| rows.iter().map(|&r| x[(r, j)]).sum::<f64>() / rows.len() as f64)
            .collect::<Vec<f64>>()
    };
    let dist = |i: usize, m: &[f64]| {
        (0..x.ncols())
            .map(|j| (x[(i, j)] - m[j]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut total = 0.0;
    for i in 0..n {
        let a = dist(i, &mean_of(&labels[i]));
        let mut b = f64::INFINITY;
        for other in labels {
            if other != &labels[i] {
                b = b.min(dist(i, &mean_of(other)));
            }
        }
        let s = if a.max(b) == 0.0 { 0.0 } else { (b - a) / a.max(b) };
        total += (s + 1.0) / 2.0;
    }
    total / n as f64
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<String> {
    (0..n).map(|_| LABELS[rng.random_range(0..k)].to_string()).collect()
}

#[test]
fn nmi_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..300 {
        let n = rng.random_range(1..=20);
        let (kx, ky) = (rng.random_range(1..=4), rng.random_range(1..=5));
        let x = random_labels(&mut rng, n, kx);
        let y = random_labels(&mut rng, n, ky);
        let fast = nmi(&x, &y).unwrap();
        let slow = brute_nmi(&x, &y);
        assert!((fast - slow).abs() < 1e-10, "{x:?} {y:?}: {fast} vs {slow}");
    }
}

#[test]
fn silhouette_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let n = rng.random_range(3..=20);
        let d = rng.random_range(1..=4);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
        let mut labels = random_labels(&mut rng, n, 3);
        labels[0] = "a".into();
        labels[1] = "b".into();
        let fast = silhouette_index(&AugmentedMatrix::from_matrix(x.clone()), &labels).unwrap();
        let slow = brute_silhouette(&x, &labels);
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }
}

#[test]
fn nmi_near_zero_for_independent_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_labels(&mut rng, 100_000, 4);
    let y = random_labels(&mut rng, 100_000, 4);
    assert!(nmi(&x, &y).unwrap() < 0.01);
}

#[test]
fn nmi_invariant_under_fifty_relabelings() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_labels(&mut rng, 200, 4);
    let y = random_labels(&mut rng, 200, 5);
    let base = nmi(&x, &y).unwrap();
    for _ in 0..50 {
        let mut perm: Vec<usize> = (0..5).collect();
        for i in (1..5).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let relabel = |s: &String| {
            let k = LABELS.iter().position(|l| l == s).unwrap();
            format!("z{}", perm[k])
        };
        let xr: Vec<String> = x.iter().map(relabel).collect();
        let yr: Vec<String> = y.iter().map(relabel).collect();
        assert!((nmi(&xr, &y).unwrap() - base).abs() < 1e-12);
        assert!((nmi(&x, &yr).unwrap() - base).abs() < 1e-12);
        assert!((nmi(&xr, &x).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn silhouette_geometric_invariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(4..40);
        let x = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-5.0..5.0));
        let mut labels = random_labels(&mut rng, n, 3);
        labels[0] = "a".into();
        labels[1] = "b".into();
        let base = silhouette_index(&AugmentedMatrix::from_matrix(x.clone()), &labels).unwrap();

        let axis = Vector3::new(rng.random(), rng.random(), rng.random::<f64>() + 0.1);
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.random_range(0.0..6.0));
        let shift = DMatrix::from_fn(n, 3, |_, j| [3.0, -7.0, 11.0][j]);
        let moved = &x * DMatrix::from_iterator(3, 3, rot.matrix().iter().copied()) + shift;
        let scaled = &x * rng.random_range(0.01..100.0);
        for y in [moved, scaled] {
            let si = silhouette_index(&AugmentedMatrix::from_matrix(y), &labels).unwrap();
            assert!((si - base).abs() < 1e-10);
        }
    }
}

#[test]
fn per_label_accuracy_weighted_mean_is_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let n = rng.random_range(1..100);
        let truth = random_labels(&mut rng, n, 4);
        let pred = random_labels(&mut rng, n, 5);
        let per = per_label_accuracy(&pred, &truth).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &truth {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        let weighted: f64 = per
            .iter()
            .map(|(l, a)| a * counts[l.as_str()] as f64)
            .sum::<f64>()
            / n as f64;
        let acc = accuracy(&pred, &truth).unwrap();
        assert!((weighted - acc).abs() < 1e-12);

        let c = confusion(&pred, &truth).unwrap();
        assert_eq!(c.total(), n);
        assert!((c.trace() as f64 / c.total() as f64 - acc).abs() < 1e-12);
        for (i, l) in c.labels.iter().enumerate() {
            let row: usize = c.counts[i].iter().sum();
            assert_eq!(row, counts.get(l.as_str()).copied().unwrap_or(0));
        }
    }
}

#[test]
fn report_invariants() {
    let truth: Vec<String> = "AABBBCC".chars().map(String::from).collect();
    let pred: Vec<String> = "AABBCCC".chars().map(String::from).collect();
    let r = EvaluationReport::new(&pred, &truth, Some(0.6), Some(0.5), true).unwrap();
    assert_eq!(r.n_frames_evaluated, 7);
    assert_eq!(r.confusion.total(), 7);
    assert!((r.accuracy.unwrap() - 6.0 / 7.0).abs() < 1e-15);
    let anon = EvaluationReport::new(&pred, &truth, Some(0.6), Some(0.5), false).unwrap();
    assert_eq!(anon.accuracy, None);
    assert!(anon.to_json().contains("\"accuracy\": null"));
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 7);
}

proptest! {
    #[test]
    fn nmi_symmetric_and_bounded(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)
    ) {
        let x: Vec<String> = pairs.iter().map(|p| LABELS[p.0].to_string()).collect();
        let y: Vec<String> = pairs.iter().map(|p| LABELS[p.1].to_string()).collect();
        let a = nmi(&x, &y).unwrap();
        let b = nmi(&y, &x).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        let self_score = nmi(&x, &x).unwrap();
        prop_assert!((self_score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_one_iff_identical(
        pairs in prop::collection::vec((0usize..3, 0usize..3), 1..40)
    ) {
        let x: Vec<&str> = pairs.iter().map(|p| LABELS[p.0]).collect();
        let y: Vec<&str> = pairs.iter().map(|p| LABELS[p.1]).collect();
        let acc = accuracy(&x, &y).unwrap();
        prop_assert_eq!(acc == 1.0, x == y);
    }
}
