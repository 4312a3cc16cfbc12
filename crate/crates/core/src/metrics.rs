//! Extrinsic (accuracy, NMI) and intrinsic (silhouette) segmentation metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::AugmentedMatrix;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// Fraction of frames whose predicted label equals the truth.
pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(pred: &[S], truth: &[T]) -> Result<f64> {
    check_lengths(truth.len(), pred.len())?;
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.as_ref() == t.as_ref())
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Accuracy restricted to the frames of each truth label.
pub fn per_label_accuracy<S: AsRef<str>, T: AsRef<str>>(
    pred: &[S],
    truth: &[T],
) -> Result<BTreeMap<String, f64>> {
    check_lengths(truth.len(), pred.len())?;
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (p, t) in pred.iter().zip(truth) {
        let entry = counts.entry(t.as_ref()).or_default();
        entry.1 += 1;
        if p.as_ref() == t.as_ref() {
            entry.0 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(l, (hit, total))| (l.to_string(), hit as f64 / total as f64))
        .collect())
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(X;Y) / sqrt(H(X) H(Y))`, natural logs.
///
/// If either sequence is constant the score is 0, except when both are
/// constant (identical one-block partitions), which scores 1.
pub fn nmi<S: AsRef<str>, T: AsRef<str>>(x: &[S], y: &[T]) -> Result<f64> {
    check_lengths(x.len(), y.len())?;
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = x.len() as f64;
    let mut joint: HashMap<(&str, &str), usize> = HashMap::new();
    let mut cx: HashMap<&str, usize> = HashMap::new();
    let mut cy: HashMap<&str, usize> = HashMap::new();
    for (a, b) in x.iter().zip(y) {
        *joint.entry((a.as_ref(), b.as_ref())).or_default() += 1;
        *cx.entry(a.as_ref()).or_default() += 1;
        *cy.entry(b.as_ref()).or_default() += 1;
    }
    match (cx.len() == 1, cy.len() == 1) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    // Sort so the floating-point sums do not depend on hash order.
    let mut sx: Vec<usize> = cx.values().copied().collect();
    let mut sy: Vec<usize> = cy.values().copied().collect();
    sx.sort_unstable();
    sy.sort_unstable();
    let hx = entropy(sx.into_iter(), n);
    let hy = entropy(sy.into_iter(), n);
    let mut cells: Vec<(usize, usize, usize)> = joint
        .iter()
        .map(|(&(a, b), &c)| (c, cx[a], cy[b]))
        .collect();
    cells.sort_unstable();
    let mi: f64 = cells
        .into_iter()
        .map(|(c, a, b)| {
            let pxy = c as f64 / n;
            pxy * (c as f64 * n / (a as f64 * b as f64)).ln()
        })
        .sum();
    Ok((mi / (hx * hy).sqrt()).clamp(0.0, 1.0))
}

/// Per-sample simplified silhouette `s(i) = (b - a) / max(a, b)`, where `a`
/// is the Euclidean distance to the sample's own cluster mean and `b` the
/// distance to the nearest other cluster mean.
pub fn silhouette_samples<S: AsRef<str>>(x: &AugmentedMatrix, labels: &[S]) -> Result<Vec<f64>> {
    check_lengths(x.n_rows(), labels.len())?;
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        members.entry(l.as_ref()).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::InvalidInput(
            "silhouette needs at least two clusters".into(),
        ));
    }
    let names: Vec<&str> = members.keys().copied().collect();
    let means: Vec<DVector<f64>> = members
        .values()
        .map(|rows| {
            let mut m = DVector::zeros(x.dimension());
            for &r in rows {
                m += x.values.row(r).transpose();
            }
            m / rows.len() as f64
        })
        .collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let own = index[l.as_ref()];
            let row = x.values.row(i);
            let dist = |m: &DVector<f64>| {
                row.iter()
                    .zip(m.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            let a = dist(&means[own]);
            let b = means
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != own)
                .map(|(_, m)| dist(m))
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect())
}

/// Mean of `(s(i) + 1) / 2` over all samples, in `[0, 1]`.
pub fn silhouette_index<S: AsRef<str>>(x: &AugmentedMatrix, labels: &[S]) -> Result<f64> {
    let s = silhouette_samples(x, labels)?;
    Ok(s.iter().map(|v| (v + 1.0) / 2.0).sum::<f64>() / s.len() as f64)
}

/// Frame counts indexed by (truth label, predicted label) over a shared,
/// sorted label axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub labels: Vec<String>,
    /// `counts[i][j]`: frames with truth `labels[i]` predicted as `labels[j]`.
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion<S: AsRef<str>, T: AsRef<str>>(pred: &[S], truth: &[T]) -> Result<Confusion> {
    check_lengths(truth.len(), pred.len())?;
    let axis: BTreeSet<&str> = pred
        .iter()
        .map(AsRef::as_ref)
        .chain(truth.iter().map(AsRef::as_ref))
        .collect();
    let labels: Vec<String> = axis.iter().map(|s| s.to_string()).collect();
    let index: HashMap<&str, usize> = axis.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut counts = vec![vec![0; labels.len()]; labels.len()];
    for (p, t) in pred.iter().zip(truth) {
        counts[index[t.as_ref()]][index[p.as_ref()]] += 1;
    }
    Ok(Confusion { labels, counts })
}

/// Metrics for one segmentation run. Serializes with exactly these keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: Option<f64>,
    pub nmi: f64,
    /// Absent when fewer than two clusters were predicted.
    pub si_pred: Option<f64>,
    /// Absent when the annotations hold fewer than two labels.
    pub si_truth: Option<f64>,
    pub per_label_accuracy: BTreeMap<String, f64>,
    pub confusion: Confusion,
    pub n_frames_evaluated: usize,
}

impl EvaluationReport {
    /// Build a report from frame-level predictions and truth (unannotated
    /// frames already removed) and silhouettes computed on the feature rows.
    /// `identity_bearing` is false for anonymous clusters, in which case
    /// accuracy is not reported.
    pub fn new(
        pred: &[String],
        truth: &[String],
        si_pred: Option<f64>,
        si_truth: Option<f64>,
        identity_bearing: bool,
    ) -> Result<Self> {
        let confusion = confusion(pred, truth)?;
        let (accuracy, per_label) = if identity_bearing {
            (Some(accuracy(pred, truth)?), per_label_accuracy(pred, truth)?)
        } else {
            (None, BTreeMap::new())
        };
        Ok(Self {
            accuracy,
            nmi: nmi(pred, truth)?,
            si_pred,
            si_truth,
            per_label_accuracy: per_label,
            n_frames_evaluated: confusion.total(),
            confusion,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn seq(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    fn points(rows: &[[f64; 2]]) -> AugmentedMatrix {
        AugmentedMatrix::from_matrix(DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]))
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&seq("AABB"), &seq("AABB")).unwrap(), 1.0);
        assert_eq!(accuracy(&seq("AABB"), &seq("CCDD")).unwrap(), 0.0);
        assert_eq!(accuracy(&seq("AABB"), &seq("ABBB")).unwrap(), 0.75);
        assert!(accuracy(&seq("AB"), &seq("A")).is_err());
    }

    #[test]
    fn per_label_examples() {
        let m = per_label_accuracy(&seq("ABB"), &seq("AAB")).unwrap();
        assert_eq!(m["A"], 0.5);
        assert_eq!(m["B"], 1.0);
        let m = per_label_accuracy(&seq("ABC"), &seq("ABC")).unwrap();
        assert!(m.values().all(|&v| v == 1.0));
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&seq("AABBC"), &seq("AABBC")).unwrap() - 1.0).abs() < 1e-12);
        assert!((nmi(&seq("AABBC"), &seq("XXYYZ")).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&seq("AAAA"), &seq("ABAB")).unwrap(), 0.0);
        assert_eq!(nmi(&seq("AAAA"), &seq("BBBB")).unwrap(), 1.0);
        assert!(nmi(&seq("AB"), &seq("A")).is_err());
        assert!(nmi::<String, String>(&[], &[]).is_err());
    }

    #[test]
    fn silhouette_collapsed_clusters() {
        let x = points(&[[0.0, 0.0], [0.0, 0.0], [3.0, 4.0], [3.0, 4.0]]);
        assert_eq!(silhouette_index(&x, &seq("AABB")).unwrap(), 1.0);
        assert!(silhouette_index(&x, &seq("AAAA")).is_err());
    }

    #[test]
    fn silhouette_worst_sample() {
        // The first sample sits on the mean of cluster B but away from its
        // own cluster mean: b = 0, a > 0, so s = -1 (normalized 0).
        let x = points(&[[0.0, 0.0], [10.0, 0.0], [-1.0, 0.0], [1.0, 0.0]]);
        let s = silhouette_samples(&x, &seq("AABB")).unwrap();
        assert_eq!(s[0], -1.0);
        assert_eq!((s[0] + 1.0) / 2.0, 0.0);
    }

    #[test]
    fn confusion_trace_matches_accuracy() {
        let c = confusion(&seq("ABBC"), &seq("AABB")).unwrap();
        assert_eq!(c.labels, seq("ABC"));
        assert_eq!(c.total(), 4);
        assert_eq!(c.trace(), 2);
        assert_eq!(c.counts[0], vec![1, 1, 0]);
        assert_eq!(c.counts[1], vec![0, 1, 1]);
    }

    #[test]
    fn report_keys_and_absent_accuracy() {
        let x = points(&[[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]]);
        let pred = vec!["cluster_0".to_string(), "cluster_0".into(), "cluster_1".into(), "cluster_1".into()];
        let truth = seq("AABB");
        let si = silhouette_index(&x, &pred).unwrap();
        let r = EvaluationReport::new(&pred, &truth, Some(si), Some(si), false).unwrap();
        assert_eq!(r.accuracy, None);
        assert!((r.nmi - 1.0).abs() < 1e-12);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(
            keys,
            BTreeSet::from([
                "accuracy",
                "nmi",
                "si_pred",
                "si_truth",
                "per_label_accuracy",
                "confusion",
                "n_frames_evaluated"
            ])
        );
        assert!(v["accuracy"].is_null());
    }
}
