use std::collections::BTreeSet;

use kinseg::dictionary::*;
use kinseg::ingest::{frame_labels, Segment, Transcript};
use proptest::prelude::*;

const SHIPPED: &str = include_str!("../../../config/suturing_redefined.toml");
const SIDECAR: &str = include_str!("../../../config/boundaries.example.toml");

fn labelled_frames(t: &Transcript) -> usize {
    t.segments.iter().map(|s| s.len()).sum()
}

/// Distinct L-labels mentioned anywhere in the rules of the mapping file,
/// counted straight from the TOML text.
fn l_labels_in_file(text: &str) -> BTreeSet<String> {
    let value: toml::Value = toml::from_str(text).unwrap();
    let mut out = BTreeSet::new();
    for rule in value["rule"].as_array().unwrap() {
        for key in ["target", "split"] {
            match rule.get(key) {
                Some(toml::Value::String(s)) => {
                    out.insert(s.clone());
                }
                Some(toml::Value::Array(a)) => {
                    out.extend(a.iter().map(|v| v.as_str().unwrap().to_string()));
                }
                _ => {}
            }
        }
    }
    out.retain(|l| l.starts_with('L'));
    out
}

#[test]
fn shipped_mapping_cardinality() {
    let m = LabelMapping::from_toml(SHIPPED).unwrap();
    let from_file = l_labels_in_file(SHIPPED);
    assert_eq!(from_file.len(), 7);
    assert_eq!(m.target_labels(), from_file);

    // a transcript exercising every rule produces exactly that dictionary
    let t = Transcript::new(vec![
        Segment::new(0, 9, "G2"),
        Segment::new(10, 29, "G3"),
        Segment::new(30, 39, "G6"),
        Segment::new(40, 49, "G5"),
        Segment::new(50, 79, "G11"),
    ])
    .unwrap();
    let mut ov = SegmentOverrides::new();
    ov.insert(1, SegmentOverride { boundaries: vec![19], targets: None });
    ov.insert(2, SegmentOverride { boundaries: vec![34], targets: None });
    ov.insert(4, SegmentOverride { boundaries: vec![59, 69], targets: None });
    let out = apply_mapping(&t, &m, Some(&ov)).unwrap();
    let labels: BTreeSet<String> = dictionary_labels(std::slice::from_ref(&out)).into_iter().collect();
    assert_eq!(labels, from_file);
    assert_eq!(labelled_frames(&out), 80);
    // G5 followed G11, whose first part is L7
    assert!(out.segments.iter().any(|s| s.start <= 40 && s.end >= 59 && s.label == "L7"));
}

#[test]
fn example_sidecar_parses() {
    let b = BoundaryFile::from_toml(SIDECAR).unwrap();
    let ov = b.for_demo("Suturing_B001").unwrap();
    assert_eq!(ov[&2].boundaries, vec![211]);
    assert_eq!(ov[&3].targets.as_deref(), Some(&["L7".to_string()][..]));
}

#[test]
fn merge_and_split_examples() {
    let rules = r#"
        [[rule]]
        source = "G2"
        target = "L1"
        [[rule]]
        source = "G3"
        target = "L1"
        [[rule]]
        source = "G6"
        split = ["L5", "L3"]
    "#;
    let m = LabelMapping::from_toml(rules).unwrap();
    let t = Transcript::new(vec![Segment::new(0, 49, "G2"), Segment::new(50, 119, "G3")]).unwrap();
    let out = apply_mapping(&t, &m, None).unwrap();
    assert_eq!(out.segments, vec![Segment::new(0, 119, "L1")]);

    let t = Transcript::new(vec![Segment::new(149, 259, "G6")]).unwrap();
    let mut ov = SegmentOverrides::new();
    ov.insert(0, SegmentOverride { boundaries: vec![199], targets: None });
    let out = apply_mapping(&t, &m, Some(&ov)).unwrap();
    assert_eq!(out.to_text(), "150 200 L5\n201 260 L3\n");
    assert!(apply_mapping(&t, &m, None).is_err());
}

#[test]
fn unmapped_label_is_named() {
    let m = LabelMapping::from_toml("[[rule]]\nsource = \"G2\"\ntarget = \"L1\"\n").unwrap();
    let t = Transcript::new(vec![Segment::new(0, 3, "G9")]).unwrap();
    let err = apply_mapping(&t, &m, None).unwrap_err();
    assert!(err.to_string().contains("G9"));
}

fn transcript_strategy() -> impl Strategy<Value = Transcript> {
    prop::collection::vec((0usize..3, 1usize..20, 0usize..6), 1..10).prop_map(|parts| {
        let mut segs = Vec::new();
        let mut at = 0;
        for (gap, len, l) in parts {
            at += gap;
            segs.push(Segment::new(at, at + len - 1, format!("G{}", l + 1)));
            at += len;
        }
        Transcript::new(segs).unwrap()
    })
}

fn rename_mapping() -> LabelMapping {
    LabelMapping::from_toml(
        r#"
        passthrough_unmapped = true
        [[rule]]
        source = "G1"
        target = "L1"
        [[rule]]
        source = "G2"
        target = "L1"
        [[rule]]
        source = "G3"
        target = "G4"
        [[rule]]
        source = "G4"
        target = "G4"
        "#,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn frame_count_preserved(t in transcript_strategy(), cut in 0.0f64..1.0) {
        // a transcript of nothing but follow-next segments has no target
        prop_assume!(t.segments.iter().any(|s| s.label != "G5"));
        let m = LabelMapping::from_toml(SHIPPED).unwrap();
        // give every split segment a boundary at a fraction of its length
        let mut ov = SegmentOverrides::new();
        for (i, s) in t.segments.iter().enumerate() {
            let n = match m.rule(&s.label) {
                Some(RuleAction::Split(ts)) => ts.len(),
                _ => continue,
            };
            if s.len() < n {
                ov.insert(i, SegmentOverride { boundaries: vec![], targets: Some(vec!["L1".into()]) });
                continue;
            }
            let offset = ((s.len() - n) as f64 * cut) as usize;
            let boundaries: Vec<usize> = (0..n - 1).map(|k| s.start + offset + k).collect();
            ov.insert(i, SegmentOverride { boundaries, targets: None });
        }
        let out = apply_mapping(&t, &m, Some(&ov)).unwrap();
        prop_assert_eq!(labelled_frames(&out), labelled_frames(&t));
        let before: BTreeSet<usize> = t.segments.iter().flat_map(|s| s.start..=s.end).collect();
        let after: BTreeSet<usize> = out.segments.iter().flat_map(|s| s.start..=s.end).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn rename_is_idempotent(t in transcript_strategy()) {
        let m = rename_mapping();
        let once = apply_mapping(&t, &m, None).unwrap();
        let twice = apply_mapping(&once, &m, None).unwrap();
        prop_assert_eq!(&once, &twice);
        let unchanged = apply_mapping(&t, &LabelMapping::identity(), None).unwrap();
        let n = t.segments.last().unwrap().end + 1;
        let merged = Transcript::from_frame_labels(&frame_labels(&t, n).unwrap());
        prop_assert_eq!(unchanged, merged);
    }
}
