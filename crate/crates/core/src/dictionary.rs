//! Gesture dictionaries and transcript relabelling.
//!
//! A [`LabelMapping`] rewrites the labels of a transcript: a rule either
//! renames a segment (several sources renamed to one target merge), splits it
//! into consecutive parts at externally supplied boundary frames, or makes it
//! take the target of the segment that follows it. Split boundaries and
//! per-segment overrides come from a per-demonstration sidecar file.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ingest::{Segment, Transcript};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleAction {
    /// Whole segment gets the target label.
    Rename(String),
    /// Segment is cut into consecutive parts, one per target, at boundary
    /// frames supplied per segment.
    Split(Vec<String>),
    /// Segment takes the (first) target of the following segment, or of the
    /// preceding one when it is the last segment.
    FollowNext,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingRule {
    pub source: String,
    pub action: RuleAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelMapping {
    pub rules: Vec<MappingRule>,
    /// Keep labels that have no rule instead of failing.
    pub passthrough_unmapped: bool,
}

/// Per-segment instructions from the sidecar file. Frames are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SegmentOverride {
    /// Last frame of every part except the final one.
    pub boundaries: Vec<usize>,
    /// Replaces the rule's targets for this segment.
    pub targets: Option<Vec<String>>,
}

/// Overrides keyed by 0-based segment position in the source transcript.
pub type SegmentOverrides = BTreeMap<usize, SegmentOverride>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleEntry {
    source: String,
    target: Option<String>,
    split: Option<Vec<String>>,
    #[serde(default)]
    follow_next: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingFile {
    #[serde(default)]
    passthrough_unmapped: bool,
    #[serde(default)]
    rule: Vec<RuleEntry>,
}

impl LabelMapping {
    /// Mapping that keeps every label.
    pub fn identity() -> Self {
        Self {
            rules: vec![],
            passthrough_unmapped: true,
        }
    }

    /// Parse the TOML mapping file.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: MappingFile = toml::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("mapping file: {e}")))?;
        let mut seen = BTreeSet::new();
        let mut rules = Vec::with_capacity(file.rule.len());
        for entry in file.rule {
            if !seen.insert(entry.source.clone()) {
                return Err(Error::InvalidInput(format!(
                    "mapping file: duplicate rule for '{}'",
                    entry.source
                )));
            }
            let action = match (entry.target, entry.split, entry.follow_next) {
                (Some(t), None, false) => RuleAction::Rename(t),
                (None, Some(s), false) if s.len() >= 2 => RuleAction::Split(s),
                (None, Some(_), false) => {
                    return Err(Error::InvalidInput(format!(
                        "mapping file: split rule for '{}' needs at least two targets",
                        entry.source
                    )))
                }
                (None, None, true) => RuleAction::FollowNext,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "mapping file: rule for '{}' must set exactly one of target, split, follow_next",
                        entry.source
                    )))
                }
            };
            rules.push(MappingRule {
                source: entry.source,
                action,
            });
        }
        Ok(Self {
            rules,
            passthrough_unmapped: file.passthrough_unmapped,
        })
    }

    pub fn rule(&self, source: &str) -> Option<&RuleAction> {
        self.rules
            .iter()
            .find(|r| r.source == source)
            .map(|r| &r.action)
    }

    /// Every label a rule can produce.
    pub fn target_labels(&self) -> BTreeSet<String> {
        self.rules
            .iter()
            .flat_map(|r| match &r.action {
                RuleAction::Rename(t) => vec![t.clone()],
                RuleAction::Split(ts) => ts.clone(),
                RuleAction::FollowNext => vec![],
            })
            .collect()
    }
}

enum Pending {
    Parts(Vec<Segment>),
    Follow(Segment),
}

fn split_segment(
    index: usize,
    seg: &Segment,
    targets: &[String],
    boundaries: &[usize],
) -> Result<Vec<Segment>> {
    if boundaries.len() + 1 != targets.len() {
        return Err(Error::MissingBoundary {
            segment: index + 1,
            label: seg.label.clone(),
            message: format!(
                "{} target(s) need {} boundary frame(s), got {}",
                targets.len(),
                targets.len() - 1,
                boundaries.len()
            ),
        });
    }
    let mut parts = Vec::with_capacity(targets.len());
    let mut start = seg.start;
    for (target, &b) in targets.iter().zip(boundaries) {
        if b < start || b >= seg.end {
            return Err(Error::MissingBoundary {
                segment: index + 1,
                label: seg.label.clone(),
                message: format!(
                    "boundary frame {} is not inside frames {}..{}",
                    b + 1,
                    start + 1,
                    seg.end + 1
                ),
            });
        }
        parts.push(Segment::new(start, b, target.clone()));
        start = b + 1;
    }
    parts.push(Segment::new(start, seg.end, targets[targets.len() - 1].clone()));
    Ok(parts)
}

/// Relabel a transcript. Adjacent segments that end up with the same label
/// are merged; the set of labelled frames is unchanged.
pub fn apply_mapping(
    t: &Transcript,
    m: &LabelMapping,
    overrides: Option<&SegmentOverrides>,
) -> Result<Transcript> {
    let mut pending = Vec::with_capacity(t.segments.len());
    for (i, seg) in t.segments.iter().enumerate() {
        let ov = overrides.and_then(|o| o.get(&i));
        let rule = match m.rule(&seg.label) {
            Some(r) => r.clone(),
            None if m.passthrough_unmapped => RuleAction::Rename(seg.label.clone()),
            None => return Err(Error::UnmappedLabel(seg.label.clone())),
        };
        let item = match (ov, rule) {
            (Some(ov), rule) => {
                let targets = match (&ov.targets, rule) {
                    (Some(ts), _) => ts.clone(),
                    (None, RuleAction::Rename(t)) => vec![t],
                    (None, RuleAction::Split(ts)) => ts,
                    (None, RuleAction::FollowNext) if ov.boundaries.is_empty() => {
                        pending.push(Pending::Follow(seg.clone()));
                        continue;
                    }
                    (None, RuleAction::FollowNext) => {
                        return Err(Error::InvalidInput(format!(
                            "segment {} ('{}'): boundaries given without targets",
                            i + 1,
                            seg.label
                        )))
                    }
                };
                if targets.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "segment {} ('{}'): empty target list",
                        i + 1,
                        seg.label
                    )));
                }
                Pending::Parts(split_segment(i, seg, &targets, &ov.boundaries)?)
            }
            (None, RuleAction::Rename(target)) => {
                Pending::Parts(vec![Segment::new(seg.start, seg.end, target)])
            }
            (None, RuleAction::Split(_)) => {
                return Err(Error::MissingBoundary {
                    segment: i + 1,
                    label: seg.label.clone(),
                    message: "no boundary frames supplied".into(),
                })
            }
            (None, RuleAction::FollowNext) => Pending::Follow(seg.clone()),
        };
        pending.push(item);
    }

    // Resolve follow-next segments from the back so chains collapse onto the
    // first concrete segment after them.
    let mut resolved: Vec<Option<Vec<Segment>>> = vec![None; pending.len()];
    let mut next_label: Option<String> = None;
    for (i, item) in pending.iter().enumerate().rev() {
        match item {
            Pending::Parts(parts) => {
                next_label = Some(parts[0].label.clone());
                resolved[i] = Some(parts.clone());
            }
            Pending::Follow(seg) => {
                if let Some(l) = &next_label {
                    resolved[i] = Some(vec![Segment::new(seg.start, seg.end, l.clone())]);
                }
            }
        }
    }
    let mut prev_label: Option<String> = None;
    for (i, item) in pending.iter().enumerate() {
        if resolved[i].is_none() {
            let Pending::Follow(seg) = item else {
                unreachable!()
            };
            let label = prev_label.clone().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "segment {} ('{}') has no neighbouring segment to merge into",
                    i + 1,
                    seg.label
                ))
            })?;
            resolved[i] = Some(vec![Segment::new(seg.start, seg.end, label)]);
        }
        prev_label = resolved[i]
            .as_ref()
            .and_then(|p| p.last())
            .map(|s| s.label.clone());
    }

    let mut out: Vec<Segment> = Vec::with_capacity(t.segments.len());
    for part in resolved.into_iter().flatten().flatten() {
        match out.last_mut() {
            Some(last) if last.end + 1 == part.start && last.label == part.label => {
                last.end = part.end
            }
            _ => out.push(part),
        }
    }
    Transcript::new(out)
}

/// Sorted distinct labels across transcripts.
pub fn dictionary_labels(transcripts: &[Transcript]) -> Vec<String> {
    transcripts
        .iter()
        .flat_map(|t| t.segments.iter().map(|s| s.label.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarEntry {
    demo: String,
    /// 1-based position of the segment in the source transcript.
    index: usize,
    #[serde(default)]
    boundaries: Vec<usize>,
    targets: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarFile {
    #[serde(default)]
    segment: Vec<SidecarEntry>,
}

/// Segment overrides for several demonstrations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoundaryFile {
    pub demos: BTreeMap<String, SegmentOverrides>,
}

impl BoundaryFile {
    /// Parse the TOML sidecar file (1-based segment positions and frames).
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SidecarFile = toml::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("boundary file: {e}")))?;
        let mut demos: BTreeMap<String, SegmentOverrides> = BTreeMap::new();
        for e in file.segment {
            if e.index == 0 || e.boundaries.contains(&0) {
                return Err(Error::InvalidInput(format!(
                    "boundary file: demo '{}': segment positions and frames start at 1",
                    e.demo
                )));
            }
            let ov = SegmentOverride {
                boundaries: e.boundaries.iter().map(|b| b - 1).collect(),
                targets: e.targets,
            };
            if demos.entry(e.demo.clone()).or_default().insert(e.index - 1, ov).is_some() {
                return Err(Error::InvalidInput(format!(
                    "boundary file: duplicate entry for demo '{}' segment {}",
                    e.demo, e.index
                )));
            }
        }
        Ok(Self { demos })
    }

    pub fn for_demo(&self, id: &str) -> Option<&SegmentOverrides> {
        self.demos.get(id)
    }
}
