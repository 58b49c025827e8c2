//! Training-set composition.

use std::collections::HashSet;

use super::protocol::{Origin, TrainingEntry, TrainingManifest};
use super::OrchestratorError;
use crate::dataio::{LabelKind, LabelSet};

/// A label set available for composition. `dir` is the set's directory
/// relative to the campaign root.
#[derive(Debug, Clone, Copy)]
pub struct LabelSource<'a> {
    pub origin: Origin,
    pub dir: &'a str,
    pub set: &'a LabelSet,
}

fn join(dir: &str, rel: &str) -> String {
    if dir.is_empty() {
        rel.to_string()
    } else {
        format!("{}/{rel}", dir.trim_end_matches('/'))
    }
}

/// Concatenates the requested components, in order. Each component must be
/// provided by exactly one available label set.
pub fn compose_training_set(
    components: &[LabelKind],
    available: &[LabelSource],
) -> Result<TrainingManifest, OrchestratorError> {
    if components.is_empty() {
        return Err(OrchestratorError::Config(
            "training set has no components".into(),
        ));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for &kind in components {
        if !seen.insert(kind) {
            return Err(OrchestratorError::Config(format!(
                "training set lists {kind} twice"
            )));
        }
        let mut matching = available.iter().filter(|s| s.set.kind == kind);
        let src = matching
            .next()
            .ok_or(OrchestratorError::MissingComponent(kind))?;
        if matching.next().is_some() {
            return Err(OrchestratorError::Config(format!(
                "more than one {kind} label set available"
            )));
        }
        let detections = join(src.dir, &src.set.detections);
        for e in &src.set.entries {
            entries.push(TrainingEntry {
                frame_id: e.frame_id.clone(),
                origin: src.origin,
                tag: kind,
                detections: detections.clone(),
                heatmap: e.heatmap.as_deref().map(|h| join(src.dir, h)),
                images: Vec::new(),
            });
        }
    }
    Ok(TrainingManifest {
        components: components.to_vec(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::LabelEntry;

    fn set(kind: LabelKind, ids: &[&str]) -> LabelSet {
        LabelSet {
            kind,
            detections: "detections.jsonl".into(),
            entries: ids
                .iter()
                .map(|id| LabelEntry {
                    frame_id: id.to_string(),
                    detections_digest: String::new(),
                    heatmap: Some(format!("heatmaps/{id}.mvhm")),
                    heatmap_digest: None,
                })
                .collect(),
            provenance: None,
        }
    }

    #[test]
    fn ls_plus_plt_concatenates_in_order() {
        let ls = set(LabelKind::SourceLabel, &["s0", "s1", "s2"]);
        let plt = set(LabelKind::PseudoLabel, &["t0", "t1"]);
        let avail = [
            LabelSource {
                origin: Origin::Target,
                dir: "round-02/labels",
                set: &plt,
            },
            LabelSource {
                origin: Origin::Source,
                dir: "reference/LS",
                set: &ls,
            },
        ];
        let m = compose_training_set(&[LabelKind::SourceLabel, LabelKind::PseudoLabel], &avail)
            .unwrap();
        assert_eq!(m.entries.len(), 5);
        assert_eq!(m.entries[0].origin, Origin::Source);
        assert_eq!(m.entries[3].frame_id, "t0");
        assert_eq!(m.entries[3].tag, LabelKind::PseudoLabel);
        assert_eq!(m.entries[3].detections, "round-02/labels/detections.jsonl");
        assert_eq!(
            m.entries[4].heatmap.as_deref(),
            Some("round-02/labels/heatmaps/t1.mvhm")
        );
    }

    #[test]
    fn missing_component_is_reported() {
        let alt = set(LabelKind::AutoLabel, &["t0"]);
        let avail = [LabelSource {
            origin: Origin::Target,
            dir: "x",
            set: &alt,
        }];
        assert!(matches!(
            compose_training_set(&[LabelKind::PseudoLabel], &avail),
            Err(OrchestratorError::MissingComponent(LabelKind::PseudoLabel))
        ));
        assert!(compose_training_set(&[], &avail).is_err());
        assert!(
            compose_training_set(&[LabelKind::AutoLabel, LabelKind::AutoLabel], &avail).is_err()
        );
    }
}
