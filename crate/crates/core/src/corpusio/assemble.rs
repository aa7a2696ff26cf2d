use std::collections::HashMap;

use log::warn;

use super::{read_feature_file, ClipEntry, ClipManifest, FeatureMatrix};
use crate::error::{Error, Result};

/// Result of packing samples into capped-duration clips.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub manifest: ClipManifest,
    /// Clips holding a single sample longer than the cap.
    pub oversized: Vec<String>,
}

/// Greedy first-fit concatenation in manifest order.
///
/// A sample joins the open clip while the clip duration stays within
/// `max_duration_s`; otherwise it opens a new clip. Samples of different
/// languages never share a clip. A sample longer than the cap becomes its own
/// clip and is reported in [`Assembly::oversized`]. Output clips are named
/// `clip000000`, `clip000001`, ... and carry an empty `feature_path`.
pub fn assemble_clips(samples: &ClipManifest, max_duration_s: f64) -> Result<Assembly> {
    if !(max_duration_s.is_finite() && max_duration_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "max_duration_s must be positive, got {max_duration_s}"
        )));
    }

    struct Open {
        duration: f64,
        language: String,
        ids: Vec<String>,
        closed: bool,
    }

    let mut clips: Vec<Open> = Vec::new();
    let mut oversized = Vec::new();
    for s in samples.entries() {
        let oversize = s.duration_s > max_duration_s;
        if oversize {
            warn!(
                "sample {} ({:.3} s) exceeds the {max_duration_s} s cap; kept as its own clip",
                s.clip_id, s.duration_s
            );
            oversized.push(clip_name(clips.len()));
        }
        let joins = !oversize
            && clips.last().is_some_and(|c| {
                !c.closed && c.language == s.language && c.duration + s.duration_s <= max_duration_s
            });
        if joins {
            let c = clips.last_mut().unwrap();
            c.duration += s.duration_s;
            c.ids.push(s.clip_id.clone());
        } else {
            clips.push(Open {
                duration: s.duration_s,
                language: s.language.clone(),
                ids: vec![s.clip_id.clone()],
                closed: oversize,
            });
        }
    }

    let entries = clips
        .into_iter()
        .enumerate()
        .map(|(i, c)| ClipEntry {
            clip_id: clip_name(i),
            feature_path: String::new(),
            duration_s: c.duration,
            language: c.language,
            source_sample_ids: c.ids,
        })
        .collect();
    Ok(Assembly {
        manifest: ClipManifest::new(entries)?,
        oversized,
    })
}

fn clip_name(index: usize) -> String {
    format!("clip{index:06}")
}

/// Stacks the feature files of `clip`'s source samples in order.
pub fn concat_features(clip: &ClipEntry, samples: &ClipManifest) -> Result<FeatureMatrix> {
    let by_id: HashMap<&str, &ClipEntry> = samples
        .entries()
        .iter()
        .map(|e| (e.clip_id.as_str(), e))
        .collect();
    let parts = clip
        .source_sample_ids
        .iter()
        .map(|id| {
            let sample = by_id.get(id.as_str()).ok_or_else(|| Error::Missing {
                what: "source sample",
                clip_id: id.clone(),
            })?;
            read_feature_file(&sample.feature_path)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::concat(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples(durations: &[f64]) -> ClipManifest {
        ClipManifest::new(
            durations
                .iter()
                .enumerate()
                .map(|(i, &d)| ClipEntry {
                    clip_id: format!("s{i}"),
                    feature_path: String::new(),
                    duration_s: d,
                    language: "hi".into(),
                    source_sample_ids: vec![],
                })
                .collect(),
        )
        .unwrap()
    }

    fn groups(a: &Assembly) -> Vec<Vec<String>> {
        a.manifest
            .entries()
            .iter()
            .map(|e| e.source_sample_ids.clone())
            .collect()
    }

    #[test]
    fn greedy_packing() {
        let a = assemble_clips(&samples(&[10.0, 10.0, 5.0]), 21.6).unwrap();
        assert_eq!(groups(&a), vec![vec!["s0", "s1"], vec!["s2"]]);
        assert_eq!(a.manifest.entries()[0].duration_s, 20.0);
        assert!(a.oversized.is_empty());
    }

    #[test]
    fn oversized_sample_kept_alone() {
        let a = assemble_clips(&samples(&[25.0]), 21.6).unwrap();
        assert_eq!(groups(&a), vec![vec!["s0"]]);
        assert_eq!(a.oversized, vec!["clip000000"]);
    }

    #[test]
    fn oversized_closes_open_clip() {
        let a = assemble_clips(&samples(&[3.0, 30.0, 2.0]), 21.6).unwrap();
        assert_eq!(groups(&a), vec![vec!["s0"], vec!["s1"], vec!["s2"]]);
        assert_eq!(a.oversized, vec!["clip000001"]);
    }

    #[test]
    fn empty_input() {
        let a = assemble_clips(&samples(&[]), 21.6).unwrap();
        assert!(a.manifest.is_empty());
    }

    #[test]
    fn exact_fit_joins() {
        let a = assemble_clips(&samples(&[10.8, 10.8]), 21.6).unwrap();
        assert_eq!(a.manifest.len(), 1);
    }

    #[test]
    fn language_change_starts_new_clip() {
        let mut entries = samples(&[1.0, 1.0]).into_entries();
        entries[1].language = "bn".into();
        let a = assemble_clips(&ClipManifest::new(entries).unwrap(), 21.6).unwrap();
        assert_eq!(a.manifest.len(), 2);
        assert_eq!(a.manifest.entries()[1].language, "bn");
    }

    #[test]
    fn rejects_nonpositive_cap() {
        assert!(assemble_clips(&samples(&[1.0]), 0.0).is_err());
        assert!(assemble_clips(&samples(&[1.0]), f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn conserves_duration_and_is_deterministic(
            durations in proptest::collection::vec(0u32..3000, 0..60)
        ) {
            // Durations in centiseconds keep sums exact in f64.
            let d: Vec<f64> = durations.iter().map(|&c| c as f64 / 100.0 * 1.0).collect();
            let m = samples(&d);
            let a = assemble_clips(&m, 21.6).unwrap();
            let b = assemble_clips(&m, 21.6).unwrap();
            prop_assert_eq!(a.manifest.to_jsonl(), b.manifest.to_jsonl());
            let total_in: f64 = d.iter().sum();
            let total_out = a.manifest.total_duration();
            prop_assert!((total_in - total_out).abs() < 1e-9 * total_in.max(1.0));
            let flat: Vec<String> = groups(&a).concat();
            let expected: Vec<String> = (0..d.len()).map(|i| format!("s{i}")).collect();
            prop_assert_eq!(flat, expected);
            for e in a.manifest.entries() {
                prop_assert!(e.duration_s <= 21.6 || e.source_sample_ids.len() == 1);
            }
        }
    }
}
