use super::records::Track;
use crate::model::FilterParams;

/// Applies the detection- and track-level quality filters.
///
/// Detections that are too small (bounding-box diagonal below `l_diag`) or
/// that have any occluded body part are removed first. Each trajectory is
/// then reduced to its longest run of consecutive frames (earliest run wins
/// ties) and dropped if that run is shorter than `min_traj_length`.
pub fn filter_detections(tracks: Vec<Track>, params: &FilterParams) -> Vec<Track> {
    tracks
        .into_iter()
        .filter_map(|track| {
            let kept: Vec<_> = track
                .detections
                .into_iter()
                .filter(|d| d.fish_bbox.diagonal() >= params.l_diag && !d.any_occluded())
                .collect();
            let (start, len) = longest_run(&kept)?;
            if len < params.min_traj_length as usize {
                return None;
            }
            let detections = kept.into_iter().skip(start).take(len).collect();
            Some(Track {
                key: track.key,
                detections,
            })
        })
        .collect()
}

/// Index and length of the longest run of consecutive frames.
fn longest_run(dets: &[super::records::Detection]) -> Option<(usize, usize)> {
    if dets.is_empty() {
        return None;
    }
    let mut best = (0, 1);
    let mut start = 0;
    for i in 1..=dets.len() {
        let continues = i < dets.len()
            && dets[i].sample_id.frame == dets[i - 1].sample_id.frame.wrapping_add(1);
        if !continues {
            let len = i - start;
            if len > best.1 {
                best = (start, len);
            }
            start = i;
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::geometry::Rect;
    use crate::ingest::records::{Detection, PartBox};
    use crate::model::{SampleId, TrajectoryKey};

    fn det(frame: u32, w: f64, h: f64, occluded: bool) -> Detection {
        let mut parts = BTreeMap::new();
        parts.insert(
            "head".to_string(),
            PartBox {
                bbox: Rect::new(0.0, 0.0, 10.0, 10.0),
                occluded,
            },
        );
        Detection {
            sample_id: SampleId::new(1, 3, frame),
            fish_bbox: Rect::new(0.0, 0.0, w, h),
            parts,
            quarter_masks: BTreeMap::new(),
            image: None,
        }
    }

    fn track(frames: impl IntoIterator<Item = u32>) -> Track {
        Track {
            key: TrajectoryKey::new(1, 3),
            detections: frames
                .into_iter()
                .map(|f| det(f, 300.0, 400.0, false))
                .collect(),
        }
    }

    fn params(l_diag: f64, min_len: u32) -> FilterParams {
        FilterParams {
            l_diag,
            min_traj_length: min_len,
            ..FilterParams::default()
        }
    }

    #[test]
    fn diagonal_500_passes_250() {
        let out = filter_detections(vec![track(0..1)], &params(250.0, 1));
        assert_eq!(out.len(), 1);
        let out = filter_detections(vec![track(0..1)], &params(500.5, 1));
        assert!(out.is_empty());
    }

    #[test]
    fn longest_uninterrupted_run_is_kept() {
        let t = track((1..=30).chain(35..=50));
        let out = filter_detections(vec![t], &params(250.0, 20));
        assert_eq!(out.len(), 1);
        assert_eq!(
            out[0].frames().collect::<Vec<_>>(),
            (1..=30).collect::<Vec<_>>()
        );
    }

    #[test]
    fn short_track_removed() {
        let out = filter_detections(vec![track(1..=19)], &params(250.0, 20));
        assert!(out.is_empty());
        let out = filter_detections(vec![track(1..=20)], &params(250.0, 20));
        assert_eq!(out[0].len(), 20);
    }

    #[test]
    fn ties_prefer_earliest_run() {
        let out = filter_detections(vec![track((1..=5).chain(10..=14))], &params(1.0, 1));
        assert_eq!(out[0].frames().next(), Some(1));
    }

    #[test]
    fn occlusion_splits_runs() {
        let mut t = track(1..=30);
        t.detections[10] = det(11, 300.0, 400.0, true);
        let out = filter_detections(vec![t], &params(250.0, 5));
        // 1..=10 and 12..=30; the latter is longer
        assert_eq!(out[0].frames().next(), Some(12));
        assert_eq!(out[0].len(), 19);
    }

    #[test]
    fn empty_output_is_valid() {
        assert!(filter_detections(Vec::new(), &params(1.0, 1)).is_empty());
    }
}
