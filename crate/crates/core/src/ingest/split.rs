use std::collections::BTreeMap;
use std::io::BufRead;

use super::records::{Detection, Quarter, RecordLine, Track};
use super::IngestError;
use crate::geometry::Polygon;
use crate::model::{FilterParams, SampleId, SplitSpec};

/// Fraction of a mask's enclosing axis-aligned rectangle covered by the mask.
///
/// Computed analytically as shoelace area over bounding-rectangle area.
pub fn foreground_fraction(mask: &Polygon) -> Result<f64, IngestError> {
    let area = mask.area();
    let rect = mask.bounding_rect().area();
    if area == 0.0 || rect == 0.0 || !area.is_finite() {
        return Err(IngestError::DegeneratePolygon);
    }
    Ok((area / rect).min(1.0))
}

/// A detection that made it into a dataset split.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub split: String,
    pub detection: Detection,
}

impl SampleRecord {
    pub fn id(&self) -> SampleId {
        self.detection.sample_id
    }

    pub fn mask(&self, q: Quarter) -> Option<&Polygon> {
        self.detection.quarter_masks.get(&q)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(&RecordLine::from_detection(
            &self.detection,
            Some(&self.split),
        ))
        .expect("sample records always serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, String> {
        let mut rec: RecordLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let split = rec.split.take().ok_or("sample record without split")?;
        Ok(Self {
            split,
            detection: rec.into_detection()?,
        })
    }
}

pub fn parse_samples<R: BufRead>(reader: R) -> Result<Vec<SampleRecord>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let malformed = |reason: String| IngestError::MalformedRecord {
            line: idx + 1,
            reason,
        };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(SampleRecord::from_line(line.trim()).map_err(malformed)?);
    }
    Ok(out)
}

fn check_overlaps(splits: &[SplitSpec]) -> Result<(), IngestError> {
    for (i, a) in splits.iter().enumerate() {
        for b in &splits[i + 1..] {
            if a.camera == b.camera && a.start < b.end && b.start < a.end {
                return Err(IngestError::OverlappingSplits {
                    first: a.name.clone(),
                    second: b.name.clone(),
                    camera: a.camera,
                });
            }
        }
    }
    Ok(())
}

fn masks_pass(det: &Detection, min_fraction: f64) -> bool {
    Quarter::ALL.iter().all(|q| {
        det.quarter_masks
            .get(q)
            .and_then(|m| foreground_fraction(m).ok())
            .is_some_and(|f| f > min_fraction)
    })
}

/// Samples filtered tracks into named splits.
///
/// Every `frame_stride`-th detection is taken, counting from the first frame
/// of the track. A sample survives only if both quarter masks exist and each
/// covers more than `min_foreground_fraction` of its enclosing rectangle.
/// Output maps split name to records sorted by sample id; every configured
/// split appears, possibly empty.
pub fn build_split(
    tracks: &[Track],
    splits: &[SplitSpec],
    params: &FilterParams,
) -> Result<BTreeMap<String, Vec<SampleRecord>>, IngestError> {
    check_overlaps(splits)?;
    let stride = params.frame_stride.max(1);
    let mut out: BTreeMap<String, Vec<SampleRecord>> = splits
        .iter()
        .map(|s| (s.name.clone(), Vec::new()))
        .collect();
    for track in tracks {
        let Some(first) = track.detections.first() else {
            continue;
        };
        let anchor = first.sample_id.frame;
        for det in &track.detections {
            if (det.sample_id.frame - anchor) % stride != 0 {
                continue;
            }
            if !masks_pass(det, params.min_foreground_fraction) {
                continue;
            }
            if let Some(split) = splits.iter().find(|s| s.contains(&det.sample_id)) {
                out.get_mut(&split.name)
                    .expect("every split has an entry")
                    .push(SampleRecord {
                        split: split.name.clone(),
                        detection: det.clone(),
                    });
            }
        }
    }
    for records in out.values_mut() {
        records.sort_by_key(SampleRecord::id);
    }
    Ok(out)
}
