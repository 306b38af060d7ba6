//! Line-delimited detection records.
//!
//! Each nonblank line of a detections file is one JSON object:
//!
//! ```text
//! {"camera":1,"traj":7,"frame":100,
//!  "fish_bbox":[x,y,w,h],
//!  "parts":[{"name":"head","bbox":[x,y,w,h],"occluded":false}, ...],
//!  "masks":[{"quarter":"Q1","poly":"x1 y1 x2 y2 x3 y3 ..."}, ...],
//!  "image":"relative/path.jpg"}
//! ```
//!
//! `parts`, `masks` and `image` may be omitted. Lines starting with `#` are
//! comments. The same encoding, plus a `"split"` field, is used for the
//! sample list of an ingested dataset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::geometry::{Point, Polygon, Rect};
use crate::model::{SampleId, TrajectoryKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quarter {
    Q1,
    Q2,
}

impl Quarter {
    pub const ALL: [Quarter; 2] = [Quarter::Q1, Quarter::Q2];
}

impl std::fmt::Display for Quarter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Quarter::Q1 => "Q1",
            Quarter::Q2 => "Q2",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartBox {
    pub bbox: Rect,
    pub occluded: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub sample_id: SampleId,
    pub fish_bbox: Rect,
    /// Body-part boxes keyed by part name (`head`, `dorsal_fin`, `tail_fin`).
    pub parts: BTreeMap<String, PartBox>,
    pub quarter_masks: BTreeMap<Quarter, Polygon>,
    pub image: Option<String>,
}

impl Detection {
    pub fn any_occluded(&self) -> bool {
        self.parts.values().any(|p| p.occluded)
    }

    pub fn part(&self, name: &str) -> Option<&Rect> {
        self.parts.get(name).map(|p| &p.bbox)
    }
}

/// All detections of one tracker trajectory, in ascending frame order.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub key: TrajectoryKey,
    pub detections: Vec<Detection>,
}

impl Track {
    pub fn frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.detections.iter().map(|d| d.sample_id.frame)
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PartLine {
    name: String,
    bbox: Rect,
    #[serde(default)]
    occluded: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MaskLine {
    quarter: Quarter,
    poly: String,
}

/// Wire form of one line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct RecordLine {
    camera: u32,
    traj: u32,
    frame: u32,
    fish_bbox: Rect,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    parts: Vec<PartLine>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    masks: Vec<MaskLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub(crate) split: Option<String>,
}

pub fn parse_polygon(text: &str) -> Result<Polygon, String> {
    let nums = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| format!("bad coordinate {t:?}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if nums.len() % 2 != 0 {
        return Err("odd number of polygon coordinates".into());
    }
    if nums.iter().any(|v| !v.is_finite()) {
        return Err("non-finite polygon coordinate".into());
    }
    let poly = Polygon::new(nums.chunks(2).map(|c| Point::new(c[0], c[1])).collect());
    if poly.vertices().len() < 3 {
        return Err("polygon needs at least 3 vertices".into());
    }
    if poly.area() == 0.0 {
        return Err("polygon has zero area".into());
    }
    Ok(poly)
}

pub fn format_polygon(poly: &Polygon) -> String {
    let mut out = String::new();
    for (i, p) in poly.vertices().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{} {}", p.x, p.y);
    }
    out
}

impl RecordLine {
    pub(crate) fn into_detection(self) -> Result<Detection, String> {
        if !self.fish_bbox.is_positive() {
            return Err("fish_bbox must have positive width and height".into());
        }
        let mut parts = BTreeMap::new();
        for p in self.parts {
            if parts
                .insert(
                    p.name.clone(),
                    PartBox {
                        bbox: p.bbox,
                        occluded: p.occluded,
                    },
                )
                .is_some()
            {
                return Err(format!("part {:?} listed twice", p.name));
            }
        }
        let mut quarter_masks = BTreeMap::new();
        for m in self.masks {
            let poly = parse_polygon(&m.poly)?;
            if quarter_masks.insert(m.quarter, poly).is_some() {
                return Err(format!("mask {} listed twice", m.quarter));
            }
        }
        Ok(Detection {
            sample_id: SampleId::new(self.camera, self.traj, self.frame),
            fish_bbox: self.fish_bbox,
            parts,
            quarter_masks,
            image: self.image,
        })
    }

    pub(crate) fn from_detection(d: &Detection, split: Option<&str>) -> Self {
        Self {
            camera: d.sample_id.camera,
            traj: d.sample_id.trajectory,
            frame: d.sample_id.frame,
            fish_bbox: d.fish_bbox,
            parts: d
                .parts
                .iter()
                .map(|(name, p)| PartLine {
                    name: name.clone(),
                    bbox: p.bbox,
                    occluded: p.occluded,
                })
                .collect(),
            masks: d
                .quarter_masks
                .iter()
                .map(|(&quarter, poly)| MaskLine {
                    quarter,
                    poly: format_polygon(poly),
                })
                .collect(),
            image: d.image.clone(),
            split: split.map(str::to_string),
        }
    }
}

/// Serializes one detection as a single line (no trailing newline).
pub fn detection_to_line(d: &Detection) -> String {
    serde_json::to_string(&RecordLine::from_detection(d, None))
        .expect("detection records always serialize")
}

pub fn parse_detection_line(line: &str) -> Result<Detection, String> {
    let rec: RecordLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    rec.into_detection()
}

/// Parses a detections file and groups records into tracks.
///
/// Tracks come back ordered by `(camera, trajectory)` with frames ascending.
pub fn parse_tracks<R: BufRead>(reader: R) -> Result<Vec<Track>, IngestError> {
    let mut grouped: BTreeMap<TrajectoryKey, BTreeMap<u32, Detection>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let det = parse_detection_line(trimmed).map_err(|reason| IngestError::MalformedRecord {
            line: line_no,
            reason,
        })?;
        let id = det.sample_id;
        let frames = grouped.entry(id.trajectory_key()).or_default();
        if frames.insert(id.frame, det).is_some() {
            return Err(IngestError::DuplicateFrameInTrack(id));
        }
    }
    Ok(grouped
        .into_iter()
        .map(|(key, frames)| Track {
            key,
            detections: frames.into_values().collect(),
        })
        .collect())
}
