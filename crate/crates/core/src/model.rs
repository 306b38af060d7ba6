//! Shared identifiers and parameter bundles.
//!
//! Every type here is an immutable value type. Identifiers have a compact
//! textual form (`camera:trajectory:frame` for samples, `camera:trajectory`
//! for trajectories) which is what the file formats and the HTTP API use.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParseIdError;

/// One ROI occurrence: a detection of one fish in one frame of one camera.
///
/// Trajectory ids are assigned by the tracker per camera, so the same
/// `trajectory` value on two cameras denotes two unrelated tracks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SampleId {
    pub camera: u32,
    pub trajectory: u32,
    pub frame: u32,
}

impl SampleId {
    pub const fn new(camera: u32, trajectory: u32, frame: u32) -> Self {
        Self {
            camera,
            trajectory,
            frame,
        }
    }

    pub const fn trajectory_key(&self) -> TrajectoryKey {
        TrajectoryKey {
            camera: self.camera,
            trajectory: self.trajectory,
        }
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.camera, self.trajectory, self.frame)
    }
}

impl FromStr for SampleId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 3 {
            return Err(ParseIdError(s.to_string()));
        }
        let num = |p: &str| p.parse::<u32>().map_err(|_| ParseIdError(s.to_string()));
        Ok(Self::new(num(parts[0])?, num(parts[1])?, num(parts[2])?))
    }
}

impl TryFrom<String> for SampleId {
    type Error = ParseIdError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<SampleId> for String {
    fn from(value: SampleId) -> Self {
        value.to_string()
    }
}

/// A tracker trajectory, scoped to its camera. Used as the proxy identity label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TrajectoryKey {
    pub camera: u32,
    pub trajectory: u32,
}

impl TrajectoryKey {
    pub const fn new(camera: u32, trajectory: u32) -> Self {
        Self { camera, trajectory }
    }
}

impl fmt::Display for TrajectoryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.camera, self.trajectory)
    }
}

impl FromStr for TrajectoryKey {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (c, t) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| ParseIdError(s.to_string()))?;
        let num = |p: &str| p.parse::<u32>().map_err(|_| ParseIdError(s.to_string()));
        Ok(Self::new(num(c)?, num(t)?))
    }
}

impl TryFrom<String> for TrajectoryKey {
    type Error = ParseIdError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<TrajectoryKey> for String {
    fn from(value: TrajectoryKey) -> Self {
        value.to_string()
    }
}

/// Name of one embedding producer (a patch type or a sliced-patch fusion head).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StreamId(String);

impl StreamId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StreamId {
    fn from(value: &str) -> Self {
        Self::new(value)
    }
}

impl From<String> for StreamId {
    fn from(value: String) -> Self {
        Self(value)
    }
}

/// Stream names known out of the box.
pub const DEFAULT_STREAMS: &[&str] = &[
    "full_image",
    "head",
    "dorsal_fin",
    "q1",
    "q2",
    "q1_sliced",
    "q2_sliced",
    "q1_s1",
    "q1_s2",
    "q1_s3",
    "q2_s1",
    "q2_s2",
    "q2_s3",
];

/// The four-stream sliced ensemble.
pub const ENSEMBLE_SLICED: &[&str] = &["q1_sliced", "q2_sliced", "head", "dorsal_fin"];

/// Parse a comma separated stream list such as `q1_sliced,q2_sliced,head`.
pub fn parse_stream_list(s: &str) -> Vec<StreamId> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(StreamId::new)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    /// Weight of the reciprocal-rank term; `1 - lambda` weighs the scaled similarities.
    pub lambda: f64,
    /// Temperature of the exponential similarity scaling.
    pub tau: f64,
    /// Rank offset in `1 / (k + rank)`.
    pub k: u32,
    pub streams: BTreeSet<StreamId>,
}

impl FusionParams {
    pub fn new<I, S>(streams: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<StreamId>,
    {
        Self {
            lambda: 0.75,
            tau: 0.7,
            k: 20,
            streams: streams.into_iter().map(Into::into).collect(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_k(mut self, k: u32) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<(), crate::error::ConfigError> {
        use crate::error::ConfigError;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ConfigError::Invalid(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.streams.is_empty() {
            return Err(ConfigError::Invalid("fusion stream set is empty".into()));
        }
        Ok(())
    }
}

impl Default for FusionParams {
    fn default() -> Self {
        Self::new(ENSEMBLE_SLICED.iter().copied())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Minimum fish bounding-box diagonal in pixels.
    pub l_diag: f64,
    /// Minimum number of consecutive frames of a retained track.
    pub min_traj_length: u32,
    pub frame_stride: u32,
    pub min_foreground_fraction: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            l_diag: 600.0,
            min_traj_length: 20,
            frame_stride: 5,
            min_foreground_fraction: 0.25,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), crate::error::ConfigError> {
        use crate::error::ConfigError;
        if self.l_diag.is_nan()
            || self.l_diag <= 0.0
            || self.min_traj_length == 0
            || self.frame_stride == 0
        {
            return Err(ConfigError::Invalid(
                "filter parameters must be strictly positive".into(),
            ));
        }
        if !(self.min_foreground_fraction > 0.0 && self.min_foreground_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "min_foreground_fraction must lie in (0, 1), got {}",
                self.min_foreground_fraction
            )));
        }
        Ok(())
    }
}

/// A named frame range `[start, end)` of one camera.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub camera: u32,
    pub start: u32,
    pub end: u32,
}

impl SplitSpec {
    pub fn new(name: impl Into<String>, camera: u32, start: u32, end: u32) -> Self {
        Self {
            name: name.into(),
            camera,
            start,
            end,
        }
    }

    pub fn contains(&self, id: &SampleId) -> bool {
        id.camera == self.camera && id.frame >= self.start && id.frame < self.end
    }
}
