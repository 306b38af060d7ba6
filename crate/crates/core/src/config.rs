//! Engine configuration file and the stream registry.
//!
//! The configuration is a TOML document:
//!
//! ```toml
//! [[stream]]
//! name = "q1_sliced"
//! dim = 1024
//!
//! [[stream]]
//! name = "head"
//! dim = 512
//!
//! [fusion]
//! lambda = 0.75
//! tau = 0.7
//! k = 20
//! streams = ["q1_sliced", "head"]
//!
//! [filter]
//! l_diag = 600.0
//! min_traj_length = 20
//! frame_stride = 5
//! min_foreground_fraction = 0.25
//!
//! [[split]]
//! name = "val"
//! camera = 1
//! start = 14750
//! end = 15930
//! ```
//!
//! `fusion` and `filter` are optional and fall back to the defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::model::{FilterParams, FusionParams, SplitSpec, StreamId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDecl {
    pub name: String,
    pub dim: usize,
}

/// Validated set of streams with their embedding dimensions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StreamRegistry {
    dims: BTreeMap<StreamId, usize>,
}

impl StreamRegistry {
    pub fn dim(&self, stream: &StreamId) -> Option<usize> {
        self.dims.get(stream).copied()
    }

    pub fn contains(&self, stream: &StreamId) -> bool {
        self.dims.contains_key(stream)
    }

    pub fn streams(&self) -> impl Iterator<Item = &StreamId> {
        self.dims.keys()
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn decls(&self) -> Vec<StreamDecl> {
        self.dims
            .iter()
            .map(|(s, &dim)| StreamDecl {
                name: s.to_string(),
                dim,
            })
            .collect()
    }
}

/// Builds the registry, rejecting duplicate names and zero dimensions.
pub fn validate_registry(decls: &[StreamDecl]) -> Result<StreamRegistry, ConfigError> {
    let mut dims = BTreeMap::new();
    for decl in decls {
        if decl.name.is_empty() {
            return Err(ConfigError::EmptyStreamName);
        }
        if decl.dim == 0 {
            return Err(ConfigError::ZeroDimension(decl.name.clone()));
        }
        if dims.insert(StreamId::new(&decl.name), decl.dim).is_some() {
            return Err(ConfigError::DuplicateStream(decl.name.clone()));
        }
    }
    Ok(StreamRegistry { dims })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawConfig {
    #[serde(default, rename = "stream")]
    streams: Vec<StreamDecl>,
    #[serde(default)]
    fusion: Option<FusionParams>,
    #[serde(default)]
    filter: FilterParams,
    #[serde(default, rename = "split")]
    splits: Vec<SplitSpec>,
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub registry: StreamRegistry,
    pub fusion: FusionParams,
    pub filter: FilterParams,
    pub splits: Vec<SplitSpec>,
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let registry = validate_registry(&raw.streams)?;
        let fusion = match raw.fusion {
            Some(f) => f,
            None => FusionParams::new(registry.streams().cloned()),
        };
        fusion.validate()?;
        if let Some(s) = fusion.streams.iter().find(|s| !registry.contains(s)) {
            return Err(ConfigError::UnknownStream(s.to_string()));
        }
        raw.filter.validate()?;
        for split in &raw.splits {
            if split.start >= split.end {
                return Err(ConfigError::Invalid(format!(
                    "split {:?} on camera {} has an empty frame range",
                    split.name, split.camera
                )));
            }
        }
        Ok(Self {
            registry,
            fusion,
            filter: raw.filter,
            splits: raw.splits,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text)?)
    }

    pub fn to_toml(&self) -> String {
        let raw = RawConfig {
            streams: self.registry.decls(),
            fusion: Some(self.fusion.clone()),
            filter: self.filter.clone(),
            splits: self.splits.clone(),
        };
        toml::to_string(&raw).expect("engine config is always representable as TOML")
    }
}
