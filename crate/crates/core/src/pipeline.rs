//! Dataset directories and the end-to-end steps run on them.
//!
//! ```text
//! <dataset>/config.toml            engine configuration
//! <dataset>/detections.jsonl       tracker output
//! <dataset>/embeddings/*.rfe       one file per stream
//! <dataset>/samples.jsonl          written by `ingest`
//! <dataset>/galleries/<split>/*.rfe  written by `gallery`
//! <dataset>/matches.jsonl          verified cross-camera matches
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::eval::{
    load_matches, sample_queries, test_eval, validation_eval, EvalMode, EvalReport, RowScorer,
    ValidationGallery, VerifiedMatch,
};
use crate::fusion::{fuse_row, StreamBreakdown};
use crate::gallery::{build_index, GalleryError, GalleryIndex};
use crate::geometry::{export_slice_crops, sample_layouts, CropDescriptor, GeometryParams};
use crate::ingest::{
    build_split, filter_detections, load_embedding_dir, parse_samples, parse_tracks, EmbeddingSet,
    SampleRecord,
};
use crate::model::{FusionParams, SampleId, StreamId, TrajectoryKey};
use crate::scoring::{FusionScorer, StreamScorer};

pub const CONFIG_FILE: &str = "config.toml";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const MATCHES_FILE: &str = "matches.jsonl";
pub const EMBEDDINGS_DIR: &str = "embeddings";
pub const GALLERIES_DIR: &str = "galleries";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub tracks_in: usize,
    pub tracks_kept: usize,
    pub detections_in: usize,
    pub samples: BTreeMap<String, usize>,
}

fn open_reader(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufReader::new(file))
}

/// Filters a detections file and writes the split sample list.
///
/// When `embeddings` is given, every sample must have a vector in every
/// configured stream.
pub fn ingest(
    detections: &Path,
    config: &EngineConfig,
    embeddings: Option<&Path>,
    samples_out: &Path,
) -> Result<IngestSummary> {
    let tracks = parse_tracks(open_reader(detections)?)?;
    let tracks_in = tracks.len();
    let detections_in = tracks.iter().map(|t| t.len()).sum();
    let kept = filter_detections(tracks, &config.filter);
    let splits = build_split(&kept, &config.splits, &config.filter)?;
    if let Some(dir) = embeddings {
        let set = load_embedding_dir(dir, &config.registry)?;
        let ids: Vec<SampleId> = splits.values().flatten().map(SampleRecord::id).collect();
        for stream in config.registry.streams() {
            build_index(&set, &ids, stream)?;
        }
    }
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(samples_out).map_err(|e| Error::io(samples_out, e))?,
    );
    for rec in splits.values().flatten() {
        writeln!(out, "{}", rec.to_line()).map_err(|e| Error::io(samples_out, e))?;
    }
    out.flush().map_err(|e| Error::io(samples_out, e))?;
    Ok(IngestSummary {
        tracks_in,
        tracks_kept: kept.len(),
        detections_in,
        samples: splits.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
    })
}

/// Runs [`ingest`] inside a dataset directory.
pub fn ingest_dataset(dir: &Path) -> Result<IngestSummary> {
    let config = EngineConfig::load(&dir.join(CONFIG_FILE))?;
    let emb = dir.join(EMBEDDINGS_DIR);
    ingest(
        &dir.join(DETECTIONS_FILE),
        &config,
        emb.is_dir().then_some(emb.as_path()),
        &dir.join(SAMPLES_FILE),
    )
}

/// Crops of one sample, or why its geometry failed.
pub type SliceOutcome = std::result::Result<Vec<CropDescriptor>, String>;

/// An ingested dataset, loaded into memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub config: EngineConfig,
    pub samples: Vec<SampleRecord>,
    pub embeddings: EmbeddingSet,
    pub matches: Vec<VerifiedMatch>,
}

impl Dataset {
    /// Loads `dir`; `config` overrides `dir/config.toml`.
    pub fn open(dir: &Path, config: Option<EngineConfig>) -> Result<Self> {
        let config = match config {
            Some(c) => c,
            None => EngineConfig::load(&dir.join(CONFIG_FILE))?,
        };
        let samples_path = dir.join(SAMPLES_FILE);
        if !samples_path.is_file() {
            return Err(Error::Usage(format!(
                "{} has no {SAMPLES_FILE}; run ingest first",
                dir.display()
            )));
        }
        let samples = parse_samples(open_reader(&samples_path)?)?;
        let emb_dir = dir.join(EMBEDDINGS_DIR);
        let mut embeddings = if emb_dir.is_dir() {
            load_embedding_dir(&emb_dir, &config.registry)?
        } else {
            EmbeddingSet::new()
        };
        let ids: BTreeSet<SampleId> = samples.iter().map(SampleRecord::id).collect();
        embeddings.retain(|id| ids.contains(id));
        let matches_path = dir.join(MATCHES_FILE);
        let matches = if matches_path.is_file() {
            load_matches(&matches_path)?
        } else {
            Vec::new()
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            samples,
            embeddings,
            matches,
        })
    }

    pub fn split_ids(&self, split: &str) -> Vec<SampleId> {
        self.samples
            .iter()
            .filter(|r| r.split == split)
            .map(SampleRecord::id)
            .collect()
    }

    pub fn record(&self, id: &SampleId) -> Option<&SampleRecord> {
        self.samples.iter().find(|r| r.id() == *id)
    }

    pub fn trajectories(&self, split: &str) -> BTreeSet<TrajectoryKey> {
        self.samples
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.id().trajectory_key())
            .collect()
    }

    pub fn gallery_dir(&self, split: &str) -> PathBuf {
        self.dir.join(GALLERIES_DIR).join(split)
    }

    /// Builds and saves one gallery index per configured stream.
    pub fn build_galleries(&self, split: &str) -> Result<Vec<GalleryIndex>> {
        let ids = self.split_ids(split);
        let dir = self.gallery_dir(split);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut out = Vec::new();
        for stream in self.config.registry.streams() {
            let index = build_index(&self.embeddings, &ids, stream)?;
            index.save(&dir.join(format!("{stream}.rfe")))?;
            out.push(index);
        }
        Ok(out)
    }

    /// Loads the saved gallery indices of `split` for `streams`.
    pub fn load_galleries(
        &self,
        split: &str,
        streams: &BTreeSet<StreamId>,
    ) -> Result<BTreeMap<StreamId, GalleryIndex>> {
        let dir = self.gallery_dir(split);
        let mut out = BTreeMap::new();
        for stream in streams {
            let path = dir.join(format!("{stream}.rfe"));
            if !path.is_file() {
                return Err(Error::Usage(format!(
                    "gallery for split {split:?}, stream {stream:?} is not built"
                )));
            }
            let index = GalleryIndex::load(&path, &self.config.registry)?;
            out.insert(stream.clone(), index);
        }
        Ok(out)
    }

    pub fn fusion_scorer(&self, params: FusionParams) -> FusionScorer<'_> {
        FusionScorer {
            set: &self.embeddings,
            params,
        }
    }

    pub fn stream_scorer(&self, stream: StreamId) -> StreamScorer<'_> {
        StreamScorer {
            set: &self.embeddings,
            stream,
        }
    }

    /// Evaluates a scorer under the given protocol.
    pub fn evaluate(&self, scorer: &dyn RowScorer, protocol: &Protocol) -> Result<EvalReport> {
        Ok(match protocol.mode {
            EvalMode::Val => {
                let ids = self.split_ids(&protocol.query_split);
                let qs = sample_queries(&ids, protocol.per_id, protocol.seed, protocol.gallery)?;
                validation_eval(scorer, &qs, &protocol.query_split)?
            }
            EvalMode::Test => test_eval(
                scorer,
                &self.split_ids(&protocol.query_split),
                &self.split_ids(&protocol.gallery_split),
                &self.matches,
                (&protocol.query_split, &protocol.gallery_split),
            )?,
        })
    }

    /// Slice crop descriptors of every sample of `split`; samples whose
    /// geometry fails are returned with the error message.
    pub fn slice_geometry(
        &self,
        split: &str,
        params: &GeometryParams,
    ) -> Result<Vec<(SampleId, SliceOutcome)>> {
        params.validate()?;
        Ok(self
            .samples
            .iter()
            .filter(|r| r.split == split)
            .map(|r| {
                let image = r.detection.image.clone().unwrap_or_default();
                let crops = sample_layouts(r, params)
                    .map(|layouts| {
                        layouts
                            .iter()
                            .flat_map(|l| export_slice_crops(l, &image))
                            .collect()
                    })
                    .map_err(|e| e.to_string());
                (r.id(), crops)
            })
            .collect())
    }
}

/// Which queries and gallery an evaluation uses.
#[derive(Clone, Debug, PartialEq)]
pub struct Protocol {
    pub mode: EvalMode,
    pub query_split: String,
    pub gallery_split: String,
    /// Images sampled per trajectory in validation mode.
    pub per_id: usize,
    pub gallery: ValidationGallery,
    pub seed: u64,
}

impl Protocol {
    pub fn validation(split: &str, seed: u64) -> Self {
        Self {
            mode: EvalMode::Val,
            query_split: split.into(),
            gallery_split: split.into(),
            per_id: 5,
            gallery: ValidationGallery::Sampled,
            seed,
        }
    }

    pub fn test(query_split: &str, gallery_split: &str) -> Self {
        Self {
            mode: EvalMode::Test,
            query_split: query_split.into(),
            gallery_split: gallery_split.into(),
            per_id: 5,
            gallery: ValidationGallery::Sampled,
            seed: 0,
        }
    }
}

/// One retrieved gallery item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub rank: usize,
    pub sample: SampleId,
    pub score: f64,
    pub breakdown: BTreeMap<StreamId, StreamBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

/// Top-`k` gallery items for a query vector set, using saved galleries.
///
/// `query_vectors` maps each fused stream to the query's unit vector. The
/// query itself is never returned.
pub fn retrieve_topk(
    query: &SampleId,
    query_vectors: &BTreeMap<StreamId, &[f32]>,
    galleries: &BTreeMap<StreamId, GalleryIndex>,
    params: &FusionParams,
    k: usize,
) -> Result<(Vec<SampleId>, Vec<Candidate>)> {
    let mut candidates: Option<Vec<SampleId>> = None;
    let mut rows = BTreeMap::new();
    for stream in &params.streams {
        let index = galleries
            .get(stream)
            .ok_or_else(|| Error::Usage(format!("gallery for stream {stream:?} is not loaded")))?;
        let keep: Vec<usize> = (0..index.len())
            .filter(|&j| index.ids[j] != *query)
            .collect();
        let ids: Vec<SampleId> = keep.iter().map(|&j| index.ids[j]).collect();
        if let Some(c) = &candidates {
            if *c != ids {
                return Err(Error::Usage(format!(
                    "gallery of stream {stream:?} holds different samples"
                )));
            }
        } else {
            candidates = Some(ids);
        }
        let q = query_vectors
            .get(stream)
            .ok_or_else(|| GalleryError::MissingEmbedding {
                stream: stream.to_string(),
                samples: vec![*query],
            })?;
        let full = index.cosine_row(q)?;
        rows.insert(stream.clone(), keep.iter().map(|&j| full[j]).collect());
    }
    let candidates = candidates.unwrap_or_default();
    let fused = fuse_row(&rows, params)?;
    let order = crate::eval::ranking(&fused.fused);
    let top = order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(pos, j)| Candidate {
            rank: pos + 1,
            sample: candidates[j],
            score: fused.fused[j],
            breakdown: fused
                .breakdown
                .iter()
                .map(|(s, parts)| (s.clone(), parts[j].clone()))
                .collect(),
            image: None,
        })
        .collect();
    Ok((candidates, top))
}
