//! Synthetic multi-stream datasets with controllable trajectory bias.
//!
//! For identity `i`, camera `c` and stream `p` a sample vector is
//!
//! ```text
//! normalize(a * u(i,p) + b(i,c,p) + e)
//! ```
//!
//! where `u` is a random unit identity vector scaled by `identity_scale`,
//! `b` a trajectory bias of norm `sigma_traj` shared by every image of the
//! trajectory, and `e` Gaussian noise with per-coordinate standard deviation
//! `sigma_obs / sqrt(D)`. With probability `corruption` a stream loses the
//! identity signal for one sample: `u` is replaced by a fresh unit vector.
//!
//! Camera 1 forms the `val` split and camera 2 the `test` split; further
//! cameras get splits `cam3`, `cam4`, ... Ground truth links each camera 1
//! trajectory to the trajectories of the same identity on other cameras.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{validate_registry, EngineConfig, StreamDecl};
use crate::error::{Error, Result};
use crate::eval::{
    match_line, sample_queries, test_eval, validation_eval, EvalError, EvalReport, MatchStatus,
    RowScorer, ValidationGallery, VerifiedMatch,
};
use crate::geometry::{Polygon, Rect};
use crate::ingest::{
    detection_to_line, write_stream_file, Detection, EmbeddingSet, PartBox, Quarter, Track,
};
use crate::model::{
    FilterParams, FusionParams, SampleId, SplitSpec, StreamId, TrajectoryKey, ENSEMBLE_SLICED,
};
use crate::scoring::{FusionScorer, StreamScorer};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_ids: usize,
    pub images_per_id: usize,
    pub n_cameras: usize,
    pub dim: usize,
    pub identity_scale: f64,
    pub sigma_traj: f64,
    pub sigma_obs: f64,
    /// Chance that one stream of one sample carries no identity signal.
    pub corruption: f64,
    pub seed: u64,
    pub streams: Vec<String>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_ids: 40,
            images_per_id: 6,
            n_cameras: 2,
            dim: 1024,
            identity_scale: 1.0,
            sigma_traj: 1.0,
            sigma_obs: 2.5,
            corruption: 0.3,
            seed: 0,
            streams: ENSEMBLE_SLICED.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SynthSpec {
    /// Every image of an identity identical; any evaluation scores 1.
    pub fn noiseless() -> Self {
        Self {
            sigma_traj: 0.0,
            sigma_obs: 0.0,
            corruption: 0.0,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| SynthError::InvalidSpec(format!("{}: {e}", path.display())).into())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_ids == 0 || self.images_per_id == 0 || self.n_cameras == 0 || self.dim == 0 {
            return bad("n_ids, images_per_id, n_cameras and dim must be positive".into());
        }
        for (name, v) in [
            ("identity_scale", self.identity_scale),
            ("sigma_traj", self.sigma_traj),
            ("sigma_obs", self.sigma_obs),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!(
                    "{name} must be a finite nonnegative number, got {v}"
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.corruption) {
            return bad(format!(
                "corruption {} is not a probability",
                self.corruption
            ));
        }
        if self.identity_scale == 0.0 && self.sigma_traj == 0.0 && self.sigma_obs == 0.0 {
            return bad(
                "at least one of identity_scale, sigma_traj, sigma_obs must be positive".into(),
            );
        }
        if self.streams.is_empty() {
            return bad("at least one stream is required".into());
        }
        let decls: Vec<StreamDecl> = self
            .streams
            .iter()
            .map(|s| StreamDecl {
                name: s.clone(),
                dim: self.dim,
            })
            .collect();
        validate_registry(&decls).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        Ok(())
    }

    pub fn stream_ids(&self) -> Vec<StreamId> {
        self.streams.iter().map(StreamId::new).collect()
    }
}

const FRAME_STRIDE: u32 = 5;
const TRACK_SPACING: u32 = 1000;

pub fn split_name(camera: u32) -> String {
    match camera {
        1 => "val".into(),
        2 => "test".into(),
        c => format!("cam{c}"),
    }
}

/// A generated dataset, in memory.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub config: EngineConfig,
    /// Full-rate tracks, as a tracker would emit them.
    pub tracks: Vec<Track>,
    /// Ids of the frames that survive ingestion, per split.
    pub samples: BTreeMap<String, Vec<SampleId>>,
    pub embeddings: EmbeddingSet,
    pub matches: Vec<VerifiedMatch>,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Fish-shaped detection at a fixed pose, swimming towards +x.
pub fn synthetic_detection(id: SampleId) -> Detection {
    let x0 = 40.0 + f64::from(id.frame % 7) * 3.0;
    let y0 = 60.0 + f64::from(id.trajectory % 5) * 4.0;
    let part = |x: f64, y: f64, w: f64, h: f64| PartBox {
        bbox: Rect::new(x0 + x, y0 + y, w, h),
        occluded: false,
    };
    let parts = [
        ("head", part(680.0, 60.0, 120.0, 130.0)),
        ("dorsal_fin", part(330.0, 0.0, 110.0, 40.0)),
        ("tail_fin", part(0.0, 40.0, 120.0, 170.0)),
    ]
    .into_iter()
    .map(|(n, p)| (n.to_string(), p))
    .collect();
    // dorsal and ventral outlines bulge away from the shared lateral line
    let q1 = Polygon::from_coords(&[
        (x0 + 420.0, y0 + 125.0),
        (x0 + 420.0, y0 + 50.0),
        (x0 + 560.0, y0 + 30.0),
        (x0 + 700.0, y0 + 55.0),
        (x0 + 700.0, y0 + 125.0),
    ]);
    let q2 = Polygon::from_coords(&[
        (x0 + 420.0, y0 + 125.0),
        (x0 + 700.0, y0 + 125.0),
        (x0 + 700.0, y0 + 195.0),
        (x0 + 560.0, y0 + 220.0),
        (x0 + 420.0, y0 + 200.0),
    ]);
    let quarter_masks = [(Quarter::Q1, q1), (Quarter::Q2, q2)].into_iter().collect();
    Detection {
        sample_id: id,
        fish_bbox: Rect::new(x0, y0, 800.0, 250.0),
        parts,
        quarter_masks,
        image: Some(format!(
            "images/c{}_t{}_f{}.png",
            id.camera, id.trajectory, id.frame
        )),
    }
}

/// Per identity and stream: one vector per (camera, image).
type IdentityVectors = Vec<Vec<Vec<Vec<f32>>>>;

fn identity_vectors(spec: &SynthSpec, identity: usize) -> Result<IdentityVectors, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(identity as u64);
    let obs_sd = spec.sigma_obs / (spec.dim as f64).sqrt();
    let mut per_stream = Vec::with_capacity(spec.streams.len());
    for _ in &spec.streams {
        let u = unit_vector(&mut rng, spec.dim);
        let mut per_camera = Vec::with_capacity(spec.n_cameras);
        for _ in 0..spec.n_cameras {
            let bias: Vec<f64> = unit_vector(&mut rng, spec.dim)
                .into_iter()
                .map(|x| x * spec.sigma_traj)
                .collect();
            let mut images = Vec::with_capacity(spec.images_per_id);
            for _ in 0..spec.images_per_id {
                let corrupted = rng.random::<f64>() < spec.corruption;
                let fresh;
                let signal = if corrupted {
                    fresh = unit_vector(&mut rng, spec.dim);
                    &fresh
                } else {
                    &u
                };
                let v: Vec<f64> = (0..spec.dim)
                    .map(|d| {
                        let e: f64 = rng.sample(StandardNormal);
                        spec.identity_scale * signal[d] + bias[d] + obs_sd * e
                    })
                    .collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n == 0.0 || !n.is_finite() {
                    return Err(SynthError::InvalidSpec("generated a zero vector".into()));
                }
                images.push(v.iter().map(|x| (x / n) as f32).collect());
            }
            per_camera.push(images);
        }
        per_stream.push(per_camera);
    }
    Ok(per_stream)
}

/// Generates a dataset; identical specs give bit-identical datasets.
#[allow(clippy::needless_range_loop)]
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let streams = spec.stream_ids();
    let decls: Vec<StreamDecl> = spec
        .streams
        .iter()
        .map(|s| StreamDecl {
            name: s.clone(),
            dim: spec.dim,
        })
        .collect();
    let registry = validate_registry(&decls)?;

    // trajectory ids: camera 1 keeps identity order, other cameras are shuffled
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    master.set_stream(u64::MAX);
    let mut traj_of = vec![vec![0u32; spec.n_ids]; spec.n_cameras];
    for (c, slots) in traj_of.iter_mut().enumerate() {
        let mut perm: Vec<u32> = (0..spec.n_ids as u32).collect();
        if c > 0 {
            perm.shuffle(&mut master);
        }
        for (i, p) in perm.into_iter().enumerate() {
            slots[i] = p + 1 + 10_000 * c as u32;
        }
    }

    let vectors: Vec<IdentityVectors> = (0..spec.n_ids)
        .into_par_iter()
        .map(|i| identity_vectors(spec, i))
        .collect::<Result<_, _>>()?;

    let track_len = FRAME_STRIDE * (spec.images_per_id as u32 - 1) + 1;
    let start_of = |traj: u32| 10 + (traj % 10_000) * TRACK_SPACING;
    let mut tracks = Vec::new();
    let mut samples: BTreeMap<String, Vec<SampleId>> = BTreeMap::new();
    let mut embeddings = EmbeddingSet::new();
    for c in 0..spec.n_cameras {
        let camera = c as u32 + 1;
        let split = samples.entry(split_name(camera)).or_default();
        for i in 0..spec.n_ids {
            let traj = traj_of[c][i];
            let start = start_of(traj);
            let key = TrajectoryKey::new(camera, traj);
            let detections = (start..start + track_len)
                .map(|f| synthetic_detection(SampleId::new(camera, traj, f)))
                .collect();
            tracks.push(Track { key, detections });
            for img in 0..spec.images_per_id {
                let id = SampleId::new(camera, traj, start + FRAME_STRIDE * img as u32);
                split.push(id);
                for (p, stream) in streams.iter().enumerate() {
                    embeddings.insert(stream, id, &vectors[i][p][c][img], &registry)?;
                }
            }
        }
        split.sort_unstable();
    }
    tracks.sort_by_key(|t| t.key);

    let mut matches = Vec::new();
    for i in 0..spec.n_ids {
        for c in 1..spec.n_cameras {
            matches.push(VerifiedMatch {
                query: TrajectoryKey::new(1, traj_of[0][i]),
                gallery: TrajectoryKey::new(c as u32 + 1, traj_of[c][i]),
                status: MatchStatus::Confirmed,
                annotator: "synth".into(),
                timestamp: 0,
            });
        }
    }
    matches.sort_by_key(|m| (m.query, m.gallery));

    let frame_end = start_of(spec.n_ids as u32) + track_len;
    let splits = (1..=spec.n_cameras as u32)
        .map(|c| SplitSpec::new(split_name(c), c, 0, frame_end))
        .collect();
    let filter = FilterParams {
        min_traj_length: FilterParams::default().min_traj_length.min(track_len),
        ..FilterParams::default()
    };
    let config = EngineConfig {
        registry,
        fusion: FusionParams::new(streams),
        filter,
        splits,
    };
    Ok(SynthDataset {
        spec: spec.clone(),
        config,
        tracks,
        samples,
        embeddings,
        matches,
    })
}

impl SynthDataset {
    pub fn split(&self, name: &str) -> &[SampleId] {
        self.samples.get(name).map_or(&[], Vec::as_slice)
    }

    /// Cross-camera retrieval of `val` queries against the `test` gallery.
    pub fn test_report(&self, scorer: &dyn RowScorer) -> Result<EvalReport, EvalError> {
        test_eval(
            scorer,
            self.split("val"),
            self.split("test"),
            &self.matches,
            ("val", "test"),
        )
    }

    /// Within-trajectory retrieval on the `val` split.
    pub fn val_report(
        &self,
        scorer: &dyn RowScorer,
        per_id: usize,
        seed: u64,
    ) -> Result<EvalReport, EvalError> {
        let qs = sample_queries(self.split("val"), per_id, seed, ValidationGallery::Sampled)?;
        validation_eval(scorer, &qs, "val")
    }

    pub fn fusion_scorer(&self, params: FusionParams) -> FusionScorer<'_> {
        FusionScorer {
            set: &self.embeddings,
            params,
        }
    }

    pub fn stream_scorer(&self, stream: &StreamId) -> StreamScorer<'_> {
        StreamScorer {
            set: &self.embeddings,
            stream: stream.clone(),
        }
    }

    /// Writes `config.toml`, `detections.jsonl`, `embeddings/<stream>.rfe`
    /// and `matches.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let emb_dir = dir.join("embeddings");
        std::fs::create_dir_all(&emb_dir).map_err(|e| Error::io(&emb_dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.config.to_toml()).map_err(|e| Error::io(&path, e))?;

        let path = dir.join("detections.jsonl");
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
        for det in self.tracks.iter().flat_map(|t| &t.detections) {
            writeln!(out, "{}", detection_to_line(det)).map_err(|e| Error::io(&path, e))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;

        for (stream, vectors) in self.embeddings.streams() {
            write_stream_file(&emb_dir.join(format!("{stream}.rfe")), stream, vectors)?;
        }

        let path = dir.join("matches.jsonl");
        let text: String = self.matches.iter().map(|m| match_line(m) + "\n").collect();
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub sigma_traj: f64,
    pub single: BTreeMap<StreamId, f64>,
    pub ensemble: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasLadder {
    pub streams: Vec<StreamId>,
    pub rows: Vec<LadderRow>,
}

/// Cross-camera mAP of every single stream and of the fused ensemble, per
/// trajectory-bias level.
pub fn bias_ladder(base: &SynthSpec, sigmas: &[f64], params: &FusionParams) -> Result<BiasLadder> {
    let streams = base.stream_ids();
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma_traj in sigmas {
        let data = generate(&SynthSpec {
            sigma_traj,
            ..base.clone()
        })?;
        let single = streams
            .iter()
            .map(|s| Ok((s.clone(), data.test_report(&data.stream_scorer(s))?.map)))
            .collect::<Result<_, EvalError>>()?;
        let ensemble = data.test_report(&data.fusion_scorer(params.clone()))?.map;
        rows.push(LadderRow {
            sigma_traj,
            single,
            ensemble,
        });
    }
    Ok(BiasLadder { streams, rows })
}
