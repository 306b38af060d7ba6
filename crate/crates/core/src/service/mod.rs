//! Match-verification session and its HTTP front end.
//!
//! The session serves retrieval results for query trajectories, records
//! annotator decisions in an append-only JSONL log, and evaluates the
//! cross-camera protocol against the currently confirmed pairs.

mod http;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{router, serve};

use crate::config::StreamDecl;
use crate::error::Error;
use crate::eval::{
    confirmed_pairs, latest_decisions, match_line, EvalError, EvalMode, EvalReport, MatchStatus,
    VerifiedMatch,
};
use crate::gallery::GalleryIndex;
use crate::model::{FusionParams, SampleId, StreamId, TrajectoryKey};
use crate::pipeline::{retrieve_topk, Candidate, Dataset, Protocol, MATCHES_FILE};
use crate::stats::{bootstrap_ci, BootstrapParams, ConfidenceInterval};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown query {0:?}")]
    UnknownQuery(String),
    #[error("unknown trajectory {0}")]
    UnknownTrajectory(TrajectoryKey),
    #[error("gallery not built: {0}")]
    GalleryNotBuilt(String),
    #[error("no confirmed matches to evaluate against")]
    NoVerifiedMatches,
    #[error("{0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    Internal(String),
}

impl From<Error> for ServiceError {
    fn from(e: Error) -> Self {
        match e {
            Error::Eval(EvalError::NoVerifiedMatches) => ServiceError::NoVerifiedMatches,
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub query_split: String,
    pub gallery_split: String,
    pub params: FusionParams,
    /// Stream whose proposals are interleaved with the fused ones.
    pub baseline: Option<StreamId>,
    /// Root directory for `/api/image`.
    pub images: Option<PathBuf>,
    pub resamples: usize,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(params: FusionParams) -> Self {
        Self {
            query_split: "val".into(),
            gallery_split: "test".into(),
            params,
            baseline: None,
            images: None,
            resamples: 2000,
            seed: 0,
        }
    }
}

/// One proposed cross-camera pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub query: TrajectoryKey,
    /// Sample used to represent the query trajectory.
    pub representative: SampleId,
    pub proposed: TrajectoryKey,
    pub proposed_sample: SampleId,
    pub score: f64,
    /// `fused`, or the baseline stream that proposed the pair.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueView {
    pub total: usize,
    pub decided: usize,
    pub entries: Vec<QueueEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrieveResult {
    pub query: SampleId,
    pub gallery_size: usize,
    pub lambda: f64,
    pub tau: f64,
    pub k: u32,
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub query: TrajectoryKey,
    pub gallery: TrajectoryKey,
    pub status: MatchStatus,
    pub annotator: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub confirmed_pairs: usize,
    pub query_trajectories: usize,
    pub report: EvalReport,
    pub ci: ConfidenceInterval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelsView {
    pub streams: Vec<StreamDecl>,
    pub params: FusionParams,
    pub baseline: Option<StreamId>,
    pub query_split: String,
    pub gallery_split: String,
}

pub struct VerificationSession {
    dataset: Dataset,
    config: SessionConfig,
    galleries: BTreeMap<StreamId, GalleryIndex>,
    query_trajectories: BTreeSet<TrajectoryKey>,
    gallery_trajectories: BTreeSet<TrajectoryKey>,
    queue: Vec<QueueEntry>,
    log_path: PathBuf,
    decisions: RwLock<Vec<VerifiedMatch>>,
    writer: Mutex<File>,
}

fn parse_query(text: &str) -> Option<Result<SampleId, TrajectoryKey>> {
    if let Ok(id) = text.parse::<SampleId>() {
        return Some(Ok(id));
    }
    text.parse::<TrajectoryKey>().ok().map(Err)
}

impl VerificationSession {
    /// Opens a session on an ingested dataset whose gallery split has saved
    /// galleries. The dataset's match log is replayed and then appended to.
    pub fn open(dataset: Dataset, config: SessionConfig) -> Result<Self, ServiceError> {
        config
            .params
            .validate()
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let mut streams = config.params.streams.clone();
        if let Some(b) = &config.baseline {
            streams.insert(b.clone());
        }
        let galleries = dataset
            .load_galleries(&config.gallery_split, &streams)
            .map_err(|e| ServiceError::GalleryNotBuilt(e.to_string()))?;
        let log_path = dataset.dir.join(MATCHES_FILE);
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| ServiceError::Internal(format!("{}: {e}", log_path.display())))?;
        let mut session = Self {
            query_trajectories: dataset.trajectories(&config.query_split),
            gallery_trajectories: dataset.trajectories(&config.gallery_split),
            decisions: RwLock::new(dataset.matches.clone()),
            dataset,
            config,
            galleries,
            queue: Vec::new(),
            log_path,
            writer: Mutex::new(writer),
        };
        session.queue = session.build_queue()?;
        Ok(session)
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    fn representative(&self, key: &TrajectoryKey) -> Option<SampleId> {
        self.dataset
            .samples
            .iter()
            .filter(|r| r.split == self.config.query_split)
            .map(|r| r.id())
            .find(|id| id.trajectory_key() == *key)
    }

    fn top(
        &self,
        query: &SampleId,
        params: &FusionParams,
        k: usize,
    ) -> Result<(usize, Vec<Candidate>), ServiceError> {
        let vectors: BTreeMap<StreamId, &[f32]> = params
            .streams
            .iter()
            .map(|s| {
                self.dataset
                    .embeddings
                    .get(s, query)
                    .map(|v| (s.clone(), v))
                    .ok_or_else(|| ServiceError::UnknownQuery(query.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let (all, mut top) = retrieve_topk(query, &vectors, &self.galleries, params, k)?;
        for c in &mut top {
            c.image = self
                .dataset
                .record(&c.sample)
                .and_then(|r| r.detection.image.clone());
        }
        Ok((all.len(), top))
    }

    fn proposals(
        &self,
        params: &FusionParams,
        source: &str,
    ) -> Result<Vec<QueueEntry>, ServiceError> {
        let mut out = Vec::new();
        for key in &self.query_trajectories {
            let Some(rep) = self.representative(key) else {
                continue;
            };
            let (_, top) = self.top(&rep, params, 1)?;
            if let Some(best) = top.first() {
                out.push(QueueEntry {
                    query: *key,
                    representative: rep,
                    proposed: best.sample.trajectory_key(),
                    proposed_sample: best.sample,
                    score: best.score,
                    source: source.to_string(),
                });
            }
        }
        out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.query.cmp(&b.query)));
        Ok(out)
    }

    fn build_queue(&self) -> Result<Vec<QueueEntry>, ServiceError> {
        let fused = self.proposals(&self.config.params, "fused")?;
        let Some(baseline) = &self.config.baseline else {
            return Ok(fused);
        };
        let base_params = FusionParams {
            streams: [baseline.clone()].into(),
            ..self.config.params.clone()
        };
        let base = self.proposals(&base_params, baseline.as_str())?;
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut a = fused.into_iter();
        let mut b = base.into_iter();
        loop {
            let (x, y) = (a.next(), b.next());
            if x.is_none() && y.is_none() {
                break;
            }
            for e in [x, y].into_iter().flatten() {
                if seen.insert((e.query, e.proposed)) {
                    out.push(e);
                }
            }
        }
        Ok(out)
    }

    /// Undecided proposals in queue order.
    pub fn queue(&self, limit: usize) -> QueueView {
        let decisions = self.decisions.read().expect("decision lock");
        let decided_pairs = latest_decisions(&decisions);
        let pending: Vec<QueueEntry> = self
            .queue
            .iter()
            .filter(|e| !decided_pairs.contains_key(&(e.query, e.proposed)))
            .cloned()
            .collect();
        QueueView {
            total: self.queue.len(),
            decided: self.queue.len() - pending.len(),
            entries: pending.into_iter().take(limit).collect(),
        }
    }

    /// Top-`k` gallery samples for a sample id (`c:t:f`) or a query
    /// trajectory (`c:t`, represented by its first sample).
    pub fn retrieve(&self, query: &str, k: usize) -> Result<RetrieveResult, ServiceError> {
        let id = match parse_query(query) {
            Some(Ok(id)) => id,
            Some(Err(key)) => self
                .representative(&key)
                .ok_or_else(|| ServiceError::UnknownQuery(query.to_string()))?,
            None => return Err(ServiceError::UnknownQuery(query.to_string())),
        };
        if self.dataset.record(&id).is_none() {
            return Err(ServiceError::UnknownQuery(query.to_string()));
        }
        let (gallery_size, candidates) = self.top(&id, &self.config.params, k)?;
        Ok(RetrieveResult {
            query: id,
            gallery_size,
            lambda: self.config.params.lambda,
            tau: self.config.params.tau,
            k: self.config.params.k,
            candidates,
        })
    }

    /// Appends one decision to the log; later decisions on a pair win.
    pub fn record_verification(&self, req: VerifyRequest) -> Result<VerifiedMatch, ServiceError> {
        if !self.query_trajectories.contains(&req.query) {
            return Err(ServiceError::UnknownTrajectory(req.query));
        }
        if !self.gallery_trajectories.contains(&req.gallery) {
            return Err(ServiceError::UnknownTrajectory(req.gallery));
        }
        if req.annotator.trim().is_empty() {
            return Err(ServiceError::BadRequest(
                "annotator must be nonempty".into(),
            ));
        }
        let record = VerifiedMatch {
            query: req.query,
            gallery: req.gallery,
            status: req.status,
            annotator: req.annotator,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        let mut writer = self.writer.lock().expect("log writer lock");
        writeln!(writer, "{}", match_line(&record))
            .and_then(|_| writer.flush())
            .map_err(|e| ServiceError::Internal(format!("{}: {e}", self.log_path.display())))?;
        self.decisions
            .write()
            .expect("decision lock")
            .push(record.clone());
        Ok(record)
    }

    pub fn confirmed(&self) -> BTreeSet<(TrajectoryKey, TrajectoryKey)> {
        confirmed_pairs(&self.decisions.read().expect("decision lock"))
    }

    /// Evaluates the fused model against the current decisions.
    pub fn evaluation_snapshot(&self, mode: EvalMode) -> Result<Snapshot, ServiceError> {
        let decisions = self.decisions.read().expect("decision lock").clone();
        let confirmed = confirmed_pairs(&decisions).len();
        let protocol = match mode {
            EvalMode::Test => Protocol::test(&self.config.query_split, &self.config.gallery_split),
            EvalMode::Val => Protocol::validation(&self.config.query_split, self.config.seed),
        };
        let dataset = Dataset {
            matches: decisions,
            ..self.dataset.clone()
        };
        let report = dataset.evaluate(
            &dataset.fusion_scorer(self.config.params.clone()),
            &protocol,
        )?;
        let params = BootstrapParams::default()
            .with_resamples(self.config.resamples)
            .with_seed(self.config.seed);
        let ci = bootstrap_ci(&report.aps(), &params)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        Ok(Snapshot {
            confirmed_pairs: confirmed,
            query_trajectories: report.query_trajectories().len(),
            report,
            ci,
        })
    }

    pub fn models(&self) -> ModelsView {
        ModelsView {
            streams: self.dataset.config.registry.decls(),
            params: self.config.params.clone(),
            baseline: self.config.baseline.clone(),
            query_split: self.config.query_split.clone(),
            gallery_split: self.config.gallery_split.clone(),
        }
    }

    /// Resolves the image of a sample inside the images root.
    pub fn image_path(&self, sample: &str) -> Result<PathBuf, ServiceError> {
        let root = self
            .config
            .images
            .as_ref()
            .ok_or_else(|| ServiceError::NotFound("no image directory configured".into()))?;
        let id: SampleId = sample
            .parse()
            .map_err(|_| ServiceError::BadRequest(format!("bad sample id {sample:?}")))?;
        let rel = self
            .dataset
            .record(&id)
            .and_then(|r| r.detection.image.clone())
            .ok_or_else(|| ServiceError::NotFound(format!("no image for {id}")))?;
        let rel = Path::new(&rel);
        if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(ServiceError::NotFound(format!(
                "image path {} leaves the image root",
                rel.display()
            )));
        }
        let root = root
            .canonicalize()
            .map_err(|e| ServiceError::NotFound(format!("image root: {e}")))?;
        let path = root
            .join(rel)
            .canonicalize()
            .map_err(|_| ServiceError::NotFound(format!("image {} is missing", rel.display())))?;
        if !path.starts_with(&root) {
            return Err(ServiceError::NotFound(format!(
                "image path {} leaves the image root",
                rel.display()
            )));
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ingest_dataset;
    use crate::synth::{generate, SynthSpec};

    pub(crate) fn session(
        dir: &Path,
        with_matches: bool,
        baseline: Option<&str>,
    ) -> VerificationSession {
        let spec = SynthSpec {
            n_ids: 6,
            images_per_id: 3,
            dim: 16,
            ..SynthSpec::noiseless()
        };
        let data = generate(&spec).unwrap();
        data.write(dir).unwrap();
        if !with_matches {
            std::fs::remove_file(dir.join(MATCHES_FILE)).unwrap();
        }
        ingest_dataset(dir).unwrap();
        let ds = Dataset::open(dir, None).unwrap();
        ds.build_galleries("test").unwrap();
        let mut cfg = SessionConfig::new(ds.config.fusion.clone());
        cfg.baseline = baseline.map(StreamId::from);
        cfg.images = Some(dir.join("images"));
        VerificationSession::open(ds, cfg).unwrap()
    }

    #[test]
    fn verification_lifecycle() {
        let tmp = tempfile::tempdir().unwrap();
        let s = session(tmp.path(), false, None);
        assert!(matches!(
            s.evaluation_snapshot(EvalMode::Test),
            Err(ServiceError::NoVerifiedMatches)
        ));
        let q = s.queue(100);
        assert_eq!(q.total, 6);
        assert_eq!(q.decided, 0);
        let first = q.entries[0].clone();
        s.record_verification(VerifyRequest {
            query: first.query,
            gallery: first.proposed,
            status: MatchStatus::Confirmed,
            annotator: "ann".into(),
        })
        .unwrap();
        assert_eq!(s.confirmed().len(), 1);
        let snap = s.evaluation_snapshot(EvalMode::Test).unwrap();
        assert_eq!(snap.report.map, 1.0);
        assert_eq!(snap.query_trajectories, 1);
        assert_eq!(s.queue(100).decided, 1);

        s.record_verification(VerifyRequest {
            query: first.query,
            gallery: first.proposed,
            status: MatchStatus::Rejected,
            annotator: "ann".into(),
        })
        .unwrap();
        assert!(s.confirmed().is_empty());

        let err = s.record_verification(VerifyRequest {
            query: TrajectoryKey::new(9, 9),
            gallery: first.proposed,
            status: MatchStatus::Confirmed,
            annotator: "ann".into(),
        });
        assert!(matches!(err, Err(ServiceError::UnknownTrajectory(_))));
    }

    #[test]
    fn log_survives_restart() {
        let tmp = tempfile::tempdir().unwrap();
        let s = session(tmp.path(), false, None);
        let q = s.queue(2);
        for e in &q.entries {
            s.record_verification(VerifyRequest {
                query: e.query,
                gallery: e.proposed,
                status: MatchStatus::Confirmed,
                annotator: "ann".into(),
            })
            .unwrap();
        }
        let before = s.confirmed();
        drop(s);
        let ds = Dataset::open(tmp.path(), None).unwrap();
        let again =
            VerificationSession::open(ds.clone(), SessionConfig::new(ds.config.fusion.clone()))
                .unwrap();
        assert_eq!(again.confirmed(), before);
        assert_eq!(before.len(), 2);
    }

    #[test]
    fn retrieve_is_pure_and_bounded() {
        let tmp = tempfile::tempdir().unwrap();
        let s = session(tmp.path(), false, None);
        let q = s.queue(1).entries[0].representative.to_string();
        let a = s.retrieve(&q, 1).unwrap();
        let b = s.retrieve(&q, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.candidates.len(), 1);
        let all = s.retrieve(&q, 10_000).unwrap();
        assert_eq!(all.candidates.len(), all.gallery_size);
        assert_eq!(all.candidates[0], a.candidates[0]);
        assert!(matches!(
            s.retrieve("7:7:7", 3),
            Err(ServiceError::UnknownQuery(_))
        ));
        assert!(matches!(
            s.retrieve("nonsense", 3),
            Err(ServiceError::UnknownQuery(_))
        ));
        let by_traj = s
            .retrieve(&a.query.trajectory_key().to_string(), 1)
            .unwrap();
        assert_eq!(by_traj.query, a.query);
    }

    #[test]
    fn fused_score_matches_breakdown() {
        let tmp = tempfile::tempdir().unwrap();
        let s = session(tmp.path(), false, None);
        let q = s.queue(1).entries[0].representative.to_string();
        let r = s.retrieve(&q, 5).unwrap();
        for c in &r.candidates {
            let rr: f64 = c.breakdown.values().map(|b| b.rr).sum();
            let sc: f64 = c.breakdown.values().map(|b| b.s).sum();
            assert!((r.lambda * rr + (1.0 - r.lambda) * sc - c.score).abs() < 1e-12);
            assert_eq!(c.breakdown.len(), 4);
        }
    }

    #[test]
    fn baseline_interleaves() {
        let tmp = tempfile::tempdir().unwrap();
        let s = session(tmp.path(), false, Some("head"));
        let q = s.queue(100);
        // noiseless data: both models propose the same pairs, so duplicates collapse
        assert_eq!(q.total, 6);
        assert_eq!(q.entries[0].source, "fused");
    }

    #[test]
    fn images_stay_inside_root() {
        let tmp = tempfile::tempdir().unwrap();
        let s = session(tmp.path(), false, None);
        let q = s.queue(1).entries[0].representative;
        assert!(matches!(
            s.image_path(&q.to_string()),
            Err(ServiceError::NotFound(_))
        ));
        let rec = s
            .dataset
            .record(&q)
            .unwrap()
            .detection
            .image
            .clone()
            .unwrap();
        let path = tmp.path().join("images").join(&rec);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, b"png").unwrap();
        assert_eq!(
            s.image_path(&q.to_string()).unwrap(),
            path.canonicalize().unwrap()
        );
        assert!(matches!(
            s.image_path("x"),
            Err(ServiceError::BadRequest(_))
        ));
    }
}
