//! Retrieval evaluation: average precision, validation (within-trajectory)
//! and cross-camera test protocols, and verified-match bookkeeping.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{FusionParams, SampleId, TrajectoryKey};
use crate::stats::{bootstrap_ci, BootstrapParams, ConfidenceInterval};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("query has no relevant gallery item")]
    NoRelevant,
    #[error("relevant item {0} is not in the ranked gallery")]
    RelevantNotInGallery(String),
    #[error("query set is empty")]
    EmptyQuerySet,
    #[error("no confirmed cross-camera matches")]
    NoVerifiedMatches,
    #[error("reports were computed on different query sets")]
    QuerySetMismatch,
    #[error("no scores for query {0}")]
    UnknownQuery(SampleId),
    #[error("no scores for gallery item {0}")]
    UnknownCandidate(SampleId),
    #[error("scorer failed: {0}")]
    Scorer(String),
    #[error("line {line}: malformed match record: {reason}")]
    MalformedMatch { line: usize, reason: String },
}

/// AP from the relevance flags of a ranked list.
///
/// `AP = (1/R) * sum over relevant positions r of (relevant in top r) / r`.
pub fn average_precision_flags(hits: &[bool], n_relevant: usize) -> Result<f64, EvalError> {
    if n_relevant == 0 {
        return Err(EvalError::NoRelevant);
    }
    let mut found = 0usize;
    let mut sum = 0.0;
    for (pos, &hit) in hits.iter().enumerate() {
        if hit {
            found += 1;
            sum += found as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / n_relevant as f64)
}

/// AP of a ranked gallery list against a relevant set that must be part of it.
pub fn average_precision<T: Ord + std::fmt::Debug>(
    ranked: &[T],
    relevant: &BTreeSet<T>,
) -> Result<f64, EvalError> {
    if relevant.is_empty() {
        return Err(EvalError::NoRelevant);
    }
    let hits: Vec<bool> = ranked.iter().map(|id| relevant.contains(id)).collect();
    let found = hits.iter().filter(|&&h| h).count();
    if found < relevant.len() {
        let ranked_set: BTreeSet<&T> = ranked.iter().collect();
        let missing = relevant
            .iter()
            .find(|r| !ranked_set.contains(r))
            .expect("some relevant item is missing");
        return Err(EvalError::RelevantNotInGallery(format!("{missing:?}")));
    }
    average_precision_flags(&hits, relevant.len())
}

/// Candidate positions ordered by descending score; ties keep candidate order.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Anything that can score a query against an explicit candidate list.
///
/// Validation removes the query from its own candidate list before calling
/// the scorer, so scorers that rank internally (fusion) never see the
/// self-match.
pub trait RowScorer: Sync {
    fn score(&self, query: &SampleId, candidates: &[SampleId]) -> Result<Vec<f64>, EvalError>;

    /// Short description of the model or stream set.
    fn descriptor(&self) -> String;

    fn fusion_params(&self) -> Option<FusionParams> {
        None
    }
}

/// Precomputed query-by-gallery scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub descriptor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<FusionParams>,
    pub queries: Vec<SampleId>,
    pub gallery: Vec<SampleId>,
    pub scores: Matrix<f64>,
}

impl ScoreMatrix {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn lookup(&self) -> MatrixScorer<'_> {
        MatrixScorer {
            matrix: self,
            rows: self
                .queries
                .iter()
                .enumerate()
                .map(|(i, q)| (*q, i))
                .collect(),
            cols: self
                .gallery
                .iter()
                .enumerate()
                .map(|(j, g)| (*g, j))
                .collect(),
        }
    }
}

pub struct MatrixScorer<'a> {
    matrix: &'a ScoreMatrix,
    rows: HashMap<SampleId, usize>,
    cols: HashMap<SampleId, usize>,
}

impl RowScorer for MatrixScorer<'_> {
    fn score(&self, query: &SampleId, candidates: &[SampleId]) -> Result<Vec<f64>, EvalError> {
        let i = *self
            .rows
            .get(query)
            .ok_or(EvalError::UnknownQuery(*query))?;
        let row = self.matrix.scores.row(i);
        candidates
            .iter()
            .map(|c| {
                self.cols
                    .get(c)
                    .map(|&j| row[j])
                    .ok_or(EvalError::UnknownCandidate(*c))
            })
            .collect()
    }

    fn descriptor(&self) -> String {
        self.matrix.descriptor.clone()
    }

    fn fusion_params(&self) -> Option<FusionParams> {
        self.matrix.params.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryEntry {
    pub id: SampleId,
    pub relevant: BTreeSet<SampleId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySet {
    pub queries: Vec<QueryEntry>,
    /// Candidate pool; each query is removed from it before scoring.
    pub gallery: Vec<SampleId>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationGallery {
    /// Only the sampled images form the gallery.
    #[default]
    Sampled,
    /// Every image of the split forms the gallery.
    FullSplit,
}

/// Samples up to `per_id` images per trajectory for within-split retrieval.
///
/// Trajectories are visited in sorted order and all draws come from one
/// generator seeded with `seed`, so identical inputs give identical sets.
pub fn sample_queries(
    split: &[SampleId],
    per_id: usize,
    seed: u64,
    gallery_mode: ValidationGallery,
) -> Result<QuerySet, EvalError> {
    if split.is_empty() || per_id == 0 {
        return Err(EvalError::EmptyQuerySet);
    }
    let mut groups: BTreeMap<TrajectoryKey, Vec<SampleId>> = BTreeMap::new();
    for id in split {
        groups.entry(id.trajectory_key()).or_default().push(*id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled: Vec<SampleId> = Vec::new();
    for members in groups.values_mut() {
        members.sort_unstable();
        members.dedup();
        let take = per_id.min(members.len());
        let mut picks = rand::seq::index::sample(&mut rng, members.len(), take).into_vec();
        picks.sort_unstable();
        sampled.extend(picks.into_iter().map(|i| members[i]));
    }
    let gallery: Vec<SampleId> = match gallery_mode {
        ValidationGallery::Sampled => sampled.clone(),
        ValidationGallery::FullSplit => groups.values().flatten().copied().collect(),
    };
    let mut by_traj: BTreeMap<TrajectoryKey, Vec<SampleId>> = BTreeMap::new();
    for g in &gallery {
        by_traj.entry(g.trajectory_key()).or_default().push(*g);
    }
    let queries = sampled
        .iter()
        .map(|q| QueryEntry {
            id: *q,
            relevant: by_traj[&q.trajectory_key()]
                .iter()
                .filter(|g| *g != q)
                .copied()
                .collect(),
        })
        .collect();
    Ok(QuerySet {
        queries,
        gallery,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Val,
    Test,
}

impl std::str::FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "val" => Ok(EvalMode::Val),
            "test" => Ok(EvalMode::Test),
            other => Err(format!("unknown evaluation mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryAp {
    pub query: SampleId,
    pub ap: f64,
}

/// Per-query APs and their mean.
///
/// Serialized as JSON; this is the `.rep` format the bootstrap and compare
/// commands consume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub query_split: String,
    pub gallery_split: String,
    pub descriptor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<FusionParams>,
    pub map: f64,
    pub per_query: Vec<QueryAp>,
}

impl EvalReport {
    pub fn aps(&self) -> Vec<f64> {
        self.per_query.iter().map(|q| q.ap).collect()
    }

    pub fn query_ids(&self) -> Vec<SampleId> {
        self.per_query.iter().map(|q| q.query).collect()
    }

    pub fn query_trajectories(&self) -> BTreeSet<TrajectoryKey> {
        self.per_query
            .iter()
            .map(|q| q.query.trajectory_key())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

struct Job<'a> {
    query: SampleId,
    candidates: Vec<SampleId>,
    relevant: &'a BTreeSet<SampleId>,
}

fn run_jobs(scorer: &dyn RowScorer, jobs: Vec<Job<'_>>) -> Result<Vec<QueryAp>, EvalError> {
    let results: Vec<Option<QueryAp>> = jobs
        .into_par_iter()
        .map(|job| {
            if job.relevant.is_empty() {
                return Ok(None);
            }
            let scores = scorer.score(&job.query, &job.candidates)?;
            let order = ranking(&scores);
            let hits: Vec<bool> = order
                .iter()
                .map(|&j| job.relevant.contains(&job.candidates[j]))
                .collect();
            let ap = average_precision_flags(&hits, job.relevant.len())?;
            Ok(Some(QueryAp {
                query: job.query,
                ap,
            }))
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(results.into_iter().flatten().collect())
}

fn finish(
    mode: EvalMode,
    query_split: &str,
    gallery_split: &str,
    scorer: &dyn RowScorer,
    per_query: Vec<QueryAp>,
) -> Result<EvalReport, EvalError> {
    if per_query.is_empty() {
        return Err(EvalError::EmptyQuerySet);
    }
    let aps: Vec<f64> = per_query.iter().map(|q| q.ap).collect();
    Ok(EvalReport {
        mode,
        query_split: query_split.to_string(),
        gallery_split: gallery_split.to_string(),
        descriptor: scorer.descriptor(),
        params: scorer.fusion_params(),
        map: mean(&aps),
        per_query,
    })
}

/// Within-trajectory retrieval on one split.
///
/// Queries whose trajectory has no other gallery image are left out.
pub fn validation_eval(
    scorer: &dyn RowScorer,
    queries: &QuerySet,
    split: &str,
) -> Result<EvalReport, EvalError> {
    if queries.queries.is_empty() {
        return Err(EvalError::EmptyQuerySet);
    }
    let jobs = queries
        .queries
        .iter()
        .map(|q| Job {
            query: q.id,
            candidates: queries
                .gallery
                .iter()
                .filter(|g| **g != q.id)
                .copied()
                .collect(),
            relevant: &q.relevant,
        })
        .collect();
    let per_query = run_jobs(scorer, jobs)?;
    finish(EvalMode::Val, split, split, scorer, per_query)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchStatus {
    Confirmed,
    Rejected,
    Unsure,
}

impl std::str::FromStr for MatchStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "confirmed" => Ok(MatchStatus::Confirmed),
            "rejected" => Ok(MatchStatus::Rejected),
            "unsure" => Ok(MatchStatus::Unsure),
            other => Err(format!("unknown match status {other:?}")),
        }
    }
}

/// One annotator decision about a cross-camera trajectory pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedMatch {
    pub query: TrajectoryKey,
    pub gallery: TrajectoryKey,
    pub status: MatchStatus,
    pub annotator: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Latest decision per pair, in log order.
pub fn latest_decisions(
    log: &[VerifiedMatch],
) -> BTreeMap<(TrajectoryKey, TrajectoryKey), &VerifiedMatch> {
    let mut out = BTreeMap::new();
    for m in log {
        out.insert((m.query, m.gallery), m);
    }
    out
}

/// Pairs whose latest decision is `confirmed`.
pub fn confirmed_pairs(log: &[VerifiedMatch]) -> BTreeSet<(TrajectoryKey, TrajectoryKey)> {
    latest_decisions(log)
        .into_iter()
        .filter(|(_, m)| m.status == MatchStatus::Confirmed)
        .map(|(k, _)| k)
        .collect()
}

pub fn parse_matches<R: BufRead>(reader: R) -> Result<Vec<VerifiedMatch>, EvalError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let malformed = |reason: String| EvalError::MalformedMatch {
            line: idx + 1,
            reason,
        };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(serde_json::from_str(t).map_err(|e| malformed(e.to_string()))?);
    }
    Ok(out)
}

pub fn load_matches(path: &Path) -> Result<Vec<VerifiedMatch>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_matches(std::io::BufReader::new(file))?)
}

pub fn match_line(m: &VerifiedMatch) -> String {
    serde_json::to_string(m).expect("match records always serialize")
}

/// Cross-camera retrieval against confirmed trajectory matches.
///
/// Queries are the query-split samples of confirmed query trajectories;
/// every gallery sample of a confirmed partner trajectory is relevant.
pub fn test_eval(
    scorer: &dyn RowScorer,
    query_samples: &[SampleId],
    gallery: &[SampleId],
    matches: &[VerifiedMatch],
    splits: (&str, &str),
) -> Result<EvalReport, EvalError> {
    let confirmed = confirmed_pairs(matches);
    if confirmed.is_empty() {
        return Err(EvalError::NoVerifiedMatches);
    }
    let mut partners: BTreeMap<TrajectoryKey, BTreeSet<TrajectoryKey>> = BTreeMap::new();
    for (q, g) in &confirmed {
        partners.entry(*q).or_default().insert(*g);
    }
    let mut gallery_sorted = gallery.to_vec();
    gallery_sorted.sort_unstable();
    gallery_sorted.dedup();
    let relevant: BTreeMap<TrajectoryKey, BTreeSet<SampleId>> = partners
        .iter()
        .map(|(q, gs)| {
            let rel = gallery_sorted
                .iter()
                .filter(|s| gs.contains(&s.trajectory_key()))
                .copied()
                .collect();
            (*q, rel)
        })
        .collect();
    let mut queries: Vec<SampleId> = query_samples
        .iter()
        .filter(|s| partners.contains_key(&s.trajectory_key()))
        .copied()
        .collect();
    queries.sort_unstable();
    queries.dedup();
    let jobs = queries
        .iter()
        .map(|q| Job {
            query: *q,
            candidates: gallery_sorted.clone(),
            relevant: &relevant[&q.trajectory_key()],
        })
        .collect();
    let per_query = run_jobs(scorer, jobs)?;
    finish(EvalMode::Test, splits.0, splits.1, scorer, per_query)
}

/// One configuration with its validation and test reports.
#[derive(Clone, Debug)]
pub struct ModelEntry {
    pub name: String,
    pub val: Option<EvalReport>,
    pub test: Option<EvalReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub index: usize,
    pub name: String,
    pub val: Option<ConfidenceInterval>,
    pub test: Option<ConfidenceInterval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

fn same_queries<'a>(reports: impl Iterator<Item = &'a EvalReport>) -> bool {
    let mut first: Option<Vec<SampleId>> = None;
    for r in reports {
        let ids = r.query_ids();
        match &first {
            None => first = Some(ids),
            Some(f) if *f != ids => return false,
            _ => {}
        }
    }
    true
}

/// Table of validation and test mAP with bootstrap confidence intervals.
pub fn model_compare(
    models: &[ModelEntry],
    params: &BootstrapParams,
) -> Result<ComparisonTable, Error> {
    if !same_queries(models.iter().filter_map(|m| m.val.as_ref()))
        || !same_queries(models.iter().filter_map(|m| m.test.as_ref()))
    {
        return Err(EvalError::QuerySetMismatch.into());
    }
    let ci = |r: &Option<EvalReport>| -> Result<Option<ConfidenceInterval>, Error> {
        r.as_ref()
            .map(|r| bootstrap_ci(&r.aps(), params).map_err(Error::from))
            .transpose()
    };
    let rows = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(ComparisonRow {
                index: i + 1,
                name: m.name.clone(),
                val: ci(&m.val)?,
                test: ci(&m.test)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(ComparisonTable { rows })
}
