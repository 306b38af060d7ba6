//! Score-level fusion of per-stream retrieval results.
//!
//! For query `i`, gallery item `j` and stream `p`:
//!
//! ```text
//! s~(p)_ij = exp(-(1 - cos(p)_ij) / tau)          then min-max per query row -> s(p)_ij
//! rr(p)_ij = 1 / (k + rank(p)_ij)                  rank is 1-based
//! S_ij     = lambda * sum_p rr(p)_ij + (1 - lambda) * sum_p s(p)_ij
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gallery::{rank_matrix, rank_row, SimilarityMatrix};
use crate::matrix::Matrix;
use crate::model::{FusionParams, SampleId, StreamId};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("stream {0:?} is not available")]
    MissingStream(String),
    #[error("stream {0:?} is not part of the fused stream set")]
    UnknownStream(String),
    #[error("fusing requires at least one stream")]
    EmptyStreamSet,
    #[error("stream {stream:?} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        stream: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid fusion parameters: {0}")]
    InvalidParams(String),
}

pub fn temperature_scale(cos: f64, tau: f64) -> f64 {
    (-(1.0 - cos) / tau).exp()
}

/// Maps a row onto `[0, 1]` by `(x - min) / (max - min)`; a constant row becomes zeros.
pub fn min_max_row(row: &mut [f64]) {
    let (lo, hi) = row
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let span = hi - lo;
    for x in row.iter_mut() {
        *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
    }
}

pub fn scaled_similarity_row(cos_row: &[f64], tau: f64) -> Vec<f64> {
    let mut row: Vec<f64> = cos_row.iter().map(|&c| temperature_scale(c, tau)).collect();
    min_max_row(&mut row);
    row
}

/// Temperature-scaled, per-query min-max normalized similarities.
pub fn scaled_similarity(sim: &SimilarityMatrix, tau: f64) -> Matrix<f64> {
    sim.values.map_rows(|row| scaled_similarity_row(row, tau))
}

pub fn reciprocal_rank_value(rank: u32, k: u32) -> f64 {
    1.0 / (k as f64 + rank as f64)
}

pub fn reciprocal_rank(ranks: &Matrix<u32>, k: u32) -> Matrix<f64> {
    ranks.map_rows(|row| row.iter().map(|&r| reciprocal_rank_value(r, k)).collect())
}

/// The two fusion terms of one stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamTerms {
    pub scaled: Matrix<f64>,
    pub rr: Matrix<f64>,
}

impl StreamTerms {
    pub fn compute(sim: &SimilarityMatrix, tau: f64, k: u32) -> Self {
        Self {
            scaled: scaled_similarity(sim, tau),
            rr: reciprocal_rank(&rank_matrix(sim), k),
        }
    }
}

/// `lambda * sum rr + (1 - lambda) * sum s` over `params.streams`.
pub fn fuse_terms(
    terms: &BTreeMap<StreamId, StreamTerms>,
    params: &FusionParams,
) -> Result<Matrix<f64>, FusionError> {
    let mut selected = Vec::with_capacity(params.streams.len());
    for s in &params.streams {
        selected.push((
            s,
            terms
                .get(s)
                .ok_or_else(|| FusionError::MissingStream(s.to_string()))?,
        ));
    }
    let Some((_, first)) = selected.first() else {
        return Err(FusionError::EmptyStreamSet);
    };
    let shape = first.scaled.shape();
    for (s, t) in &selected {
        for found in [t.scaled.shape(), t.rr.shape()] {
            if found != shape {
                return Err(FusionError::ShapeMismatch {
                    stream: s.to_string(),
                    expected: shape,
                    found,
                });
            }
        }
    }
    let lambda = params.lambda;
    Ok(Matrix::par_from_fn(shape.0, shape.1, |i| {
        let mut rr_sum = vec![0.0; shape.1];
        let mut s_sum = vec![0.0; shape.1];
        for (_, t) in &selected {
            for (acc, v) in rr_sum.iter_mut().zip(t.rr.row(i)) {
                *acc += v;
            }
            for (acc, v) in s_sum.iter_mut().zip(t.scaled.row(i)) {
                *acc += v;
            }
        }
        rr_sum
            .iter()
            .zip(&s_sum)
            .map(|(rr, s)| lambda * rr + (1.0 - lambda) * s)
            .collect()
    }))
}

/// Per-stream cosine matrices over a shared query and gallery list.
#[derive(Clone, Debug)]
pub struct FusionInputs {
    pub queries: Vec<SampleId>,
    pub gallery: Vec<SampleId>,
    streams: BTreeMap<StreamId, SimilarityMatrix>,
}

impl FusionInputs {
    pub fn new(sims: Vec<SimilarityMatrix>) -> Result<Self, FusionError> {
        let mut it = sims.into_iter();
        let first = it.next().ok_or(FusionError::EmptyStreamSet)?;
        let queries = first.queries.clone();
        let gallery = first.gallery.clone();
        let expected = (queries.len(), gallery.len());
        let mut streams = BTreeMap::new();
        streams.insert(first.stream.clone(), first);
        for sim in it {
            if sim.queries != queries || sim.gallery != gallery {
                return Err(FusionError::ShapeMismatch {
                    stream: sim.stream.to_string(),
                    expected,
                    found: (sim.queries.len(), sim.gallery.len()),
                });
            }
            streams.insert(sim.stream.clone(), sim);
        }
        Ok(Self {
            queries,
            gallery,
            streams,
        })
    }

    pub fn stream(&self, s: &StreamId) -> Option<&SimilarityMatrix> {
        self.streams.get(s)
    }

    pub fn streams(&self) -> impl Iterator<Item = &StreamId> {
        self.streams.keys()
    }
}

#[derive(Clone, Debug)]
pub struct FusedScores {
    pub queries: Vec<SampleId>,
    pub gallery: Vec<SampleId>,
    pub params: FusionParams,
    pub fused: Matrix<f64>,
    /// Per-stream intermediates, kept when requested.
    pub terms: Option<BTreeMap<StreamId, StreamTerms>>,
}

fn check_params(params: &FusionParams) -> Result<(), FusionError> {
    params
        .validate()
        .map_err(|e| FusionError::InvalidParams(e.to_string()))
}

fn fuse_impl(
    inputs: &FusionInputs,
    params: &FusionParams,
    keep_terms: bool,
) -> Result<FusedScores, FusionError> {
    if params.streams.is_empty() {
        return Err(FusionError::EmptyStreamSet);
    }
    check_params(params)?;
    let mut terms = BTreeMap::new();
    for s in &params.streams {
        let sim = inputs
            .stream(s)
            .ok_or_else(|| FusionError::MissingStream(s.to_string()))?;
        terms.insert(s.clone(), StreamTerms::compute(sim, params.tau, params.k));
    }
    let fused = fuse_terms(&terms, params)?;
    Ok(FusedScores {
        queries: inputs.queries.clone(),
        gallery: inputs.gallery.clone(),
        params: params.clone(),
        fused,
        terms: keep_terms.then_some(terms),
    })
}

pub fn fuse(inputs: &FusionInputs, params: &FusionParams) -> Result<FusedScores, FusionError> {
    fuse_impl(inputs, params, false)
}

/// Like [`fuse`], retaining the per-stream `s` and `rr` matrices.
pub fn fuse_with_terms(
    inputs: &FusionInputs,
    params: &FusionParams,
) -> Result<FusedScores, FusionError> {
    fuse_impl(inputs, params, true)
}

/// Parameters with one stream removed from the fused set.
pub fn without_stream(params: &FusionParams, drop: &StreamId) -> Result<FusionParams, FusionError> {
    if !params.streams.contains(drop) {
        return Err(FusionError::UnknownStream(drop.to_string()));
    }
    let mut reduced = params.clone();
    reduced.streams.remove(drop);
    if reduced.streams.is_empty() {
        return Err(FusionError::EmptyStreamSet);
    }
    Ok(reduced)
}

/// Fusion over the configured streams minus `drop`.
pub fn holdout(
    inputs: &FusionInputs,
    params: &FusionParams,
    drop: &StreamId,
) -> Result<FusedScores, FusionError> {
    fuse(inputs, &without_stream(params, drop)?)
}

/// Score components of one stream for one (query, gallery) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamBreakdown {
    pub cos: f64,
    pub rank: u32,
    pub rr: f64,
    pub s: f64,
}

/// Fused scores of one query against a candidate list, with per-stream terms.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedRow {
    pub fused: Vec<f64>,
    pub breakdown: BTreeMap<StreamId, Vec<StreamBreakdown>>,
}

/// Fuses one query row. `cos_rows` must hold every stream of `params`, each
/// over the same candidate list.
pub fn fuse_row(
    cos_rows: &BTreeMap<StreamId, Vec<f64>>,
    params: &FusionParams,
) -> Result<FusedRow, FusionError> {
    if params.streams.is_empty() {
        return Err(FusionError::EmptyStreamSet);
    }
    check_params(params)?;
    let mut n = None;
    let mut rr_sum: Vec<f64> = Vec::new();
    let mut s_sum: Vec<f64> = Vec::new();
    let mut breakdown = BTreeMap::new();
    for stream in &params.streams {
        let cos = cos_rows
            .get(stream)
            .ok_or_else(|| FusionError::MissingStream(stream.to_string()))?;
        let len = *n.get_or_insert(cos.len());
        if cos.len() != len {
            return Err(FusionError::ShapeMismatch {
                stream: stream.to_string(),
                expected: (1, len),
                found: (1, cos.len()),
            });
        }
        if rr_sum.is_empty() {
            rr_sum = vec![0.0; len];
            s_sum = vec![0.0; len];
        }
        let ranks = rank_row(cos);
        let s = scaled_similarity_row(cos, params.tau);
        let mut parts = Vec::with_capacity(len);
        for j in 0..len {
            let rr = reciprocal_rank_value(ranks[j], params.k);
            rr_sum[j] += rr;
            s_sum[j] += s[j];
            parts.push(StreamBreakdown {
                cos: cos[j],
                rank: ranks[j],
                rr,
                s: s[j],
            });
        }
        breakdown.insert(stream.clone(), parts);
    }
    let lambda = params.lambda;
    let fused = rr_sum
        .iter()
        .zip(&s_sum)
        .map(|(rr, s)| lambda * rr + (1.0 - lambda) * s)
        .collect();
    Ok(FusedRow { fused, breakdown })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Lambda,
    Tau,
    K,
}

impl SweepAxis {
    /// Parameter grids of the published ablation tables.
    pub fn standard_grid(self) -> &'static [f64] {
        match self {
            SweepAxis::Lambda => &[0.0, 0.2, 0.4, 0.6, 0.75, 0.8, 1.0],
            SweepAxis::Tau => &[0.2, 0.5, 0.7, 1.0, 2.0, 5.0],
            SweepAxis::K => &[
                1.0, 10.0, 20.0, 30.0, 60.0, 100.0, 150.0, 200.0, 300.0, 500.0,
            ],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::Tau => "tau",
            SweepAxis::K => "k",
        }
    }

    pub fn apply(self, base: &FusionParams, value: f64) -> FusionParams {
        let p = base.clone();
        match self {
            SweepAxis::Lambda => p.with_lambda(value),
            SweepAxis::Tau => p.with_tau(value),
            SweepAxis::K => p.with_k(value.round().max(0.0) as u32),
        }
    }

    pub fn current(self, params: &FusionParams) -> f64 {
        match self {
            SweepAxis::Lambda => params.lambda,
            SweepAxis::Tau => params.tau,
            SweepAxis::K => params.k as f64,
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lambda" => Ok(SweepAxis::Lambda),
            "tau" => Ok(SweepAxis::Tau),
            "k" => Ok(SweepAxis::K),
            other => Err(format!("unknown sweep axis {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub map: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    /// Value of the swept parameter in the base configuration.
    pub base_value: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Largest minus smallest mAP over rows whose value lies in `[lo, hi]`.
    pub fn spread_within(&self, lo: f64, hi: f64) -> f64 {
        let maps: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.value >= lo && r.value <= hi)
            .map(|r| r.map)
            .collect();
        let max = maps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = maps.iter().copied().fold(f64::INFINITY, f64::min);
        if maps.is_empty() {
            0.0
        } else {
            max - min
        }
    }
}

/// Evaluates `evaluate` once per grid value, varying one fusion parameter.
pub fn sweep<E, F>(
    base: &FusionParams,
    axis: SweepAxis,
    values: &[f64],
    evaluate: F,
) -> Result<SweepTable, E>
where
    F: Fn(&FusionParams) -> Result<f64, E>,
{
    let rows = values
        .iter()
        .map(|&value| {
            Ok(SweepRow {
                value,
                map: evaluate(&axis.apply(base, value))?,
            })
        })
        .collect::<Result<Vec<_>, E>>()?;
    Ok(SweepTable {
        axis,
        base_value: axis.current(base),
        rows,
    })
}
