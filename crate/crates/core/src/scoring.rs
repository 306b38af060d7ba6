//! Row scorers backed by an embedding set.

use std::collections::BTreeMap;

use crate::eval::{EvalError, RowScorer};
use crate::fusion::{fuse_row, FusedRow};
use crate::gallery::dot;
use crate::ingest::EmbeddingSet;
use crate::model::{FusionParams, SampleId, StreamId};

fn cos_row(
    set: &EmbeddingSet,
    stream: &StreamId,
    query: &SampleId,
    candidates: &[SampleId],
) -> Result<Vec<f64>, EvalError> {
    let vectors = set
        .stream(stream)
        .ok_or_else(|| EvalError::Scorer(format!("stream {stream:?} is not loaded")))?;
    let q = vectors.get(query).ok_or(EvalError::UnknownQuery(*query))?;
    candidates
        .iter()
        .map(|c| {
            vectors
                .get(c)
                .map(|g| dot(q, g))
                .ok_or(EvalError::UnknownCandidate(*c))
        })
        .collect()
}

/// Cosine similarity of a single stream.
pub struct StreamScorer<'a> {
    pub set: &'a EmbeddingSet,
    pub stream: StreamId,
}

impl RowScorer for StreamScorer<'_> {
    fn score(&self, query: &SampleId, candidates: &[SampleId]) -> Result<Vec<f64>, EvalError> {
        cos_row(self.set, &self.stream, query, candidates)
    }

    fn descriptor(&self) -> String {
        self.stream.to_string()
    }
}

/// Fused score over the streams of `params`.
pub struct FusionScorer<'a> {
    pub set: &'a EmbeddingSet,
    pub params: FusionParams,
}

impl FusionScorer<'_> {
    pub fn fused_row(
        &self,
        query: &SampleId,
        candidates: &[SampleId],
    ) -> Result<FusedRow, EvalError> {
        let rows: BTreeMap<StreamId, Vec<f64>> = self
            .params
            .streams
            .iter()
            .map(|s| Ok((s.clone(), cos_row(self.set, s, query, candidates)?)))
            .collect::<Result<_, EvalError>>()?;
        fuse_row(&rows, &self.params).map_err(|e| EvalError::Scorer(e.to_string()))
    }
}

impl RowScorer for FusionScorer<'_> {
    fn score(&self, query: &SampleId, candidates: &[SampleId]) -> Result<Vec<f64>, EvalError> {
        Ok(self.fused_row(query, candidates)?.fused)
    }

    fn descriptor(&self) -> String {
        let names: Vec<&str> = self.params.streams.iter().map(StreamId::as_str).collect();
        format!("fused({})", names.join("+"))
    }

    fn fusion_params(&self) -> Option<FusionParams> {
        Some(self.params.clone())
    }
}
