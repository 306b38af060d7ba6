//! Per-stream galleries and exact cosine ranking.

use std::path::Path;

use thiserror::Error;

use crate::config::StreamRegistry;
use crate::error::{Error, Result};
use crate::ingest::{load_embeddings, write_embeddings, EmbeddingSet};
use crate::matrix::Matrix;
use crate::model::{SampleId, StreamId};

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("stream {stream:?} has no embedding for {}", fmt_ids(.samples))]
    MissingEmbedding {
        stream: String,
        samples: Vec<SampleId>,
    },
    #[error("dimension mismatch: query {query} vs gallery {gallery}")]
    DimensionMismatch { query: usize, gallery: usize },
    #[error("gallery file for stream {0:?} is not sorted by sample id")]
    UnsortedIndex(String),
}

fn fmt_ids(ids: &[SampleId]) -> String {
    let shown: Vec<String> = ids.iter().take(8).map(ToString::to_string).collect();
    if ids.len() > 8 {
        format!("{} and {} more", shown.join(", "), ids.len() - 8)
    } else {
        shown.join(", ")
    }
}

/// Unit vectors of one stream for a fixed, sorted list of gallery samples.
#[derive(Clone, Debug, PartialEq)]
pub struct GalleryIndex {
    pub stream: StreamId,
    pub ids: Vec<SampleId>,
    dim: usize,
    vectors: Vec<f32>,
}

impl GalleryIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, j: usize) -> &[f32] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }

    pub fn position(&self, id: &SampleId) -> Option<usize> {
        self.ids.binary_search(id).ok()
    }

    /// Cosine similarities of one unit query vector against every gallery item.
    pub fn cosine_row(&self, query: &[f32]) -> Result<Vec<f64>, GalleryError> {
        if query.len() != self.dim && !self.is_empty() {
            return Err(GalleryError::DimensionMismatch {
                query: query.len(),
                gallery: self.dim,
            });
        }
        Ok((0..self.len())
            .map(|j| dot(query, self.vector(j)))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_embeddings(
            std::io::BufWriter::new(file),
            &self.stream,
            self.dim,
            self.ids
                .iter()
                .enumerate()
                .map(|(j, id)| (*id, self.vector(j))),
        )
        .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, registry: &StreamRegistry) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut set = EmbeddingSet::new();
        let stream = load_embeddings(std::io::BufReader::new(file), registry, &mut set)?;
        let vectors = set.stream(&stream).expect("stream was just loaded");
        let ids: Vec<SampleId> = vectors.vectors.keys().copied().collect();
        Ok(build_index(&set, &ids, &stream)?)
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Collects the stream's vectors for `samples`, sorted by sample id.
pub fn build_index(
    set: &EmbeddingSet,
    samples: &[SampleId],
    stream: &StreamId,
) -> Result<GalleryIndex, GalleryError> {
    let mut ids = samples.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let vectors_of = set.stream(stream);
    let missing: Vec<SampleId> = ids
        .iter()
        .filter(|id| vectors_of.and_then(|s| s.get(id)).is_none())
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(GalleryError::MissingEmbedding {
            stream: stream.to_string(),
            samples: missing,
        });
    }
    let dim = vectors_of.map_or(0, |s| s.dim);
    let mut vectors = Vec::with_capacity(ids.len() * dim);
    for id in &ids {
        vectors.extend_from_slice(vectors_of.and_then(|s| s.get(id)).expect("checked above"));
    }
    Ok(GalleryIndex {
        stream: stream.clone(),
        ids,
        dim,
        vectors,
    })
}

/// Query-by-gallery cosine similarities of one stream.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub stream: StreamId,
    pub queries: Vec<SampleId>,
    pub gallery: Vec<SampleId>,
    pub values: Matrix<f64>,
}

pub fn cosine_matrix(
    set: &EmbeddingSet,
    queries: &[SampleId],
    index: &GalleryIndex,
) -> Result<SimilarityMatrix, GalleryError> {
    let vectors = set.stream(&index.stream);
    let missing: Vec<SampleId> = queries
        .iter()
        .filter(|id| vectors.and_then(|s| s.get(id)).is_none())
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(GalleryError::MissingEmbedding {
            stream: index.stream.to_string(),
            samples: missing,
        });
    }
    let rows: Vec<&[f32]> = queries
        .iter()
        .map(|id| vectors.and_then(|s| s.get(id)).expect("checked above"))
        .collect();
    if let Some(q) = rows.first() {
        if q.len() != index.dim && !index.is_empty() {
            return Err(GalleryError::DimensionMismatch {
                query: q.len(),
                gallery: index.dim,
            });
        }
    }
    let values = Matrix::par_from_fn(queries.len(), index.len(), |i| {
        index.cosine_row(rows[i]).expect("dimension checked above")
    });
    Ok(SimilarityMatrix {
        stream: index.stream.clone(),
        queries: queries.to_vec(),
        gallery: index.ids.clone(),
        values,
    })
}

/// 1-based ranks of one row, highest value first; equal values keep index order.
pub fn rank_row(row: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    let mut ranks = vec![0u32; row.len()];
    for (pos, &j) in order.iter().enumerate() {
        ranks[j] = pos as u32 + 1;
    }
    ranks
}

pub fn rank_matrix(sim: &SimilarityMatrix) -> Matrix<u32> {
    sim.values.map_rows(rank_row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_registry, StreamDecl};
    use proptest::prelude::*;

    fn set_with(vecs: &[(SampleId, Vec<f32>)]) -> (EmbeddingSet, StreamRegistry) {
        let dim = vecs.first().map_or(2, |v| v.1.len());
        let reg = validate_registry(&[StreamDecl {
            name: "head".into(),
            dim,
        }])
        .unwrap();
        let mut set = EmbeddingSet::new();
        for (id, v) in vecs {
            set.insert(&"head".into(), *id, v, &reg).unwrap();
        }
        (set, reg)
    }

    fn id(f: u32) -> SampleId {
        SampleId::new(2, 1, f)
    }

    #[test]
    fn index_is_sorted_and_sized() {
        let (set, _) = set_with(&[
            (id(3), vec![1.0, 0.0]),
            (id(1), vec![0.0, 1.0]),
            (id(2), vec![1.0, 1.0]),
        ]);
        let idx = build_index(&set, &[id(3), id(1), id(2)], &"head".into()).unwrap();
        assert_eq!(idx.ids, vec![id(1), id(2), id(3)]);
        assert_eq!(idx.len(), 3);
    }

    #[test]
    fn missing_embedding_is_named() {
        let (set, _) = set_with(&[(id(1), vec![1.0, 0.0]), (id(2), vec![0.0, 1.0])]);
        match build_index(&set, &[id(1), id(2), id(3)], &"head".into()) {
            Err(GalleryError::MissingEmbedding { samples, .. }) => assert_eq!(samples, vec![id(3)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_split_gives_empty_index() {
        let (set, _) = set_with(&[]);
        let idx = build_index(&set, &[], &"head".into()).unwrap();
        assert!(idx.is_empty());
    }

    #[test]
    fn cosine_examples() {
        let q = SampleId::new(1, 1, 1);
        let (set, _) = set_with(&[
            (q, vec![0.6, 0.8]),
            (id(1), vec![1.0, 0.0]),
            (id(2), vec![0.6, 0.8]),
            (id(3), vec![-0.8, 0.6]),
        ]);
        let idx = build_index(&set, &[id(1), id(2), id(3)], &"head".into()).unwrap();
        let sim = cosine_matrix(&set, &[q], &idx).unwrap();
        let row = sim.values.row(0);
        assert!((row[0] - 0.6).abs() < 1e-7);
        assert!((row[1] - 1.0).abs() < 1e-7);
        assert!(row[2].abs() < 1e-7);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_row(&[0.2, 0.9, 0.5]), vec![3, 1, 2]);
        assert_eq!(rank_row(&[0.5, 0.5]), vec![1, 2]);
        assert_eq!(rank_row(&[0.1]), vec![1]);
    }

    #[test]
    fn save_load_preserves_order() {
        let (set, reg) = set_with(&[(id(2), vec![1.0, 0.0]), (id(1), vec![0.0, 1.0])]);
        let idx = build_index(&set, &[id(2), id(1)], &"head".into()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.rfe");
        idx.save(&path).unwrap();
        assert_eq!(GalleryIndex::load(&path, &reg).unwrap(), idx);
    }

    proptest! {
        #[test]
        fn ranks_are_a_permutation(row in proptest::collection::vec(-1.0f64..1.0, 1..40)) {
            let mut r = rank_row(&row);
            r.sort_unstable();
            prop_assert_eq!(r, (1..=row.len() as u32).collect::<Vec<_>>());
        }

        #[test]
        fn ranks_invariant_under_increasing_map(row in proptest::collection::vec(-1.0f64..1.0, 1..40), a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let mapped: Vec<f64> = row.iter().map(|x| (a * x + b).exp()).collect();
            prop_assert_eq!(rank_row(&row), rank_row(&mapped));
        }

        #[test]
        fn cosines_bounded(vs in proptest::collection::vec(proptest::collection::vec(-10.0f32..10.0, 6), 2..10)) {
            prop_assume!(vs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-2)));
            let recs: Vec<_> = vs.into_iter().enumerate().map(|(i, v)| (id(i as u32), v)).collect();
            let (set, _) = set_with(&recs);
            let ids: Vec<_> = recs.iter().map(|r| r.0).collect();
            let idx = build_index(&set, &ids, &"head".into()).unwrap();
            let sim = cosine_matrix(&set, &ids, &idx).unwrap();
            for v in sim.values.as_slice() {
                prop_assert!(*v >= -1.0 - 1e-6 && *v <= 1.0 + 1e-6);
            }
        }
    }
}
