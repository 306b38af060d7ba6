//! Binary embedding files.
//!
//! One file holds one stream. All integers and floats are little-endian.
//!
//! ```text
//! magic      4 bytes   "RFE1"
//! name_len   u32       byte length of the stream name
//! name       name_len  UTF-8 stream name
//! dim        u32       D
//! count      u32       N
//! N records: camera u32, traj u32, frame u32, D x f32
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::IngestError;
use crate::config::StreamRegistry;
use crate::error::{Error, Result};
use crate::model::{SampleId, StreamId};

pub const MAGIC: &[u8; 4] = b"RFE1";

/// Unit-norm vectors of one stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamVectors {
    pub dim: usize,
    pub vectors: BTreeMap<SampleId, Vec<f32>>,
}

impl StreamVectors {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn get(&self, id: &SampleId) -> Option<&[f32]> {
        self.vectors.get(id).map(Vec::as_slice)
    }
}

/// Vectors keyed by (stream, sample).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingSet {
    streams: BTreeMap<StreamId, StreamVectors>,
}

impl EmbeddingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stream(&self, stream: &StreamId) -> Option<&StreamVectors> {
        self.streams.get(stream)
    }

    pub fn streams(&self) -> impl Iterator<Item = (&StreamId, &StreamVectors)> {
        self.streams.iter()
    }

    pub fn get(&self, stream: &StreamId, id: &SampleId) -> Option<&[f32]> {
        self.streams.get(stream)?.get(id)
    }

    /// Normalizes and inserts one vector.
    pub fn insert(
        &mut self,
        stream: &StreamId,
        id: SampleId,
        raw: &[f32],
        registry: &StreamRegistry,
    ) -> Result<(), IngestError> {
        let dim = registry
            .dim(stream)
            .ok_or_else(|| IngestError::UnknownStream(stream.to_string()))?;
        if raw.len() != dim {
            return Err(IngestError::DimensionMismatch {
                stream: stream.to_string(),
                expected: dim,
                found: raw.len(),
            });
        }
        let unit = normalize(raw).map_err(|kind| match kind {
            NormFailure::NonFinite => IngestError::NonFiniteValue(id),
            NormFailure::Zero => IngestError::ZeroVector(id),
        })?;
        let entry = self
            .streams
            .entry(stream.clone())
            .or_insert_with(|| StreamVectors::new(dim));
        if entry.vectors.insert(id, unit).is_some() {
            return Err(IngestError::DuplicateEmbedding {
                stream: stream.to_string(),
                sample: id,
            });
        }
        Ok(())
    }

    /// Drops every vector whose sample is not accepted by `keep`.
    pub fn retain(&mut self, keep: impl Fn(&SampleId) -> bool) {
        for s in self.streams.values_mut() {
            s.vectors.retain(|id, _| keep(id));
        }
    }
}

enum NormFailure {
    NonFinite,
    Zero,
}

fn normalize(raw: &[f32]) -> std::result::Result<Vec<f32>, NormFailure> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(NormFailure::NonFinite);
    }
    let norm = raw
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return Err(NormFailure::Zero);
    }
    Ok(raw.iter().map(|&v| (v as f64 / norm) as f32).collect())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> IngestError {
    IngestError::MalformedEmbeddings(format!("truncated file: {e}"))
}

/// Reads one stream file into `set`, normalizing every vector.
pub fn load_embeddings<R: Read>(
    mut reader: R,
    registry: &StreamRegistry,
    set: &mut EmbeddingSet,
) -> Result<StreamId, IngestError> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(IngestError::MalformedEmbeddings("bad magic".into()));
    }
    let name_len = read_u32(&mut reader).map_err(truncated)? as usize;
    if name_len > 4096 {
        return Err(IngestError::MalformedEmbeddings(
            "stream name too long".into(),
        ));
    }
    let mut name = vec![0u8; name_len];
    reader.read_exact(&mut name).map_err(truncated)?;
    let stream = StreamId::new(
        String::from_utf8(name)
            .map_err(|_| IngestError::MalformedEmbeddings("stream name is not UTF-8".into()))?,
    );
    let expected = registry
        .dim(&stream)
        .ok_or_else(|| IngestError::UnknownStream(stream.to_string()))?;
    let dim = read_u32(&mut reader).map_err(truncated)? as usize;
    if dim != expected {
        return Err(IngestError::DimensionMismatch {
            stream: stream.to_string(),
            expected,
            found: dim,
        });
    }
    let count = read_u32(&mut reader).map_err(truncated)?;
    let mut bytes = vec![0u8; dim * 4];
    let mut raw = vec![0f32; dim];
    for _ in 0..count {
        let camera = read_u32(&mut reader).map_err(truncated)?;
        let traj = read_u32(&mut reader).map_err(truncated)?;
        let frame = read_u32(&mut reader).map_err(truncated)?;
        reader.read_exact(&mut bytes).map_err(truncated)?;
        for (dst, chunk) in raw.iter_mut().zip(bytes.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        }
        set.insert(&stream, SampleId::new(camera, traj, frame), &raw, registry)?;
    }
    Ok(stream)
}

/// Writes one stream file. Records are written in iteration order.
pub fn write_embeddings<'a, W, I>(
    mut writer: W,
    stream: &StreamId,
    dim: usize,
    records: I,
) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (SampleId, &'a [f32])>,
    I::IntoIter: ExactSizeIterator,
{
    let records = records.into_iter();
    let name = stream.as_str().as_bytes();
    writer.write_all(MAGIC)?;
    writer.write_all(&(name.len() as u32).to_le_bytes())?;
    writer.write_all(name)?;
    writer.write_all(&(dim as u32).to_le_bytes())?;
    writer.write_all(&(records.len() as u32).to_le_bytes())?;
    for (id, v) in records {
        assert_eq!(v.len(), dim, "vector dimension must match the header");
        writer.write_all(&id.camera.to_le_bytes())?;
        writer.write_all(&id.trajectory.to_le_bytes())?;
        writer.write_all(&id.frame.to_le_bytes())?;
        for x in v {
            writer.write_all(&x.to_le_bytes())?;
        }
    }
    writer.flush()
}

pub fn write_stream_file(path: &Path, stream: &StreamId, vectors: &StreamVectors) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(
        std::io::BufWriter::new(file),
        stream,
        vectors.dim,
        vectors.vectors.iter().map(|(id, v)| (*id, v.as_slice())),
    )
    .map_err(|e| Error::io(path, e))
}

/// Loads every `*.rfe` file of a directory, in file-name order.
pub fn load_embedding_dir(dir: &Path, registry: &StreamRegistry) -> Result<EmbeddingSet> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rfe"))
        .collect();
    paths.sort();
    let mut set = EmbeddingSet::new();
    for path in paths {
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        load_embeddings(std::io::BufReader::new(file), registry, &mut set)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_registry, StreamDecl};

    fn registry(name: &str, dim: usize) -> StreamRegistry {
        validate_registry(&[StreamDecl {
            name: name.into(),
            dim,
        }])
        .unwrap()
    }

    fn encode(stream: &str, dim: usize, recs: &[(SampleId, Vec<f32>)]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_embeddings(
            &mut buf,
            &StreamId::new(stream),
            dim,
            recs.iter().map(|(id, v)| (*id, v.as_slice())),
        )
        .unwrap();
        buf
    }

    #[test]
    fn normalizes_on_load() {
        let id = SampleId::new(1, 2, 3);
        let bytes = encode("head", 2, &[(id, vec![3.0, 4.0])]);
        let mut set = EmbeddingSet::new();
        let stream = load_embeddings(bytes.as_slice(), &registry("head", 2), &mut set).unwrap();
        let v = set.get(&stream, &id).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-7 && (v[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn header_layout() {
        let bytes = encode("q2", 1, &[(SampleId::new(1, 2, 3), vec![1.0])]);
        assert_eq!(&bytes[..4], b"RFE1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..10], b"q2");
        assert_eq!(&bytes[10..14], &1u32.to_le_bytes());
        assert_eq!(&bytes[14..18], &1u32.to_le_bytes());
        assert_eq!(bytes.len(), 18 + 12 + 4);
    }

    #[test]
    fn dimension_mismatch() {
        let bytes = encode("head", 512, &[]);
        let err = load_embeddings(
            bytes.as_slice(),
            &registry("head", 768),
            &mut EmbeddingSet::new(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            IngestError::DimensionMismatch {
                expected: 768,
                found: 512,
                ..
            }
        ));
    }

    #[test]
    fn unknown_stream() {
        let bytes = encode("tail", 2, &[]);
        let err = load_embeddings(
            bytes.as_slice(),
            &registry("head", 2),
            &mut EmbeddingSet::new(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::UnknownStream(_)));
    }

    #[test]
    fn nan_rejected() {
        let bytes = encode("head", 2, &[(SampleId::new(0, 0, 0), vec![f32::NAN, 1.0])]);
        let err = load_embeddings(
            bytes.as_slice(),
            &registry("head", 2),
            &mut EmbeddingSet::new(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::NonFiniteValue(_)));
    }

    #[test]
    fn duplicate_and_truncated() {
        let id = SampleId::new(0, 0, 0);
        let bytes = encode("head", 2, &[(id, vec![1.0, 0.0]), (id, vec![0.0, 1.0])]);
        let err = load_embeddings(
            bytes.as_slice(),
            &registry("head", 2),
            &mut EmbeddingSet::new(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::DuplicateEmbedding { .. }));

        let bytes = encode("head", 2, &[(id, vec![1.0, 0.0])]);
        let err = load_embeddings(
            &bytes[..bytes.len() - 1],
            &registry("head", 2),
            &mut EmbeddingSet::new(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::MalformedEmbeddings(_)));
    }

    proptest::proptest! {
        #[test]
        fn loaded_vectors_are_unit_norm(v in proptest::collection::vec(-100.0f32..100.0, 8)) {
            proptest::prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let id = SampleId::new(1, 1, 1);
            let bytes = encode("s", 8, &[(id, v)]);
            let mut set = EmbeddingSet::new();
            let s = load_embeddings(bytes.as_slice(), &registry("s", 8), &mut set).unwrap();
            let n: f64 = set.get(&s, &id).unwrap().iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            proptest::prop_assert!((n - 1.0).abs() < 1e-4);
        }
    }
}
