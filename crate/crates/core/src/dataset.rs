//! In-memory embedding datasets and the TDAE binary file format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        4 bytes   "TDAE"
//! version      u32       1
//! dim          u32       D >= 1
//! num_classes  u32       N >= 2
//! names        N x { len: u32, bytes: [u8; len] }   UTF-8 class names
//! head         N x D f32                              row-major text embeddings
//! count        u64       M
//! records      M x { label: i32, feature: D x f32 }   label -1 = unlabeled
//! ```
//!
//! Nothing may follow the last record. See `docs/tdae-format.md`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Result, TdaError};
use crate::numeric::{ClassifierHead, FeatureVector, DEFAULT_LOGIT_SCALE};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"TDAE";
pub const FORMAT_VERSION: u32 = 1;

/// Rows whose norm is within this of 1 are kept bit-for-bit on load;
/// anything further off is re-normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S: Scalar> {
    pub label: Option<usize>,
    pub feature: FeatureVector<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset<S: Scalar> {
    class_names: Vec<String>,
    head: ClassifierHead<S>,
    samples: Vec<Sample<S>>,
}

impl<S: Scalar> EmbeddingDataset<S> {
    pub fn new(class_names: Vec<String>, head: ClassifierHead<S>, samples: Vec<Sample<S>>) -> Result<Self> {
        let (n, d) = (head.num_classes(), head.dim());
        if n < 2 {
            return Err(TdaError::InvalidDimension(format!(
                "dataset needs at least 2 classes, got {n}"
            )));
        }
        if class_names.len() != n {
            return Err(TdaError::DimensionMismatch {
                expected: n,
                actual: class_names.len(),
            });
        }
        for (i, s) in samples.iter().enumerate() {
            if s.feature.dim() != d {
                return Err(TdaError::DimensionMismatch {
                    expected: d,
                    actual: s.feature.dim(),
                });
            }
            if let Some(l) = s.label.filter(|l| *l >= n) {
                return Err(TdaError::CorruptDataset {
                    record: Some(i),
                    reason: format!("label {l} out of range for {n} classes"),
                });
            }
        }
        Ok(Self {
            class_names,
            head,
            samples,
        })
    }

    pub fn dim(&self) -> usize {
        self.head.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn head(&self) -> &ClassifierHead<S> {
        &self.head
    }

    pub fn samples(&self) -> &[Sample<S>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labeled_count(&self) -> usize {
        self.samples.iter().filter(|s| s.label.is_some()).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, d) = (self.num_classes(), self.dim());
        let mut out = Vec::with_capacity(16 + n * (d * 4 + 16) + self.samples.len() * (4 + d * 4) + 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        for name in &self.class_names {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        push_f32s(&mut out, self.head.weights());
        out.extend_from_slice(&(self.samples.len() as u64).to_le_bytes());
        for s in &self.samples {
            let label = s.label.map_or(-1i32, |l| l as i32);
            out.extend_from_slice(&label.to_le_bytes());
            push_f32s(&mut out, s.feature.as_slice());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4).map_err(|_| TdaError::UnsupportedFormat("file shorter than magic".into()))?;
        if magic != MAGIC {
            return Err(TdaError::UnsupportedFormat(format!("bad magic {magic:02x?}")));
        }
        let version = r.u32(None)?;
        if version != FORMAT_VERSION {
            return Err(TdaError::UnsupportedFormat(format!(
                "version {version}, this reader supports {FORMAT_VERSION}"
            )));
        }
        let d = r.u32(None)? as usize;
        let n = r.u32(None)? as usize;
        if d == 0 || n < 2 {
            return Err(TdaError::CorruptDataset {
                record: None,
                reason: format!("invalid shape D={d} N={n}"),
            });
        }

        let mut class_names = Vec::with_capacity(n);
        for c in 0..n {
            let len = r.u32(None)? as usize;
            let raw = r.take(len).map_err(|_| corrupt(None, format!("truncated name of class {c}")))?;
            let name = std::str::from_utf8(raw)
                .map_err(|_| corrupt(None, format!("class {c} name is not UTF-8")))?;
            class_names.push(name.to_string());
        }

        let mut head = Vec::with_capacity(n * d);
        for c in 0..n {
            let row = r.f32s::<S>(d).map_err(|_| corrupt(None, format!("truncated head row {c}")))?;
            let row = FeatureVector::new_normalized(row, UNIT_NORM_TOLERANCE).map_err(|e| TdaError::InvalidFeature {
                record: None,
                reason: format!("head row {c}: {e}"),
            })?;
            head.extend(row.into_vec());
        }
        let head = ClassifierHead::new(head, d, DEFAULT_LOGIT_SCALE)?;

        let count = r.u64(None)?;
        let record_len = 4 + 4 * d;
        if (r.remaining() as u64) < count.saturating_mul(record_len as u64) {
            let complete = r.remaining() / record_len;
            return Err(corrupt(
                Some(complete),
                format!("file truncated: header declares {count} records, {complete} complete"),
            ));
        }
        let mut samples = Vec::with_capacity(count as usize);
        for i in 0..count as usize {
            let label = r.i32(Some(i))?;
            let label = match label {
                -1 => None,
                l if l >= 0 && (l as usize) < n => Some(l as usize),
                l => return Err(corrupt(Some(i), format!("label {l} out of range"))),
            };
            let raw = r.f32s(d).map_err(|_| corrupt(Some(i), "truncated record".into()))?;
            let feature = FeatureVector::new_normalized(raw, UNIT_NORM_TOLERANCE).map_err(|e| TdaError::InvalidFeature {
                record: Some(i),
                reason: e.to_string(),
            })?;
            samples.push(Sample { label, feature });
        }
        if r.remaining() != 0 {
            return Err(corrupt(None, format!("{} trailing bytes after last record", r.remaining())));
        }
        Self::new(class_names, head, samples)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| TdaError::io(format!("creating {}", path.display()), e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| TdaError::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| TdaError::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn write_dataset<S: Scalar>(ds: &EmbeddingDataset<S>, path: &Path) -> Result<()> {
    ds.write(path)
}

pub fn read_dataset<S: Scalar>(path: &Path) -> Result<EmbeddingDataset<S>> {
    EmbeddingDataset::read(path)
}

fn push_f32s<S: Scalar>(out: &mut Vec<u8>, values: &[S]) {
    for v in values {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
}

fn corrupt(record: Option<usize>, reason: String) -> TdaError {
    TdaError::CorruptDataset { record, reason }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

struct Truncated;

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], Truncated> {
        if self.remaining() < len {
            return Err(Truncated);
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn array<const K: usize>(&mut self, record: Option<usize>) -> Result<[u8; K]> {
        self.take(K)
            .map(|b| b.try_into().expect("length checked"))
            .map_err(|_| corrupt(record, "unexpected end of file".into()))
    }

    fn u32(&mut self, record: Option<usize>) -> Result<u32> {
        self.array(record).map(u32::from_le_bytes)
    }

    fn i32(&mut self, record: Option<usize>) -> Result<i32> {
        self.array(record).map(i32::from_le_bytes)
    }

    fn u64(&mut self, record: Option<usize>) -> Result<u64> {
        self.array(record).map(u64::from_le_bytes)
    }

    fn f32s<S: Scalar>(&mut self, count: usize) -> Result<Vec<S>, Truncated> {
        let raw = self.take(count * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| S::from_f64_lossy(f32::from_le_bytes(b.try_into().expect("chunk of 4")) as f64))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::l2_normalize;

    fn tiny() -> EmbeddingDataset<f32> {
        let rows: Vec<FeatureVector<f32>> = [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]]
            .iter()
            .map(|r| l2_normalize(r).unwrap())
            .collect();
        let head = ClassifierHead::from_rows(&rows, DEFAULT_LOGIT_SCALE).unwrap();
        let samples = (0..5)
            .map(|i| Sample {
                label: if i == 3 { None } else { Some(i % 3) },
                feature: l2_normalize(&[1.0, i as f32 * 0.3]).unwrap(),
            })
            .collect();
        EmbeddingDataset::new(vec!["cat".into(), "dog".into(), "émeu".into()], head, samples).unwrap()
    }

    #[test]
    fn round_trip() {
        let ds = tiny();
        let back = EmbeddingDataset::<f32>::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_bytes(), ds.to_bytes());
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.tdae");
        let ds = tiny();
        write_dataset(&ds, &path).unwrap();
        assert_eq!(read_dataset::<f32>(&path).unwrap(), ds);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = tiny().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            EmbeddingDataset::<f32>::from_bytes(&bytes),
            Err(TdaError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn bad_version() {
        let mut bytes = tiny().to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            EmbeddingDataset::<f32>::from_bytes(&bytes),
            Err(TdaError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn truncated_mid_record_names_index() {
        let bytes = tiny().to_bytes();
        let record_len = 4 + 2 * 4;
        // cut inside record 2
        let cut = bytes.len() - 2 * record_len - 5;
        match EmbeddingDataset::<f32>::from_bytes(&bytes[..cut]) {
            Err(TdaError::CorruptDataset { record: Some(2), .. }) => {}
            other => panic!("expected CorruptDataset at record 2, got {other:?}"),
        }
    }

    #[test]
    fn truncated_header() {
        let bytes = tiny().to_bytes();
        assert!(matches!(
            EmbeddingDataset::<f32>::from_bytes(&bytes[..10]),
            Err(TdaError::CorruptDataset { record: None, .. })
        ));
    }

    #[test]
    fn trailing_bytes() {
        let mut bytes = tiny().to_bytes();
        bytes.push(0);
        assert!(matches!(
            EmbeddingDataset::<f32>::from_bytes(&bytes),
            Err(TdaError::CorruptDataset { .. })
        ));
    }

    #[test]
    fn nan_payload_names_record() {
        let mut bytes = tiny().to_bytes();
        let record_len = 4 + 2 * 4;
        let at = bytes.len() - 2 * record_len + 4; // first coordinate of record 3
        bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match EmbeddingDataset::<f32>::from_bytes(&bytes) {
            Err(TdaError::InvalidFeature { record: Some(3), .. }) => {}
            other => panic!("expected InvalidFeature at record 3, got {other:?}"),
        }
    }

    #[test]
    fn label_out_of_range() {
        let mut bytes = tiny().to_bytes();
        let record_len = 4 + 2 * 4;
        let at = bytes.len() - record_len;
        bytes[at..at + 4].copy_from_slice(&7i32.to_le_bytes());
        assert!(matches!(
            EmbeddingDataset::<f32>::from_bytes(&bytes),
            Err(TdaError::CorruptDataset { record: Some(4), .. })
        ));
    }

    #[test]
    fn renormalizes_on_load() {
        let ds = tiny();
        let mut bytes = ds.to_bytes();
        let record_len = 4 + 2 * 4;
        let at = bytes.len() - record_len + 4;
        bytes[at..at + 4].copy_from_slice(&3.0f32.to_le_bytes());
        bytes[at + 4..at + 8].copy_from_slice(&4.0f32.to_le_bytes());
        let back = EmbeddingDataset::<f32>::from_bytes(&bytes).unwrap();
        let f = back.samples()[4].feature.as_slice();
        assert!((f[0] - 0.6).abs() < 1e-6 && (f[1] - 0.8).abs() < 1e-6);
    }
}
