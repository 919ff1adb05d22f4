//! The CVEC context-vector file format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   "CVEC1\n"
//! u32     D (vector dimension)
//! u32     record count
//! record* u16 id_len, id bytes (UTF-8), u32 T,
//!         D x f32 pooled vector,
//!         T x (u32 char_start, u32 char_end),
//!         T x D x f32 token vectors (row major)
//! ```
//!
//! A sample longer than the encoder window is stored as several consecutive
//! records sharing the same id, one per segment.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

pub const CVEC_MAGIC: &[u8; 6] = b"CVEC1\n";

/// Encoder window; no record may hold more tokens.
pub const MAX_SEGMENT_TOKENS: usize = 512;

#[derive(Debug, Error)]
pub enum CvecError {
    #[error("CVEC format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("CVEC io error at byte {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: io::Error,
    },
    #[error("invalid context vector set `{id}`: {message}")]
    Invalid { id: String, message: String },
}

/// Encoder output for one segment of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVectorSet {
    pub sample_id: String,
    /// Sequence-level vector (dimension D).
    pub pooled: Array1<f32>,
    /// Character range of each token in the sample's context.
    pub token_offsets: Vec<(u32, u32)>,
    /// T x D token vectors.
    pub token_vectors: Array2<f32>,
}

impl ContextVectorSet {
    pub fn dim(&self) -> usize {
        self.pooled.len()
    }

    pub fn len(&self) -> usize {
        self.token_offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_offsets.is_empty()
    }

    pub fn pooled_f64(&self) -> Array1<f64> {
        self.pooled.mapv(f64::from)
    }

    pub fn token_vectors_f64(&self) -> Array2<f64> {
        self.token_vectors.mapv(f64::from)
    }

    /// Checks shapes, the window limit, offset ordering and finiteness.
    pub fn validate(&self) -> Result<(), CvecError> {
        let invalid = |message: String| CvecError::Invalid {
            id: self.sample_id.clone(),
            message,
        };
        let t = self.token_offsets.len();
        if t > MAX_SEGMENT_TOKENS {
            return Err(invalid(format!(
                "{t} tokens exceed the {MAX_SEGMENT_TOKENS}-token window"
            )));
        }
        if self.token_vectors.dim() != (t, self.dim()) {
            return Err(invalid(format!(
                "token matrix is {:?}, expected ({t}, {})",
                self.token_vectors.dim(),
                self.dim()
            )));
        }
        for (i, &(start, end)) in self.token_offsets.iter().enumerate() {
            if start >= end {
                return Err(invalid(format!("token {i} has empty range [{start}, {end})")));
            }
            if i > 0 {
                let (prev_start, prev_end) = self.token_offsets[i - 1];
                if start <= prev_start || end < prev_end {
                    return Err(invalid(format!("token {i} offsets are not increasing")));
                }
            }
        }
        if self
            .pooled
            .iter()
            .chain(self.token_vectors.iter())
            .any(|v| !v.is_finite())
        {
            return Err(invalid("non-finite value".into()));
        }
        Ok(())
    }
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<(), CvecError> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                CvecError::Format {
                    offset: at,
                    message: format!("truncated record while reading {what}"),
                }
            } else {
                CvecError::Io { offset: at, source: e }
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u16(&mut self, what: &str) -> Result<u16, CvecError> {
        let mut b = [0u8; 2];
        self.exact(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self, what: &str) -> Result<u32, CvecError> {
        let mut b = [0u8; 4];
        self.exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, CvecError> {
        let at = self.offset;
        let mut bytes = vec![0u8; n * 4];
        self.exact(&mut bytes, what)?;
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CvecError::Format {
                offset: at + 4 * i as u64,
                message: format!("non-finite value in {what}"),
            });
        }
        Ok(values)
    }
}

/// Streaming CVEC reader; yields one validated record at a time.
pub struct CvecReader<R> {
    reader: CountingReader<R>,
    dim: usize,
    count: u32,
    read: u32,
    failed: bool,
}

impl<R: Read> CvecReader<R> {
    pub fn new(inner: R) -> Result<Self, CvecError> {
        let mut reader = CountingReader { inner, offset: 0 };
        let mut magic = [0u8; 6];
        reader.exact(&mut magic, "magic")?;
        if &magic != CVEC_MAGIC {
            return Err(CvecError::Format {
                offset: 0,
                message: "bad magic bytes".into(),
            });
        }
        let dim = reader.u32("dimension")? as usize;
        let count = reader.u32("record count")?;
        Ok(Self {
            reader,
            dim,
            count,
            read: 0,
            failed: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of records announced by the header.
    pub fn record_count(&self) -> u32 {
        self.count
    }

    fn next_record(&mut self) -> Result<ContextVectorSet, CvecError> {
        let r = &mut self.reader;
        let record_start = r.offset;
        let id_len = r.u16("id length")? as usize;
        let mut id = vec![0u8; id_len];
        r.exact(&mut id, "id")?;
        let sample_id = String::from_utf8(id).map_err(|_| CvecError::Format {
            offset: record_start + 2,
            message: "id is not UTF-8".into(),
        })?;
        let t_offset = r.offset;
        let t = r.u32("token count")? as usize;
        if t > MAX_SEGMENT_TOKENS {
            return Err(CvecError::Format {
                offset: t_offset,
                message: format!("{t} tokens exceed the {MAX_SEGMENT_TOKENS}-token window"),
            });
        }
        let pooled = r.f32s(self.dim, "pooled vector")?;
        let offsets_at = r.offset;
        let mut token_offsets = Vec::with_capacity(t);
        for _ in 0..t {
            let start = r.u32("token offsets")?;
            let end = r.u32("token offsets")?;
            token_offsets.push((start, end));
        }
        let vectors = r.f32s(t * self.dim, "token vectors")?;
        let set = ContextVectorSet {
            sample_id,
            pooled: Array1::from(pooled),
            token_offsets,
            token_vectors: Array2::from_shape_vec((t, self.dim), vectors).expect("length checked by read"),
        };
        set.validate().map_err(|e| match e {
            CvecError::Invalid { id, message } => CvecError::Format {
                offset: offsets_at,
                message: format!("record `{id}`: {message}"),
            },
            other => other,
        })?;
        Ok(set)
    }

    fn check_trailing(&mut self) -> Result<(), CvecError> {
        let mut probe = [0u8; 1];
        match self.reader.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(CvecError::Format {
                offset: self.reader.offset,
                message: "trailing bytes after the last record".into(),
            }),
            Err(source) => Err(CvecError::Io {
                offset: self.reader.offset,
                source,
            }),
        }
    }
}

impl<R: Read> Iterator for CvecReader<R> {
    type Item = Result<ContextVectorSet, CvecError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.read == self.count {
            self.failed = true;
            return self.check_trailing().err().map(Err);
        }
        self.read += 1;
        let item = self.next_record();
        self.failed = item.is_err();
        Some(item)
    }
}

/// Opens a CVEC file as a stream of records.
pub fn read_context_vectors(path: impl AsRef<Path>) -> Result<CvecReader<BufReader<File>>, CvecError> {
    let file = File::open(path).map_err(|source| CvecError::Io { offset: 0, source })?;
    CvecReader::new(BufReader::new(file))
}

/// Writes CVEC records; the record count is fixed up front.
pub struct CvecWriter<W: Write> {
    inner: W,
    dim: usize,
    remaining: u32,
}

impl<W: Write> CvecWriter<W> {
    pub fn new(mut inner: W, dim: usize, record_count: u32) -> io::Result<Self> {
        inner.write_all(CVEC_MAGIC)?;
        inner.write_all(&(dim as u32).to_le_bytes())?;
        inner.write_all(&record_count.to_le_bytes())?;
        Ok(Self {
            inner,
            dim,
            remaining: record_count,
        })
    }

    pub fn write(&mut self, set: &ContextVectorSet) -> io::Result<()> {
        let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidInput, msg);
        if self.remaining == 0 {
            return Err(bad("more records than declared in the header".into()));
        }
        if set.dim() != self.dim {
            return Err(bad(format!("record dimension {} != {}", set.dim(), self.dim)));
        }
        set.validate().map_err(|e| bad(e.to_string()))?;
        let id = set.sample_id.as_bytes();
        let id_len = u16::try_from(id.len()).map_err(|_| bad("id longer than 65535 bytes".into()))?;
        self.inner.write_all(&id_len.to_le_bytes())?;
        self.inner.write_all(id)?;
        self.inner.write_all(&(set.len() as u32).to_le_bytes())?;
        for v in &set.pooled {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        for &(s, e) in &set.token_offsets {
            self.inner.write_all(&s.to_le_bytes())?;
            self.inner.write_all(&e.to_le_bytes())?;
        }
        for v in &set.token_vectors {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        self.remaining -= 1;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        if self.remaining != 0 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("{} declared records were not written", self.remaining),
            ));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes `sets` to a new CVEC file at `path`.
pub fn write_context_vectors(path: impl AsRef<Path>, dim: usize, sets: &[ContextVectorSet]) -> io::Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut w = CvecWriter::new(file, dim, sets.len() as u32)?;
    for s in sets {
        w.write(s)?;
    }
    w.finish()?;
    Ok(())
}
