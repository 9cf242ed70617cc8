//! `DVEC` binary matrix format.
//!
//! ```text
//! magic   b"DVEC"
//! version u32 le  (1)
//! dim     u32 le
//! count   u64 le
//! ids     count × (u32 le byte length, UTF-8 bytes)
//! rows    count × dim × f32 le, row-major
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{DenseError, EmbeddingMatrix, Embeddings};

pub const MAGIC: &[u8; 4] = b"DVEC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated")]
    TruncatedFile,
    #[error("unexpected bytes after the last row")]
    TrailingBytes,
    #[error("id {0} is not valid UTF-8")]
    InvalidId(usize),
    #[error("dimension must be positive")]
    ZeroDim,
    #[error(transparent)]
    Matrix(#[from] DenseError),
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Stream(io::Error),
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), FormatError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::TruncatedFile,
        _ => FormatError::Stream(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, FormatError> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, FormatError> {
    let mut b = [0u8; 8];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_matrix<W: Write>(m: &EmbeddingMatrix, mut w: W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.dim() as u32).to_le_bytes())?;
    w.write_all(&(m.len() as u64).to_le_bytes())?;
    for id in m.ids() {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    for v in m.embeddings().as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<EmbeddingMatrix, FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::BadMagic,
        _ => FormatError::Stream(e),
    })?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let dim = read_u32(&mut r)? as usize;
    if dim == 0 {
        return Err(FormatError::ZeroDim);
    }
    let count = read_u64(&mut r)? as usize;

    // Grow incrementally; the header count is untrusted.
    let mut ids = Vec::new();
    for i in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut buf = Vec::new();
        (&mut r).take(len as u64).read_to_end(&mut buf).map_err(FormatError::Stream)?;
        if buf.len() != len {
            return Err(FormatError::TruncatedFile);
        }
        ids.push(String::from_utf8(buf).map_err(|_| FormatError::InvalidId(i))?);
    }

    let mut rows = Vec::with_capacity(count.min(1 << 16));
    let mut raw = vec![0u8; dim * 4];
    for _ in 0..count {
        read_exact_or_truncated(&mut r, &mut raw)?;
        rows.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        );
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe).map_err(FormatError::Stream)? != 0 {
        return Err(FormatError::TrailingBytes);
    }
    Ok(EmbeddingMatrix::new(ids, Embeddings::from_rows(dim, rows)?)?)
}

pub fn save_matrix(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let io_err = |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_matrix(m, BufWriter::new(file)).map_err(io_err)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, FormatError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_matrix(BufReader::new(file))
}
