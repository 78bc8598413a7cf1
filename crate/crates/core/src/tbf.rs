//! Tensor batch files.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "CMIX"
//! 4       2         version, u16 LE (= 1)
//! 6       1         kind: 0 images, 1 int labels, 2 soft labels, 3 provenance
//! 7       1         ndim (images 4, labels 1, soft labels 2, provenance 2)
//! 8       4 * ndim  dims, u32 LE
//! ...     payload   row-major; f32 LE for images and soft labels,
//!                   u32 LE for labels and provenance
//! ```
//!
//! The payload must be exactly `product(dims) * 4` bytes. Headers are fully
//! validated before any payload byte is read.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::error::Error as ValueError;
use crate::shuffle::Provenance;
use crate::tensor::{ImageBatch, SoftLabelBatch};

pub const MAGIC: [u8; 4] = *b"CMIX";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum TbfError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic {found:?}, expected \"CMIX\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported version {found}, expected {VERSION}")]
    Version { found: u16 },

    #[error("unknown kind byte {0}")]
    UnknownKind(u8),

    #[error("kind {kind} requires ndim {expected}, header says {found}")]
    KindNdim {
        kind: TbfKind,
        expected: u8,
        found: u8,
    },

    #[error("truncated {section}: expected {expected} bytes, found {found}")]
    Truncated {
        section: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{0} unexpected bytes after the payload")]
    TrailingBytes(usize),

    #[error("dims {0:?} overflow the addressable size")]
    Oversized(Vec<u32>),

    #[error("expected a {expected} file, found {found}")]
    WrongKind { expected: TbfKind, found: TbfKind },

    #[error("invalid contents: {0}")]
    Content(#[from] ValueError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbfKind {
    Images = 0,
    Labels = 1,
    SoftLabels = 2,
    Provenance = 3,
}

impl TbfKind {
    pub fn from_byte(b: u8) -> Result<Self, TbfError> {
        Ok(match b {
            0 => TbfKind::Images,
            1 => TbfKind::Labels,
            2 => TbfKind::SoftLabels,
            3 => TbfKind::Provenance,
            other => return Err(TbfError::UnknownKind(other)),
        })
    }

    pub fn ndim(self) -> u8 {
        match self {
            TbfKind::Images => 4,
            TbfKind::Labels => 1,
            TbfKind::SoftLabels | TbfKind::Provenance => 2,
        }
    }
}

impl std::fmt::Display for TbfKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TbfKind::Images => "images",
            TbfKind::Labels => "labels",
            TbfKind::SoftLabels => "soft-labels",
            TbfKind::Provenance => "provenance",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TbfHeader {
    pub kind: TbfKind,
    pub dims: Vec<u32>,
}

impl TbfHeader {
    pub fn elements(&self) -> Result<usize, TbfError> {
        self.dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .and_then(|n| n.checked_mul(4).map(|_| n))
            .ok_or_else(|| TbfError::Oversized(self.dims.clone()))
    }

    pub fn payload_len(&self) -> Result<usize, TbfError> {
        Ok(self.elements()? * 4)
    }

    pub fn encoded_len(&self) -> usize {
        8 + 4 * self.dims.len()
    }
}

/// A decoded file.
#[derive(Debug, Clone, PartialEq)]
pub enum TbfData {
    Images(ImageBatch),
    Labels(Vec<u32>),
    SoftLabels(SoftLabelBatch),
    Provenance(Provenance),
}

impl TbfData {
    pub fn kind(&self) -> TbfKind {
        match self {
            TbfData::Images(_) => TbfKind::Images,
            TbfData::Labels(_) => TbfKind::Labels,
            TbfData::SoftLabels(_) => TbfKind::SoftLabels,
            TbfData::Provenance(_) => TbfKind::Provenance,
        }
    }

    pub fn header(&self) -> TbfHeader {
        let dims: Vec<usize> = match self {
            TbfData::Images(b) => b.dims().to_vec(),
            TbfData::Labels(l) => vec![l.len()],
            TbfData::SoftLabels(s) => vec![s.batch(), s.classes()],
            TbfData::Provenance(p) => vec![p.batch(), p.n()],
        };
        TbfHeader {
            kind: self.kind(),
            dims: dims.into_iter().map(|d| d as u32).collect(),
        }
    }

    pub fn into_images(self) -> Result<ImageBatch, TbfError> {
        match self {
            TbfData::Images(b) => Ok(b),
            other => Err(wrong(TbfKind::Images, other.kind())),
        }
    }

    pub fn into_labels(self) -> Result<Vec<u32>, TbfError> {
        match self {
            TbfData::Labels(l) => Ok(l),
            other => Err(wrong(TbfKind::Labels, other.kind())),
        }
    }

    pub fn into_soft_labels(self) -> Result<SoftLabelBatch, TbfError> {
        match self {
            TbfData::SoftLabels(s) => Ok(s),
            other => Err(wrong(TbfKind::SoftLabels, other.kind())),
        }
    }

    pub fn into_provenance(self) -> Result<Provenance, TbfError> {
        match self {
            TbfData::Provenance(p) => Ok(p),
            other => Err(wrong(TbfKind::Provenance, other.kind())),
        }
    }
}

fn wrong(expected: TbfKind, found: TbfKind) -> TbfError {
    TbfError::WrongKind { expected, found }
}

impl From<ImageBatch> for TbfData {
    fn from(b: ImageBatch) -> Self {
        TbfData::Images(b)
    }
}

impl From<SoftLabelBatch> for TbfData {
    fn from(s: SoftLabelBatch) -> Self {
        TbfData::SoftLabels(s)
    }
}

impl From<Provenance> for TbfData {
    fn from(p: Provenance) -> Self {
        TbfData::Provenance(p)
    }
}

// read_exact, but reporting how many bytes were actually there.
fn fill<R: Read>(r: &mut R, buf: &mut [u8], section: &'static str) -> Result<(), TbfError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => {
                return Err(TbfError::Truncated {
                    section,
                    expected: buf.len(),
                    found: got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Reads and validates a header, leaving `r` at the first payload byte.
pub fn read_header<R: Read>(r: &mut R) -> Result<TbfHeader, TbfError> {
    let mut fixed = [0u8; 8];
    fill(r, &mut fixed, "header")?;
    let magic = [fixed[0], fixed[1], fixed[2], fixed[3]];
    if magic != MAGIC {
        return Err(TbfError::BadMagic { found: magic });
    }
    let version = u16::from_le_bytes([fixed[4], fixed[5]]);
    if version != VERSION {
        return Err(TbfError::Version { found: version });
    }
    let kind = TbfKind::from_byte(fixed[6])?;
    let ndim = fixed[7];
    if ndim != kind.ndim() {
        return Err(TbfError::KindNdim {
            kind,
            expected: kind.ndim(),
            found: ndim,
        });
    }
    let mut raw = vec![0u8; 4 * ndim as usize];
    fill(r, &mut raw, "dims")?;
    let dims = raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let header = TbfHeader { kind, dims };
    header.payload_len()?;
    Ok(header)
}

pub fn read_from<R: Read>(r: &mut R) -> Result<TbfData, TbfError> {
    let header = read_header(r)?;
    let mut payload = vec![0u8; header.payload_len()?];
    fill(r, &mut payload, "payload")?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(TbfError::TrailingBytes(rest.len()));
    }
    decode_payload(&header, &payload)
}

fn decode_payload(header: &TbfHeader, payload: &[u8]) -> Result<TbfData, TbfError> {
    let words = payload.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
    let d: Vec<usize> = header.dims.iter().map(|&d| d as usize).collect();
    Ok(match header.kind {
        TbfKind::Images => {
            let data = words.map(f32::from_le_bytes).collect();
            TbfData::Images(ImageBatch::new(data, d[0], d[1], d[2], d[3])?)
        }
        TbfKind::Labels => TbfData::Labels(words.map(u32::from_le_bytes).collect()),
        TbfKind::SoftLabels => {
            let data = words.map(f32::from_le_bytes).collect();
            TbfData::SoftLabels(SoftLabelBatch::new(data, d[0], d[1])?)
        }
        TbfKind::Provenance => {
            let data = words.map(u32::from_le_bytes).collect();
            TbfData::Provenance(Provenance::new(d[0], d[1], data)?)
        }
    })
}

pub fn decode(bytes: &[u8]) -> Result<TbfData, TbfError> {
    read_from(&mut &bytes[..])
}

pub fn write_to<W: Write>(w: &mut W, data: &TbfData) -> Result<(), TbfError> {
    let header = data.header();
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[header.kind as u8, header.dims.len() as u8])?;
    for d in &header.dims {
        w.write_all(&d.to_le_bytes())?;
    }
    match data {
        TbfData::Images(b) => write_f32(w, b.as_slice())?,
        TbfData::SoftLabels(s) => write_f32(w, s.as_slice())?,
        TbfData::Labels(l) => write_u32(w, l)?,
        TbfData::Provenance(p) => write_u32(w, p.as_slice())?,
    }
    Ok(())
}

fn write_f32<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_u32<W: Write>(w: &mut W, values: &[u32]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn encode(data: &TbfData) -> Vec<u8> {
    let header = data.header();
    let mut out = Vec::with_capacity(header.encoded_len() + header.payload_len().unwrap_or(0));
    write_to(&mut out, data).expect("writing to a Vec cannot fail");
    out
}

pub fn read_tbf(path: impl AsRef<Path>) -> Result<TbfData, TbfError> {
    let mut r = BufReader::new(File::open(path)?);
    read_from(&mut r)
}

/// Reads only the header of a file.
pub fn read_tbf_header(path: impl AsRef<Path>) -> Result<TbfHeader, TbfError> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r)
}

/// Writes to a sibling temp file and renames it over `path`.
pub fn write_tbf(path: impl AsRef<Path>, data: &TbfData) -> Result<(), TbfError> {
    let path = path.as_ref();
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_to(&mut w, data)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub(crate) fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}
