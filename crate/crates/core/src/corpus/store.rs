//! Dense row-major `f32` matrices and the `ARTS` binary container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes    | content                         |
//! |----------|---------------------------------|
//! | 0..4     | magic `ARTS`                    |
//! | 4..8     | version, `u32` (currently 1)    |
//! | 8..16    | row count `n`, `u64`            |
//! | 16..24   | column count `d`, `u64`         |
//! | 24..     | `n * d` `f32` values, row-major |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ARTS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

/// Row norms within this distance of 1 are accepted untouched.
pub const NORM_TOLERANCE: f64 = 1e-4;
/// Row norms deviating by at least this much are rejected.
pub const NORM_REJECT: f64 = 1e-2;

/// An `n x d` matrix of unit-normalized embeddings, one row per image or
/// concept.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl EmbeddingStore {
    /// Builds a store from row-major data, enforcing the unit-norm invariant.
    ///
    /// Rows whose norm is off by more than [`NORM_TOLERANCE`] but less than
    /// [`NORM_REJECT`] are renormalized with a warning; larger deviations are
    /// a data error.
    pub fn new(n: usize, d: usize, mut data: Vec<f32>) -> Result<Self> {
        check_dims(n, d, data.len())?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        for (i, row) in data.chunks_exact_mut(d).enumerate() {
            let norm = row_norm(row);
            let deviation = (norm - 1.0).abs();
            if deviation <= NORM_TOLERANCE {
                continue;
            }
            if deviation < NORM_REJECT {
                log::warn!("row {i} has norm {norm:.6}; renormalizing");
                scale_row(row, norm);
            } else {
                return Err(Error::Data(format!(
                    "row {i} has norm {norm:.6}, expected 1"
                )));
            }
        }
        Ok(EmbeddingStore { n, d, data })
    }

    /// Builds a store after L2-normalizing every row. Zero rows are rejected.
    pub fn normalized(n: usize, d: usize, mut data: Vec<f32>) -> Result<Self> {
        check_dims(n, d, data.len())?;
        for (i, row) in data.chunks_exact_mut(d).enumerate() {
            let norm = row_norm(row);
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::Data(format!("row {i} cannot be normalized")));
            }
            scale_row(row, norm);
        }
        Self::new(n, d, data)
    }

    pub fn from_rows<R: AsRef<[f32]>>(d: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::Shape {
                    what: "embedding row",
                    expected: d,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), d, data)
    }

    pub fn empty(d: usize) -> Result<Self> {
        Self::new(0, d, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// A new store holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> EmbeddingStore {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingStore {
            n: indices.len(),
            d: self.d,
            data,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        encode_matrix(self.n, self.d, &self.data, &mut out)
            .expect("store invariants guarantee a valid matrix");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let (n, d, data) = decode_matrix(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes after matrix payload",
                cursor.len()
            )));
        }
        Self::new(n, d, data)
    }
}

fn check_dims(n: usize, d: usize, len: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::Validation("embedding dimensionality must be >= 1".into()));
    }
    let expected = n
        .checked_mul(d)
        .ok_or_else(|| Error::Validation(format!("matrix {n}x{d} is too large")))?;
    if expected != len {
        return Err(Error::Shape {
            what: "embedding data",
            expected,
            found: len,
        });
    }
    Ok(())
}

fn row_norm(row: &[f32]) -> f64 {
    row.iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

fn scale_row(row: &mut [f32], norm: f64) {
    for v in row.iter_mut() {
        *v = (f64::from(*v) / norm) as f32;
    }
}

/// Writes one `ARTS` matrix section. No unit-norm requirement applies here,
/// so the same container also carries classifier weights.
pub fn encode_matrix<W: Write>(n: usize, d: usize, data: &[f32], out: &mut W) -> Result<()> {
    check_dims(n, d, data.len())?;
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&(n as u64).to_le_bytes());
    header[16..24].copy_from_slice(&(d as u64).to_le_bytes());
    let mut buf = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    buf.extend_from_slice(&header);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
        .map_err(|e| Error::io("<matrix stream>", e))
}

/// Reads one `ARTS` matrix section, leaving the reader positioned after it.
pub fn decode_matrix<R: Read>(reader: &mut R) -> Result<(usize, usize, Vec<f32>)> {
    let mut header = [0u8; HEADER_LEN];
    read_header(reader, &mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"ARTS\"",
            String::from_utf8_lossy(&header[0..4])
        )));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let d = u64::from_le_bytes(header[16..24].try_into().unwrap());
    if d == 0 {
        return Err(Error::Format("column count is zero".into()));
    }
    let byte_len = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("dimensions {n}x{d} overflow")))?;
    let (n, d) = (n as usize, d as usize);

    // Read through `take` so a lying header cannot force a huge allocation.
    let mut payload = Vec::new();
    reader
        .take(byte_len)
        .read_to_end(&mut payload)
        .map_err(|e| Error::io("<matrix stream>", e))?;
    if payload.len() as u64 != byte_len {
        return Err(Error::Format(format!(
            "truncated payload: expected {byte_len} bytes, found {}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n, d, data))
}

fn read_header<R: Read>(reader: &mut R, header: &mut [u8; HEADER_LEN]) -> Result<()> {
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) => {
                return Err(Error::Format(format!(
                    "truncated header: {filled} of {HEADER_LEN} bytes"
                )))
            }
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::io("<matrix stream>", e)),
        }
    }
    Ok(())
}

pub fn read_embedding_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let (n, d, data) = decode_matrix(&mut reader)?;
    let mut probe = [0u8; 1];
    if reader.read(&mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after matrix payload",
            path.display()
        )));
    }
    EmbeddingStore::new(n, d, data)
}

pub fn write_embedding_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    encode_matrix(store.n, store.d, &store.data, &mut writer)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_rows(n: usize, d: usize, seed: u64) -> EmbeddingStore {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        EmbeddingStore::normalized(n, d, data).unwrap()
    }

    #[test]
    fn write_then_read_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.arts");
        let store = unit_rows(7, 5, 1);
        write_embedding_store(&store, &path).unwrap();
        let back = read_embedding_store(&path).unwrap();
        let a: Vec<u32> = store.as_slice().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.as_slice().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!((back.n(), back.d()), (7, 5));
    }

    #[test]
    fn two_writes_produce_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let store = unit_rows(3, 4, 2);
        write_embedding_store(&store, dir.path().join("a")).unwrap();
        write_embedding_store(&store, dir.path().join("b")).unwrap();
        let a = std::fs::read(dir.path().join("a")).unwrap();
        let b = std::fs::read(dir.path().join("b")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), HEADER_LEN + 3 * 4 * 4);
        assert_eq!(&a[0..4], b"ARTS");
        assert_eq!(u32::from_le_bytes(a[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(a[8..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(a[16..24].try_into().unwrap()), 4);
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let mut bytes = unit_rows(2, 3, 3).to_bytes();
        bytes[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_version_and_truncation_are_format_errors() {
        let good = unit_rows(2, 3, 4).to_bytes();
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(EmbeddingStore::from_bytes(&bad_version), Err(Error::Format(_))));
        assert!(matches!(
            EmbeddingStore::from_bytes(&good[..good.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(EmbeddingStore::from_bytes(&good[..10]), Err(Error::Format(_))));
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(EmbeddingStore::from_bytes(&trailing), Err(Error::Format(_))));
    }

    #[test]
    fn huge_declared_size_does_not_allocate() {
        let mut bytes = unit_rows(1, 2, 5).to_bytes();
        bytes[8..16].copy_from_slice(&(u64::MAX / 16).to_le_bytes());
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn zero_row_is_a_data_error() {
        let mut data = unit_rows(3, 4, 6).as_slice().to_vec();
        for v in &mut data[4..8] {
            *v = 0.0;
        }
        let mut bytes = Vec::new();
        encode_matrix(3, 4, &data, &mut bytes).unwrap();
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::Data(_))));
    }

    #[test]
    fn non_finite_is_a_data_error() {
        let mut data = unit_rows(2, 2, 7).as_slice().to_vec();
        data[3] = f32::NAN;
        assert!(matches!(EmbeddingStore::new(2, 2, data.clone()), Err(Error::Data(_))));
        data[3] = f32::INFINITY;
        assert!(matches!(EmbeddingStore::new(2, 2, data), Err(Error::Data(_))));
    }

    #[test]
    fn small_norm_drift_is_renormalized() {
        let data = vec![1.001_f32, 0.0, 0.6, 0.8];
        let store = EmbeddingStore::new(2, 2, data).unwrap();
        assert_eq!(store.row(0)[0], 1.0);
        assert_eq!(store.row(1), &[0.6, 0.8]);
        assert!(matches!(
            EmbeddingStore::new(1, 2, vec![1.02, 0.0]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn zero_dimensionality_is_rejected() {
        let mut sink = Vec::new();
        assert!(matches!(encode_matrix(0, 0, &[], &mut sink), Err(Error::Validation(_))));
        assert!(matches!(EmbeddingStore::empty(0), Err(Error::Validation(_))));
        assert!(EmbeddingStore::empty(3).unwrap().is_empty());
    }
}
