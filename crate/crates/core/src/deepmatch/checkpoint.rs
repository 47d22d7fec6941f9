//! Classifier checkpoints: a JSON header followed by four `ARTS` matrix
//! sections (`W1`, `b1`, `W2`, `b2`).
//!
//! ```text
//! "ARTC" | version u32 LE | header length u64 LE | header JSON | W1 | b1 | W2 | b2
//! ```

use std::fs;
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Classifier, Mlp, TrainConfig};
use crate::corpus::{decode_matrix, encode_matrix, ArtistId};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ARTC";
const VERSION: u32 = 1;
const MAX_HEADER: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub classes: Vec<ArtistId>,
    pub config: TrainConfig,
}

pub fn encode_checkpoint(c: &Classifier, config: &TrainConfig) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        input_dim: c.input_dim(),
        hidden_dim: c.hidden_dim(),
        classes: c.classes().to_vec(),
        config: *config,
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let net = c.net();
    let (d, h, a) = (net.input_dim(), net.hidden_dim(), net.classes());
    encode_matrix(d, h, net.w1.as_slice().expect("standard layout"), &mut out)?;
    encode_matrix(1, h, net.b1.as_slice().expect("standard layout"), &mut out)?;
    encode_matrix(h, a, net.w2.as_slice().expect("standard layout"), &mut out)?;
    encode_matrix(1, a, net.b2.as_slice().expect("standard layout"), &mut out)?;
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Classifier, CheckpointHeader)> {
    let mut r = bytes;
    let mut fixed = [0u8; 16];
    r.read_exact(&mut fixed)
        .map_err(|_| Error::Format("truncated checkpoint header".into()))?;
    if &fixed[0..4] != MAGIC {
        return Err(Error::Format("not a classifier checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(fixed[8..16].try_into().unwrap());
    if header_len > MAX_HEADER || header_len as usize > r.len() {
        return Err(Error::Format("checkpoint header length out of range".into()));
    }
    let (header_bytes, rest) = r.split_at(header_len as usize);
    let header: CheckpointHeader = serde_json::from_slice(header_bytes)?;
    let mut r = rest;
    let (d, h, a) = (header.input_dim, header.hidden_dim, header.classes.len());
    let w1 = section(&mut r, d, h, "W1")?;
    let b1 = section(&mut r, 1, h, "b1")?;
    let w2 = section(&mut r, h, a, "W2")?;
    let b2 = section(&mut r, 1, a, "b2")?;
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    let net = Mlp {
        w1: Array2::from_shape_vec((d, h), w1).expect("checked shape"),
        b1: Array1::from(b1),
        w2: Array2::from_shape_vec((h, a), w2).expect("checked shape"),
        b2: Array1::from(b2),
    };
    let classifier = Classifier::new(net, header.classes.clone())?;
    Ok((classifier, header))
}

fn section(r: &mut &[u8], rows: usize, cols: usize, name: &str) -> Result<Vec<f32>> {
    let (n, d, data) = decode_matrix(r)?;
    if (n, d) != (rows, cols) {
        return Err(Error::Format(format!(
            "checkpoint section {name} is {n}x{d}, header says {rows}x{cols}"
        )));
    }
    Ok(data)
}

pub fn write_checkpoint(c: &Classifier, config: &TrainConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(c, config)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(Classifier, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::super::init_classifier;
    use super::*;

    #[test]
    fn round_trip_is_exact_and_deterministic() {
        let c = init_classifier(5, 3, vec![ArtistId(0), ArtistId(2), ArtistId(9)], 7).unwrap();
        let cfg = TrainConfig::default();
        let a = encode_checkpoint(&c, &cfg).unwrap();
        let b = encode_checkpoint(&c, &cfg).unwrap();
        assert_eq!(a, b);
        let (back, header) = decode_checkpoint(&a).unwrap();
        assert_eq!(back, c);
        assert_eq!(header.classes.len(), 3);
        assert_eq!(header.config, cfg);
    }

    #[test]
    fn corrupt_checkpoints_are_format_errors() {
        let c = init_classifier(2, 2, vec![ArtistId(0), ArtistId(1)], 1).unwrap();
        let bytes = encode_checkpoint(&c, &TrainConfig::default()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format(_))));
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 2]), Err(Error::Format(_))));
        assert!(matches!(decode_checkpoint(&bytes[..8]), Err(Error::Format(_))));
    }
}
