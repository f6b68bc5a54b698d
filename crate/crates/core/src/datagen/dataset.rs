//! In-memory training set and its `GVTD` file form.
//!
//! Layout (little-endian): magic `GVTD`, version `u32`, variant `u8`
//! (0 = H, 1 = Q), qp `u16`, pair count `u32`, then per pair the 32×32
//! input patch followed by one 32×32 patch per head, 1024 bytes each.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::position::Variant;

pub const PATCH_SIZE: usize = 32;
const PATCH_BYTES: usize = PATCH_SIZE * PATCH_SIZE;
const MAGIC: &[u8; 4] = b"GVTD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 2 + 4;

/// One training example: an integer-position patch and its sub-pixel targets
/// in the variant's head order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplePair {
    pub input: Vec<u8>,
    pub targets: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub variant: Variant,
    pub qp: u8,
    pub pairs: Vec<SamplePair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let heads = ds.variant.head_count();
    let mut out = Vec::with_capacity(HEADER_LEN + ds.pairs.len() * (1 + heads) * PATCH_BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(ds.variant.code());
    out.extend_from_slice(&(ds.qp as u16).to_le_bytes());
    let count = u32::try_from(ds.pairs.len()).map_err(|_| Error::Dataset("too many pairs".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (i, p) in ds.pairs.iter().enumerate() {
        if p.input.len() != PATCH_BYTES || p.targets.len() != heads || p.targets.iter().any(|t| t.len() != PATCH_BYTES) {
            return Err(Error::Dataset(format!(
                "pair {i} does not hold {heads} targets of {PATCH_SIZE}x{PATCH_SIZE}"
            )));
        }
        out.extend_from_slice(&p.input);
        for t in &p.targets {
            out.extend_from_slice(t);
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "dataset header truncated"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(0, "bad dataset magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported dataset version {version}")));
    }
    let variant = Variant::from_code(bytes[8]).ok_or_else(|| Error::format(8, format!("unknown variant {}", bytes[8])))?;
    let qp = u16::from_le_bytes(bytes[9..11].try_into().unwrap());
    if qp > super::MAX_QP as u16 {
        return Err(Error::format(9, format!("qp {qp} out of range")));
    }
    let count = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let heads = variant.head_count();
    let pair_len = (1 + heads) * PATCH_BYTES;
    let expected = HEADER_LEN + count * pair_len;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected) as u64,
            format!("expected {expected} bytes for {count} pairs, found {}", bytes.len()),
        ));
    }
    let pairs = bytes[HEADER_LEN..]
        .chunks_exact(pair_len)
        .map(|chunk| {
            let mut patches = chunk.chunks_exact(PATCH_BYTES).map(<[u8]>::to_vec);
            let input = patches.next().expect("pair has an input patch");
            SamplePair {
                input,
                targets: patches.collect(),
            }
        })
        .collect();
    Ok(Dataset {
        variant,
        qp: qp as u8,
        pairs,
    })
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(variant: Variant, n: usize) -> Dataset {
        let pairs = (0..n)
            .map(|i| SamplePair {
                input: vec![i as u8; PATCH_BYTES],
                targets: (0..variant.head_count()).map(|j| vec![(i * 16 + j) as u8; PATCH_BYTES]).collect(),
            })
            .collect();
        Dataset { variant, qp: 27, pairs }
    }

    #[test]
    fn round_trip() {
        for v in [Variant::H, Variant::Q] {
            let ds = tiny(v, 3);
            let bytes = encode_dataset(&ds).unwrap();
            assert_eq!(&bytes[..4], b"GVTD");
            assert_eq!(bytes.len(), HEADER_LEN + 3 * (1 + v.head_count()) * 1024);
            assert_eq!(decode_dataset(&bytes).unwrap(), ds);
        }
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = encode_dataset(&tiny(Variant::H, 2)).unwrap();
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 1]), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(matches!(decode_dataset(&bad), Err(Error::Format { offset: 8, .. })));
        assert!(decode_dataset(&bytes[..5]).is_err());
    }
}
