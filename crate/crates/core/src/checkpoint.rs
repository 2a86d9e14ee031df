//! Binary model checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `GRUHOCKP`                        |
//! | 8      | 4    | format version (u32, currently 1)       |
//! | 12     | 4    | reserved, zero                          |
//! | 16     | 8    | vocab / codebook size (u64)             |
//! | 24     | 8    | embedding size E (u64)                  |
//! | 32     | 8    | hidden size H (u64)                     |
//! | 40     | 8    | outputs N (u64)                         |
//! | 48     | 8    | seed (u64)                              |
//! | 56     | 8    | optimizer step count (u64)              |
//! | 64     | ...  | parameters as f64, row-major            |
//!
//! Parameter order: embedding (vocab x E), W_r, W_z, W_q (H x E),
//! U_r, U_z, U_q (H x H), c_r, c_z, c_q (H), W_f (N x H), c_f (N).

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{GruModel, ModelDims};

pub const MAGIC: &[u8; 8] = b"GRUHOCKP";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: GruModel,
    pub seed: u64,
    pub step: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.model.dims;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.model.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in [
            d.vocab as u64,
            d.embed as u64,
            d.hidden as u64,
            d.outputs as u64,
            self.seed,
            self.step,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in self.model.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let bad = |m: &str| Error::Schema(format!("checkpoint: {m}"));
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[16 + 8 * i..24 + 8 * i].try_into().unwrap());
        let dims = ModelDims {
            vocab: word(0) as usize,
            embed: word(1) as usize,
            hidden: word(2) as usize,
            outputs: word(3) as usize,
        };
        dims.validate().map_err(|e| bad(&e.to_string()))?;
        let mut model = GruModel::zeros(dims);
        let expected = HEADER_LEN + 8 * model.num_params();
        if bytes.len() != expected {
            return Err(bad(&format!(
                "expected {expected} bytes for these dimensions, found {}",
                bytes.len()
            )));
        }
        let mut chunks = bytes[HEADER_LEN..].chunks_exact(8);
        for t in model.tensors_mut() {
            for (v, c) in t.iter_mut().zip(&mut chunks) {
                *v = f64::from_le_bytes(c.try_into().unwrap());
            }
        }
        Ok(Checkpoint {
            model,
            seed: word(4),
            step: word(5),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let dims = ModelDims {
            vocab: 7,
            embed: 3,
            hidden: 4,
            outputs: 2,
        };
        let ck = Checkpoint {
            model: GruModel::init(dims, 5).unwrap(),
            seed: 5,
            step: 123,
        };
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..8], b"GRUHOCKP");
        assert_eq!(bytes.len(), 64 + 8 * ck.model.num_params());
        // first parameter is embedding[0][0]
        let first = f64::from_le_bytes(bytes[64..72].try_into().unwrap());
        assert_eq!(first, ck.model.embedding[[0, 0]]);
        // last parameter is c_f[N-1]
        let last = f64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        assert_eq!(last, ck.model.out_bias[1]);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let dims = ModelDims {
            vocab: 2,
            embed: 1,
            hidden: 1,
            outputs: 2,
        };
        let bytes = Checkpoint {
            model: GruModel::zeros(dims),
            seed: 0,
            step: 0,
        }
        .to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong).is_err());
        let mut wrong = bytes;
        wrong[8] = 9;
        assert!(Checkpoint::from_bytes(&wrong).is_err());
    }
}
