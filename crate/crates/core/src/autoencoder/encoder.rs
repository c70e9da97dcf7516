use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BMAEENC\0";
const VERSION: u32 = 1;

/// Where an encoder came from: seeds and a SHA-256 over its training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncoderProvenance {
    pub init_seed: u64,
    pub shuffle_seed: u64,
    #[serde(with = "hex32")]
    pub train_set_hash: [u8; 32],
}

/// The deployed feature extractor `h = ReLU(W x + b)`.
///
/// Deliberately carries no decoder, so a loaded model cannot reconstruct:
///
/// ```compile_fail
/// # fn f(enc: bearing_monitor::autoencoder::Encoder) {
/// enc.decode(&[0.0; 5]);
/// # }
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    w: DMatrix<f64>,
    b: DVector<f64>,
    pub provenance: EncoderProvenance,
}

impl Encoder {
    pub(crate) fn new(w: DMatrix<f64>, b: DVector<f64>, provenance: EncoderProvenance) -> Self {
        Self { w, b, provenance }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn code_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let z = &self.w * DVector::from_column_slice(x) + &self.b;
        Ok(z.iter().map(|v| v.max(0.0)).collect())
    }

    /// Binary layout, little-endian:
    ///
    /// | field | type |
    /// |---|---|
    /// | magic `BMAEENC\0` | 8 bytes |
    /// | version = 1 | u32 |
    /// | input dim `d` | u32 |
    /// | code dim `L` | u32 |
    /// | init seed | u64 |
    /// | shuffle seed | u64 |
    /// | training-set SHA-256 | 32 bytes |
    /// | `W`, row-major | `L*d` f64 |
    /// | `b` | `L` f64 |
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.input_dim() as u32);
        w.u32(self.code_dim() as u32);
        w.u64(self.provenance.init_seed);
        w.u64(self.provenance.shuffle_seed);
        w.bytes(&self.provenance.train_set_hash);
        for r in 0..self.code_dim() {
            w.f64s(self.w.row(r).iter());
        }
        w.f64s(self.b.iter());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, MAGIC, VERSION)?;
        let d = r.dim("input dim")?;
        let l = r.dim("code dim")?;
        let provenance = EncoderProvenance {
            init_seed: r.u64()?,
            shuffle_seed: r.u64()?,
            train_set_hash: r.bytes::<32>()?,
        };
        let w = DMatrix::from_row_slice(l, d, &r.f64s(l * d)?);
        let b = DVector::from_vec(r.f64s(l)?);
        r.finish()?;
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::ModelFormat("non-finite encoder weight".into()));
        }
        Ok(Self { w, b, provenance })
    }
}

pub fn save_encoder(encoder: &Encoder, path: &Path) -> Result<()> {
    std::fs::write(path, encoder.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_encoder(path: &Path) -> Result<Encoder> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Encoder::from_bytes(&bytes)
}

mod hex32 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.iter().map(|b| format!("{b:02x}")).collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 {
            return Err(de::Error::custom("expected 64 hex chars"));
        }
        let mut out = [0u8; 32];
        for (i, o) in out.iter_mut().enumerate() {
            *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(de::Error::custom)?;
        }
        Ok(out)
    }
}
