//! Kernel machines on precomputed Gram matrices, and their on-disk format.
//!
//! Model files are a versioned little-endian blob:
//!
//! ```text
//! magic "MIGKMODL" | u32 version | u8 kind (1 svm, 2 ovo, 3 krr)
//! | u32 length + UTF-8 metadata | payload
//! ```
//!
//! The payload carries coefficients, bias, regularization, the kernel
//! config digest and the training bag ids. [`Model::digest`] hashes the
//! blob without metadata, so it identifies the trained model alone.

pub mod krr;
pub mod ovo;
pub mod svm;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use krr::{krr_train, KrrModel};
pub use ovo::{ovo_train, OvoModel, PairModel};
pub use svm::{svm_train, SvmModel, DEFAULT_TOL};

const MAGIC: &[u8; 8] = b"MIGKMODL";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Svm(SvmModel),
    Ovo(OvoModel),
    Krr(KrrModel),
}

impl Model {
    pub fn to_bytes(&self, metadata: &str) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.0.push(match self {
            Model::Svm(_) => 1,
            Model::Ovo(_) => 2,
            Model::Krr(_) => 3,
        });
        w.str(metadata);
        match self {
            Model::Svm(m) => write_svm(&mut w, m),
            Model::Ovo(m) => {
                w.u32(m.classes.len() as u32);
                for &c in &m.classes {
                    w.u32(c);
                }
                w.u32(m.n_train as u32);
                w.u32(m.pairs.len() as u32);
                for p in &m.pairs {
                    w.u32(p.positive);
                    w.u32(p.negative);
                    w.u32(p.members.len() as u32);
                    for &i in &p.members {
                        w.u32(i as u32);
                    }
                    write_svm(&mut w, &p.model);
                }
            }
            Model::Krr(m) => {
                w.f64(m.lambda);
                match m.clip {
                    Some((lo, hi)) => {
                        w.0.push(1);
                        w.f64(lo);
                        w.f64(hi);
                    }
                    None => w.0.push(0),
                }
                w.0.extend_from_slice(&m.config_digest);
                w.u32(m.beta.len() as u32);
                for (id, b) in m.bag_ids.iter().zip(&m.beta) {
                    w.str(id);
                    w.f64(*b);
                }
            }
        }
        w.0
    }

    /// Parses a blob, returning the model and its metadata string.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Model, String)> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let kind = r.take(1)?[0];
        let metadata = r.str()?;
        let model = match kind {
            1 => Model::Svm(read_svm(&mut r)?),
            2 => {
                let nc = r.u32()? as usize;
                let classes = (0..nc).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                let n_train = r.u32()? as usize;
                let np = r.u32()? as usize;
                let mut pairs = Vec::with_capacity(np);
                for _ in 0..np {
                    let positive = r.u32()?;
                    let negative = r.u32()?;
                    let nm = r.u32()? as usize;
                    let members = (0..nm).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
                    let model = read_svm(&mut r)?;
                    pairs.push(PairModel {
                        positive,
                        negative,
                        members,
                        model,
                    });
                }
                Model::Ovo(OvoModel {
                    classes,
                    pairs,
                    n_train,
                })
            }
            3 => {
                let lambda = r.f64()?;
                let clip = match r.take(1)?[0] {
                    0 => None,
                    _ => Some((r.f64()?, r.f64()?)),
                };
                let config_digest = r.digest()?;
                let n = r.u32()? as usize;
                let mut bag_ids = Vec::with_capacity(n);
                let mut beta = Vec::with_capacity(n);
                for _ in 0..n {
                    bag_ids.push(r.str()?);
                    beta.push(r.f64()?);
                }
                Model::Krr(KrrModel {
                    beta,
                    lambda,
                    bag_ids,
                    config_digest,
                    clip,
                })
            }
            k => return Err(Error::Format(format!("unknown model kind {k}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        Ok((model, metadata))
    }

    /// SHA-256 of the metadata-free blob, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes("")))
    }

    pub fn n_train(&self) -> usize {
        match self {
            Model::Svm(m) => m.alpha.len(),
            Model::Ovo(m) => m.n_train,
            Model::Krr(m) => m.beta.len(),
        }
    }
}

fn write_svm(w: &mut Writer, m: &SvmModel) {
    w.f64(m.bias);
    w.f64(m.c);
    w.0.extend_from_slice(&m.config_digest);
    w.u32(m.iterations as u32);
    w.u32(m.alpha.len() as u32);
    for ((id, a), y) in m.bag_ids.iter().zip(&m.alpha).zip(&m.labels) {
        w.str(id);
        w.f64(*a);
        w.0.push(*y as u8);
    }
}

fn read_svm(r: &mut Reader<'_>) -> Result<SvmModel> {
    let bias = r.f64()?;
    let c = r.f64()?;
    let config_digest = r.digest()?;
    let iterations = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut bag_ids = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        bag_ids.push(r.str()?);
        alpha.push(r.f64()?);
        labels.push(r.take(1)?[0] as i8);
    }
    Ok(SvmModel {
        alpha,
        labels,
        bias,
        c,
        bag_ids,
        config_digest,
        iterations,
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(Error::Format("model file truncated".into()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn digest(&mut self) -> Result<[u8; 32]> {
        Ok(self.take(32)?.try_into().expect("32 bytes"))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(format!("invalid UTF-8: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GramMatrix;

    fn gram() -> GramMatrix {
        GramMatrix::from_values(
            4,
            vec![
                1.0, 0.7, 0.2, 0.1, //
                0.7, 1.0, 0.1, 0.3, //
                0.2, 0.1, 1.0, 0.6, //
                0.1, 0.3, 0.6, 1.0,
            ],
        )
        .unwrap()
    }

    #[test]
    fn blobs_round_trip() {
        let g = gram();
        let models = vec![
            Model::Svm(svm_train(&g, &[1, 1, -1, -1], 1.0, DEFAULT_TOL).unwrap()),
            Model::Ovo(ovo_train(&g, &[1, 1, 2, 3], 1.0, DEFAULT_TOL).unwrap()),
            Model::Krr(krr_train(&g, &[0.1, 0.2, 0.8, 0.9], 0.1).unwrap().with_clip(0.0, 1.0)),
        ];
        for m in models {
            let bytes = m.to_bytes("{\"kernel\":\"miGraph\"}");
            let (back, meta) = Model::from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(meta, "{\"kernel\":\"miGraph\"}");
            assert_eq!(back.digest(), m.digest());
        }
    }

    #[test]
    fn digest_ignores_metadata_but_not_coefficients() {
        let g = gram();
        let m = svm_train(&g, &[1, 1, -1, -1], 1.0, DEFAULT_TOL).unwrap();
        let d = Model::Svm(m.clone()).digest();
        assert_eq!(d.len(), 64);
        let mut other = m;
        other.bias += 1e-12;
        assert_ne!(Model::Svm(other).digest(), d);
    }

    #[test]
    fn truncated_blob_rejected() {
        let g = gram();
        let bytes = Model::Svm(svm_train(&g, &[1, 1, -1, -1], 1.0, DEFAULT_TOL).unwrap()).to_bytes("");
        assert!(Model::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Model::from_bytes(b"garbage!").is_err());
    }
}
