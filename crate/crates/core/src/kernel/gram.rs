//! Gram matrices: storage, PSD checks and file formats.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic     8 bytes   "MIGKGRAM"
//! version   u32       1
//! n         u64
//! kernel    u32 length + UTF-8 name
//! digest    32 bytes  kernel-config SHA-256
//! ids       n × (u32 length + UTF-8 bag id)
//! values    n·n f64, row-major
//! ```

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MIGKGRAM";
const VERSION: u32 = 1;

/// Symmetric matrix of bag-level kernel values.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
    ids: Vec<String>,
    kernel: String,
    config_digest: [u8; 32],
}

impl GramMatrix {
    pub fn new(values: Vec<f64>, ids: Vec<String>, kernel: impl Into<String>, config_digest: [u8; 32]) -> Result<Self> {
        let n = ids.len();
        if values.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "{} values for {n} bags; expected {}",
                values.len(),
                n * n
            )));
        }
        Ok(Self {
            n,
            values,
            ids,
            kernel: kernel.into(),
            config_digest,
        })
    }

    /// Bare matrix without bag ids or provenance; ids are the row indices.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(values, (0..n).map(|i| i.to_string()).collect(), "precomputed", [0; 32])
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn kernel(&self) -> &str {
        &self.kernel
    }

    pub fn config_digest(&self) -> &[u8; 32] {
        &self.config_digest
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Principal submatrix on `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> GramMatrix {
        let mut values = Vec::with_capacity(idx.len() * idx.len());
        for &i in idx {
            for &j in idx {
                values.push(self.get(i, j));
            }
        }
        GramMatrix {
            n: idx.len(),
            values,
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            kernel: self.kernel.clone(),
            config_digest: self.config_digest,
        }
    }

    /// Rectangular block with rows `rows` and columns `cols`.
    pub fn cross(&self, rows: &[usize], cols: &[usize]) -> CrossGram {
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                values.push(self.get(i, j));
            }
        }
        CrossGram {
            rows: rows.len(),
            cols: cols.len(),
            values,
            row_ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            col_ids: cols.iter().map(|&j| self.ids[j].clone()).collect(),
        }
    }

    /// Largest absolute asymmetry `|K_ij − K_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        if self.n == 0 {
            return (0.0, 0.0);
        }
        let m = DMatrix::from_row_slice(self.n, self.n, &self.values);
        let eig = SymmetricEigen::new(m).eigenvalues;
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// PSD up to jitter: `λ_min ≥ −rel_tol · λ_max`.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let (min, max) = self.eigen_range();
        min >= -rel_tol * max.abs()
    }

    /// If `λ_min < −1e−8·λ_max`, adds `|λ_min| + 1e−10` to the diagonal and
    /// returns the jitter applied.
    pub fn repair_psd(&mut self) -> Option<f64> {
        let (min, max) = self.eigen_range();
        if min >= -1e-8 * max.abs() {
            return None;
        }
        let jitter = min.abs() + 1e-10;
        for i in 0..self.n {
            self.values[i * self.n + i] += jitter;
        }
        log::warn!("gram matrix ({}) not PSD: λ_min = {min:e}; added diagonal jitter {jitter:e}", self.kernel);
        Some(jitter)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        write_str(&mut w, &self.kernel)?;
        w.write_all(&self.config_digest)?;
        for id in &self.ids {
            write_str(&mut w, id)?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a gram file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported gram file version {version}")));
        }
        let n = read_u64(&mut r)? as usize;
        let kernel = read_str(&mut r)?;
        let mut config_digest = [0u8; 32];
        r.read_exact(&mut config_digest)?;
        let ids = (0..n).map(|_| read_str(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(n * n);
        let mut buf = [0u8; 8];
        for _ in 0..n * n {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Self::new(values, ids, kernel, config_digest)
    }

    /// CSV export: header `bag_id,<id_0>,...`, then one row per bag.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["bag_id".to_owned()];
        header.extend(self.ids.iter().cloned());
        out.write_record(&header)?;
        for i in 0..self.n {
            let mut rec = vec![self.ids[i].clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Rectangular kernel block: rows are query bags, columns training bags.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossGram {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
}

impl CrossGram {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::Format(format!("invalid UTF-8 in gram file: {e}")))
}
