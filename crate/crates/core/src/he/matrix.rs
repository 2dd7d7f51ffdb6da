//! Matrix arithmetic over the simulated cipher.
//!
//! A [`CipherMatrix`] stores one encoded payload per entry under shared
//! metadata (scale, key domain, depth) — the whole matrix sits at one
//! level, which is exactly how the training loop uses it. Products use
//! lazy rescaling: entry dot-products accumulate at scale² in `i128` and
//! rescale once, so a full inner product costs a single rounding instead
//! of one per term. The conservative error bound helpers still charge
//! 2/scale per accumulated term, which is what downstream accuracy
//! checks budget for.

use ndarray::Array2;

use super::{
    encode, rescale_round, Ciphertext, HeError, KeyId, KeyPair, DEPTH_LIMIT,
};

/// A matrix of encoded values under one key domain at one depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherMatrix {
    rows: usize,
    cols: usize,
    payload: Vec<i128>,
    scale: u64,
    key_id: KeyId,
    depth: u8,
}

impl CipherMatrix {
    /// Encrypts a real matrix entry-wise (depth 0).
    pub fn enc(m: &Array2<f64>, key: &KeyPair, scale: u64) -> Result<Self, HeError> {
        let mut payload = Vec::with_capacity(m.len());
        for &x in m.iter() {
            payload.push(encode(x, scale)?);
        }
        Ok(Self {
            rows: m.nrows(),
            cols: m.ncols(),
            payload,
            scale,
            key_id: key.key_id(),
            depth: 0,
        })
    }

    /// An all-zero encrypted matrix (depth 0); the neutral element for
    /// aggregation.
    pub fn zeros(rows: usize, cols: usize, key: &KeyPair, scale: u64) -> Result<Self, HeError> {
        super::check_scale(scale)?;
        Ok(Self {
            rows,
            cols,
            payload: vec![0; rows * cols],
            scale,
            key_id: key.key_id(),
            depth: 0,
        })
    }

    /// Decrypts under `key`.
    pub fn dec(&self, key: &KeyPair) -> Result<Array2<f64>, HeError> {
        if self.key_id != key.key_id() {
            return Err(HeError::KeyMismatch {
                ciphertext_key: self.key_id.0,
                used_key: key.key_id().0,
            });
        }
        let data: Vec<f64> = self
            .payload
            .iter()
            .map(|&p| p as f64 / self.scale as f64)
            .collect();
        Ok(Array2::from_shape_vec((self.rows, self.cols), data)
            .expect("payload length matches shape"))
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    /// Extracts one entry as a scalar ciphertext.
    pub fn entry(&self, r: usize, c: usize) -> Ciphertext {
        Ciphertext::from_parts(
            self.payload[r * self.cols + c],
            self.scale,
            self.key_id,
            self.depth,
        )
    }

    /// Transpose (pure payload reindexing; no arithmetic).
    pub fn transpose(&self) -> Self {
        let mut payload = vec![0i128; self.payload.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                payload[c * self.rows + r] = self.payload[r * self.cols + c];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            payload,
            scale: self.scale,
            key_id: self.key_id,
            depth: self.depth,
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), HeError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(HeError::ShapeMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<(), HeError> {
        if self.key_id != other.key_id {
            return Err(HeError::KeyMismatch {
                ciphertext_key: self.key_id.0,
                used_key: other.key_id.0,
            });
        }
        if self.scale != other.scale {
            return Err(HeError::ScaleMismatch {
                left: self.scale,
                right: other.scale,
            });
        }
        Ok(())
    }

    /// Entry-wise homomorphic addition (exact).
    pub fn hadd(&self, other: &Self) -> Result<Self, HeError> {
        self.check_compatible(other)?;
        self.check_same_shape(other)?;
        let mut payload = Vec::with_capacity(self.payload.len());
        for (&a, &b) in self.payload.iter().zip(&other.payload) {
            payload.push(a.checked_add(b).ok_or(HeError::Overflow)?);
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            payload,
            scale: self.scale,
            key_id: self.key_id,
            depth: self.depth.max(other.depth),
        })
    }

    /// Entry-wise homomorphic subtraction (exact).
    pub fn hsub(&self, other: &Self) -> Result<Self, HeError> {
        self.check_compatible(other)?;
        self.check_same_shape(other)?;
        let mut payload = Vec::with_capacity(self.payload.len());
        for (&a, &b) in self.payload.iter().zip(&other.payload) {
            payload.push(a.checked_sub(b).ok_or(HeError::Overflow)?);
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            payload,
            scale: self.scale,
            key_id: self.key_id,
            depth: self.depth.max(other.depth),
        })
    }

    /// Multiplies every entry by a public scalar at full float precision
    /// (one rounding per entry, no depth charge).
    pub fn hmul_plain(&self, c: f64) -> Result<Self, HeError> {
        if !c.is_finite() {
            return Err(HeError::Unencodable {
                value: c,
                scale: self.scale,
            });
        }
        let mut payload = Vec::with_capacity(self.payload.len());
        for &p in &self.payload {
            let scaled = p as f64 * c;
            if !scaled.is_finite() || scaled.abs() >= (1i128 << 62) as f64 {
                return Err(HeError::Overflow);
            }
            payload.push(scaled.round() as i128);
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            payload,
            scale: self.scale,
            key_id: self.key_id,
            depth: self.depth,
        })
    }

    /// Encrypted matrix product `self · other`. Charges one depth level;
    /// each output entry rescales once after accumulating at scale².
    pub fn matmul(&self, other: &Self) -> Result<Self, HeError> {
        self.check_compatible(other)?;
        if self.cols != other.rows {
            return Err(HeError::InnerDimMismatch {
                left_cols: self.cols,
                right_rows: other.rows,
            });
        }
        let depth = self.depth.max(other.depth) + 1;
        if depth > DEPTH_LIMIT {
            return Err(HeError::DepthExceeded {
                depth,
                limit: DEPTH_LIMIT,
            });
        }
        let (n, m, k) = (self.rows, self.cols, other.cols);
        let mut payload = vec![0i128; n * k];
        for r in 0..n {
            let lhs_row = &self.payload[r * m..(r + 1) * m];
            for c in 0..k {
                let mut acc: i128 = 0;
                for (j, &a) in lhs_row.iter().enumerate() {
                    let b = other.payload[j * k + c];
                    acc = acc
                        .checked_add(a.checked_mul(b).ok_or(HeError::Overflow)?)
                        .ok_or(HeError::Overflow)?;
                }
                payload[r * k + c] = rescale_round(acc, self.scale);
            }
        }
        Ok(Self {
            rows: n,
            cols: k,
            payload,
            scale: self.scale,
            key_id: self.key_id,
            depth,
        })
    }

    pub(crate) fn payload(&self) -> &[i128] {
        &self.payload
    }

    pub(crate) fn from_parts(
        rows: usize,
        cols: usize,
        payload: Vec<i128>,
        scale: u64,
        key_id: KeyId,
        depth: u8,
    ) -> Result<Self, HeError> {
        if payload.len() != rows * cols {
            return Err(HeError::BadRecord {
                reason: "payload length does not match shape",
            });
        }
        Ok(Self {
            rows,
            cols,
            payload,
            scale,
            key_id,
            depth,
        })
    }
}

/// Conservative worst-case error of one encrypted matrix product against
/// plaintext arithmetic on the decoded operands: `inner_dim` accumulated
/// terms, each budgeted 2/scale, plus propagation of the operands'
/// incoming errors through the factors' magnitudes.
///
/// `max_abs_left`/`max_abs_right` bound the decoded operand entries;
/// `err_left`/`err_right` bound their incoming entry-wise errors.
pub fn matmul_error_bound(
    inner_dim: usize,
    scale: u64,
    max_abs_left: f64,
    err_left: f64,
    max_abs_right: f64,
    err_right: f64,
) -> f64 {
    let quantize = 2.0 / scale as f64;
    inner_dim as f64 * (quantize + max_abs_left * err_right + max_abs_right * err_left)
}
