//! Simulated homomorphic arithmetic over fixed-point integers.
//!
//! **This is not encryption.** The "cipher" here is a bookkeeping device:
//! values are encoded as fixed-point integers, tagged with a key id, and
//! carry a multiplicative-depth counter. It reproduces the *arithmetic
//! behavior* a leveled scheme imposes on a training loop — quantization
//! at a power-of-two scale, rescaling after every ciphertext product,
//! a hard depth budget, key-domain checks — without any cryptographic
//! hardness. Payloads are plainly readable by anyone holding the struct.
//! Do not ship data through this module expecting confidentiality.
//!
//! Semantics:
//!
//! * `encode`/`decode` — fixed-point at a power-of-two scale (default
//!   2^16); round-trip error ≤ 1/scale.
//! * `hadd`/`hsub` — exact on the encoded integers.
//! * `hmul` — ciphertext × ciphertext; rescales once (error ≤ 2/scale
//!   plus float representation noise) and charges one level of depth,
//!   up to [`DEPTH_LIMIT`].
//! * `hmul_plain` — ciphertext × public scalar at full float precision
//!   with a single rounding; charges no depth (the simulated analogue of
//!   plaintext multiplication).
//! * keys are deterministic functions of `(owner, seed)`; operations
//!   across distinct key domains refuse to combine, and decryption with
//!   the wrong key errors.
//!
//! Matrix ops live in [`matrix`]; the versioned wire format in
//! [`record`].

pub mod matrix;
pub mod record;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default fixed-point scale: 2^16.
pub const DEFAULT_SCALE: u64 = 1 << 16;

/// Maximum multiplicative depth a ciphertext may reach. Enough for a
/// matrix–(matrix–vector) product chain per training round plus slack.
pub const DEPTH_LIMIT: u8 = 4;

/// Largest encoded magnitude the codec accepts; keeps products of two
/// payloads comfortably inside `i128`.
const MAX_PAYLOAD: i128 = 1 << 62;

/// Error raised by the simulated cipher.
#[derive(Debug, Error, PartialEq)]
pub enum HeError {
    #[error("scale {scale} is not a positive power of two")]
    BadScale { scale: u64 },

    #[error("value {value} cannot be encoded at scale {scale} (out of range or non-finite)")]
    Unencodable { value: f64, scale: u64 },

    #[error("key mismatch: ciphertext under key {ciphertext_key:#x}, operation used key {used_key:#x}")]
    KeyMismatch { ciphertext_key: u64, used_key: u64 },

    #[error("scale mismatch: {left} vs {right}")]
    ScaleMismatch { left: u64, right: u64 },

    #[error("multiplicative depth {depth} exceeds the limit {limit}")]
    DepthExceeded { depth: u8, limit: u8 },

    #[error("payload overflow during homomorphic arithmetic")]
    Overflow,

    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("inner dimensions disagree: {left_cols} vs {right_rows}")]
    InnerDimMismatch { left_cols: usize, right_rows: usize },

    #[error("malformed ciphertext record: {reason}")]
    BadRecord { reason: &'static str },

    #[error("unsupported ciphertext record version {version}")]
    UnsupportedVersion { version: u16 },
}

pub(crate) fn check_scale(scale: u64) -> Result<(), HeError> {
    if scale == 0 || !scale.is_power_of_two() {
        return Err(HeError::BadScale { scale });
    }
    Ok(())
}

/// Identifier of a key domain. Ciphertexts only combine within one
/// domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyId(pub u64);

/// A simulated key pair. The material is deterministic in
/// `(owner, seed)` and exists only so the struct has the shape of a real
/// key; nothing is hidden by it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    key_id: KeyId,
    owner: u64,
    material: [u64; 4],
}

/// SplitMix64 — a bijective mixer, so distinct owners always yield
/// distinct key ids under a fixed seed.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Deterministically derives a key pair for `owner` from `seed`.
pub fn keygen(owner: u64, seed: u64) -> KeyPair {
    let key_id = KeyId(splitmix64(splitmix64(seed) ^ owner));
    let mut material = [0u64; 4];
    let mut s = key_id.0 ^ 0xa076_1d64_78bd_642f;
    for slot in &mut material {
        s = splitmix64(s);
        *slot = s;
    }
    KeyPair {
        key_id,
        owner,
        material,
    }
}

impl KeyPair {
    /// The key-domain id this pair operates in.
    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    /// Owner id the pair was generated for.
    pub fn owner(&self) -> u64 {
        self.owner
    }
}

/// A scalar "ciphertext": an encoded value, the scale it was encoded at,
/// its key domain, and its multiplicative depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ciphertext {
    payload: i128,
    scale: u64,
    key_id: KeyId,
    depth: u8,
}

impl Ciphertext {
    /// Fixed-point scale of the payload.
    pub fn scale(&self) -> u64 {
        self.scale
    }

    /// Key domain the ciphertext lives in.
    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    /// Multiplicative depth consumed so far.
    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub(crate) fn payload(&self) -> i128 {
        self.payload
    }

    pub(crate) fn from_parts(payload: i128, scale: u64, key_id: KeyId, depth: u8) -> Self {
        Self {
            payload,
            scale,
            key_id,
            depth,
        }
    }
}

// ---------------------------------------------------------------------------
// Fixed-point codec
// ---------------------------------------------------------------------------

/// Encodes a real into fixed point: `round(x * scale)`.
pub fn encode(x: f64, scale: u64) -> Result<i128, HeError> {
    check_scale(scale)?;
    if !x.is_finite() {
        return Err(HeError::Unencodable { value: x, scale });
    }
    let scaled = x * scale as f64;
    if scaled.abs() >= MAX_PAYLOAD as f64 {
        return Err(HeError::Unencodable { value: x, scale });
    }
    Ok(scaled.round() as i128)
}

/// Decodes fixed point back to a real: `v / scale`.
pub fn decode(payload: i128, scale: u64) -> Result<f64, HeError> {
    check_scale(scale)?;
    Ok(payload as f64 / scale as f64)
}

/// Divides by `scale` rounding to nearest (ties away from zero); the
/// rescale step after a ciphertext product.
pub(crate) fn rescale_round(value: i128, scale: u64) -> i128 {
    let s = scale as i128;
    let half = s / 2;
    if value >= 0 {
        (value + half) / s
    } else {
        (value - half) / s
    }
}

// ---------------------------------------------------------------------------
// Scalar operations
// ---------------------------------------------------------------------------

/// Encrypts `x` under `key` at the given scale (depth 0).
pub fn enc(x: f64, key: &KeyPair, scale: u64) -> Result<Ciphertext, HeError> {
    Ok(Ciphertext {
        payload: encode(x, scale)?,
        scale,
        key_id: key.key_id,
        depth: 0,
    })
}

/// Decrypts under `key`; errors if the ciphertext lives in another key
/// domain.
pub fn dec(ct: &Ciphertext, key: &KeyPair) -> Result<f64, HeError> {
    if ct.key_id != key.key_id {
        return Err(HeError::KeyMismatch {
            ciphertext_key: ct.key_id.0,
            used_key: key.key_id.0,
        });
    }
    decode(ct.payload, ct.scale)
}

fn check_pair(a: &Ciphertext, b: &Ciphertext) -> Result<(), HeError> {
    if a.key_id != b.key_id {
        return Err(HeError::KeyMismatch {
            ciphertext_key: a.key_id.0,
            used_key: b.key_id.0,
        });
    }
    if a.scale != b.scale {
        return Err(HeError::ScaleMismatch {
            left: a.scale,
            right: b.scale,
        });
    }
    Ok(())
}

/// Homomorphic addition; exact on the encoded integers.
pub fn hadd(a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
    check_pair(a, b)?;
    let payload = a.payload.checked_add(b.payload).ok_or(HeError::Overflow)?;
    Ok(Ciphertext {
        payload,
        scale: a.scale,
        key_id: a.key_id,
        depth: a.depth.max(b.depth),
    })
}

/// Homomorphic subtraction; exact on the encoded integers.
pub fn hsub(a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
    check_pair(a, b)?;
    let payload = a.payload.checked_sub(b.payload).ok_or(HeError::Overflow)?;
    Ok(Ciphertext {
        payload,
        scale: a.scale,
        key_id: a.key_id,
        depth: a.depth.max(b.depth),
    })
}

/// Homomorphic multiplication. Rescales once (≤ 2/scale error against
/// the product of the decoded operands) and charges one depth level.
pub fn hmul(a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
    check_pair(a, b)?;
    let depth = a.depth.max(b.depth) + 1;
    if depth > DEPTH_LIMIT {
        return Err(HeError::DepthExceeded {
            depth,
            limit: DEPTH_LIMIT,
        });
    }
    let wide = a.payload.checked_mul(b.payload).ok_or(HeError::Overflow)?;
    Ok(Ciphertext {
        payload: rescale_round(wide, a.scale),
        scale: a.scale,
        key_id: a.key_id,
        depth,
    })
}

/// Multiplies a ciphertext by a public scalar at full float precision
/// (one rounding, ≤ 1/scale error contribution; no depth charge).
pub fn hmul_plain(ct: &Ciphertext, c: f64) -> Result<Ciphertext, HeError> {
    if !c.is_finite() {
        return Err(HeError::Unencodable {
            value: c,
            scale: ct.scale,
        });
    }
    let scaled = ct.payload as f64 * c;
    if !scaled.is_finite() || scaled.abs() >= MAX_PAYLOAD as f64 {
        return Err(HeError::Overflow);
    }
    Ok(Ciphertext {
        payload: scaled.round() as i128,
        scale: ct.scale,
        key_id: ct.key_id,
        depth: ct.depth,
    })
}
