//! Versioned wire format for simulated ciphertexts.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"HECT"        4 bytes
//! version u16           currently 1
//! key_id  u64
//! scale   u64
//! depth   u8
//! kind    u8            0 = scalar, 1 = matrix
//! rows    u32
//! cols    u32
//! count   u64           number of payload entries (= rows * cols)
//! payload count * i128  16 bytes each
//! ```
//!
//! Encoding is a pure function of the ciphertext, so records are
//! byte-identical across runs for identical inputs.

use super::matrix::CipherMatrix;
use super::{Ciphertext, HeError, KeyId};

const MAGIC: &[u8; 4] = b"HECT";
const VERSION: u16 = 1;
const KIND_SCALAR: u8 = 0;
const KIND_MATRIX: u8 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 8 + 1 + 1 + 4 + 4 + 8;

fn write_header(
    out: &mut Vec<u8>,
    key_id: KeyId,
    scale: u64,
    depth: u8,
    kind: u8,
    rows: u32,
    cols: u32,
    count: u64,
) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&key_id.0.to_le_bytes());
    out.extend_from_slice(&scale.to_le_bytes());
    out.push(depth);
    out.push(kind);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
}

struct Header {
    key_id: KeyId,
    scale: u64,
    depth: u8,
    kind: u8,
    rows: u32,
    cols: u32,
    count: u64,
}

fn read_header(bytes: &[u8]) -> Result<Header, HeError> {
    if bytes.len() < HEADER_LEN {
        return Err(HeError::BadRecord {
            reason: "record shorter than header",
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(HeError::BadRecord {
            reason: "bad magic",
        });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(HeError::UnsupportedVersion { version });
    }
    let key_id = KeyId(u64::from_le_bytes(bytes[6..14].try_into().unwrap()));
    let scale = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let depth = bytes[22];
    let kind = bytes[23];
    let rows = u32::from_le_bytes(bytes[24..28].try_into().unwrap());
    let cols = u32::from_le_bytes(bytes[28..32].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[32..40].try_into().unwrap());
    if count != rows as u64 * cols as u64 {
        return Err(HeError::BadRecord {
            reason: "count does not match shape",
        });
    }
    let want = HEADER_LEN as u64 + count * 16;
    if bytes.len() as u64 != want {
        return Err(HeError::BadRecord {
            reason: "record length does not match count",
        });
    }
    Ok(Header {
        key_id,
        scale,
        depth,
        kind,
        rows,
        cols,
        count,
    })
}

fn read_payload(bytes: &[u8], count: u64) -> Vec<i128> {
    let mut payload = Vec::with_capacity(count as usize);
    let mut offset = HEADER_LEN;
    for _ in 0..count {
        payload.push(i128::from_le_bytes(
            bytes[offset..offset + 16].try_into().unwrap(),
        ));
        offset += 16;
    }
    payload
}

/// Serializes a scalar ciphertext.
pub fn ciphertext_to_bytes(ct: &Ciphertext) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16);
    write_header(
        &mut out,
        ct.key_id(),
        ct.scale(),
        ct.depth(),
        KIND_SCALAR,
        1,
        1,
        1,
    );
    out.extend_from_slice(&ct.payload().to_le_bytes());
    out
}

/// Deserializes a scalar ciphertext.
pub fn ciphertext_from_bytes(bytes: &[u8]) -> Result<Ciphertext, HeError> {
    let h = read_header(bytes)?;
    if h.kind != KIND_SCALAR || h.count != 1 {
        return Err(HeError::BadRecord {
            reason: "not a scalar record",
        });
    }
    let payload = read_payload(bytes, 1)[0];
    Ok(Ciphertext::from_parts(payload, h.scale, h.key_id, h.depth))
}

/// Serializes an encrypted matrix.
pub fn matrix_to_bytes(m: &CipherMatrix) -> Vec<u8> {
    let payload = m.payload();
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() * 16);
    write_header(
        &mut out,
        m.key_id(),
        m.scale(),
        m.depth(),
        KIND_MATRIX,
        m.nrows() as u32,
        m.ncols() as u32,
        payload.len() as u64,
    );
    for p in payload {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Deserializes an encrypted matrix.
pub fn matrix_from_bytes(bytes: &[u8]) -> Result<CipherMatrix, HeError> {
    let h = read_header(bytes)?;
    if h.kind != KIND_MATRIX {
        return Err(HeError::BadRecord {
            reason: "not a matrix record",
        });
    }
    let payload = read_payload(bytes, h.count);
    CipherMatrix::from_parts(
        h.rows as usize,
        h.cols as usize,
        payload,
        h.scale,
        h.key_id,
        h.depth,
    )
}
