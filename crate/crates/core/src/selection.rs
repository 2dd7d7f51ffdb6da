//! Participant selection: which users get a seat in the market.
//!
//! Before any contracts are negotiated the provider trims the candidate
//! pool down to the users most worth dealing with. Each candidate is
//! scored on three attributes — data endowment, device capability, and
//! uplink rate — min-max normalized across the pool so no attribute's
//! physical unit dominates, then combined with convex weights. The top
//! `n` scores win; ties break toward the smaller user id so the outcome
//! is a pure function of the roster.
//!
//! Rosters can be read from and written to CSV (columns `id,d_total,
//! d_local_cap,eps,a_fn,zeta,cycles,freq,rate,compute`).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::MuProfile;

/// Error raised by the selector and the roster codec.
#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("selection weights must be non-negative and sum to 1 (sum = {sum})")]
    BadWeights { sum: f64 },

    #[error("candidate list is empty")]
    NoCandidates,

    #[error("asked for {wanted} participants but only {available} candidates exist")]
    NotEnoughCandidates { wanted: usize, available: usize },

    #[error("candidate id {id} has a non-finite `{field}`")]
    NonFiniteAttribute { id: usize, field: &'static str },

    #[error("duplicate candidate id {id}")]
    DuplicateId { id: usize },

    #[error("roster row {row}: {reason}")]
    BadRosterRow { row: usize, reason: String },

    #[error("roster header missing column `{column}`")]
    MissingColumn { column: &'static str },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convex weights over the three selection attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionWeights {
    pub w_data: f64,
    pub w_compute: f64,
    pub w_rate: f64,
}

impl SelectionWeights {
    /// Validates that the weights are non-negative and sum to 1
    /// (within 1e-12).
    pub fn new(w_data: f64, w_compute: f64, w_rate: f64) -> Result<Self, SelectionError> {
        let sum = w_data + w_compute + w_rate;
        let finite = w_data.is_finite() && w_compute.is_finite() && w_rate.is_finite();
        if !finite || w_data < 0.0 || w_compute < 0.0 || w_rate < 0.0 || (sum - 1.0).abs() > 1e-12
        {
            return Err(SelectionError::BadWeights { sum });
        }
        Ok(Self {
            w_data,
            w_compute,
            w_rate,
        })
    }

    /// Equal weight on every attribute.
    pub fn balanced() -> Self {
        Self {
            w_data: 1.0 / 3.0,
            w_compute: 1.0 / 3.0,
            w_rate: 1.0 / 3.0,
        }
    }

    /// Re-validates weights that arrived via deserialization.
    pub fn validate(&self) -> Result<(), SelectionError> {
        SelectionWeights::new(self.w_data, self.w_compute, self.w_rate).map(|_| ())
    }
}

/// Min-max normalizes a slice to [0, 1]. A degenerate slice (all values
/// equal) maps to all ones: every candidate is equally good on an
/// attribute that cannot discriminate.
pub fn normalize(values: &[f64]) -> Result<Vec<f64>, SelectionError> {
    if values.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    for &v in values {
        if !v.is_finite() {
            return Err(SelectionError::NonFiniteAttribute {
                id: usize::MAX,
                field: "value",
            });
        }
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span <= 0.0 {
        return Ok(vec![1.0; values.len()]);
    }
    Ok(values.iter().map(|v| (v - min) / span).collect())
}

/// Combines already-normalized attribute values into one score.
pub fn selection_score(
    data_norm: f64,
    compute_norm: f64,
    rate_norm: f64,
    weights: &SelectionWeights,
) -> f64 {
    weights.w_data * data_norm + weights.w_compute * compute_norm + weights.w_rate * rate_norm
}

/// Scores every candidate and returns the indices (into `candidates`) of
/// the top `n`, ordered best-first. Ties in score break toward the
/// smaller user id; the result is deterministic for a fixed roster.
pub fn select_top_n(
    candidates: &[MuProfile],
    weights: &SelectionWeights,
    n: usize,
) -> Result<Vec<usize>, SelectionError> {
    weights.validate()?;
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    if n > candidates.len() {
        return Err(SelectionError::NotEnoughCandidates {
            wanted: n,
            available: candidates.len(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in candidates {
        for (field, v) in [
            ("d_total", c.d_total),
            ("compute", c.compute),
            ("rate", c.rate),
        ] {
            if !v.is_finite() {
                return Err(SelectionError::NonFiniteAttribute { id: c.id, field });
            }
        }
        if !seen.insert(c.id) {
            return Err(SelectionError::DuplicateId { id: c.id });
        }
    }

    let data_n = normalize(&candidates.iter().map(|c| c.d_total).collect::<Vec<_>>())?;
    let comp_n = normalize(&candidates.iter().map(|c| c.compute).collect::<Vec<_>>())?;
    let rate_n = normalize(&candidates.iter().map(|c| c.rate).collect::<Vec<_>>())?;

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let score =
        |idx: usize| selection_score(data_n[idx], comp_n[idx], rate_n[idx], weights);
    order.sort_by(|&a, &b| {
        score(b)
            .partial_cmp(&score(a))
            .expect("scores are finite")
            .then(candidates[a].id.cmp(&candidates[b].id))
    });
    order.truncate(n);
    Ok(order)
}

// ---------------------------------------------------------------------------
// Roster CSV codec
// ---------------------------------------------------------------------------

const ROSTER_COLUMNS: [&str; 10] = [
    "id",
    "d_total",
    "d_local_cap",
    "eps",
    "a_fn",
    "zeta",
    "cycles",
    "freq",
    "rate",
    "compute",
];

/// Reads a candidate roster from CSV text.
pub fn roster_from_reader<R: Read>(reader: R) -> Result<Vec<MuProfile>, SelectionError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut col = [0usize; 10];
    for (slot, name) in col.iter_mut().zip(ROSTER_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(SelectionError::MissingColumn { column: name })?;
    }
    let mut out = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |slot: usize| -> Result<f64, SelectionError> {
            let raw = record
                .get(col[slot])
                .ok_or_else(|| SelectionError::BadRosterRow {
                    row: row_idx,
                    reason: format!("missing `{}`", ROSTER_COLUMNS[slot]),
                })?;
            raw.parse::<f64>().map_err(|e| SelectionError::BadRosterRow {
                row: row_idx,
                reason: format!("`{}`: {e}", ROSTER_COLUMNS[slot]),
            })
        };
        let id_raw = record
            .get(col[0])
            .ok_or_else(|| SelectionError::BadRosterRow {
                row: row_idx,
                reason: "missing `id`".into(),
            })?;
        let id = id_raw
            .parse::<usize>()
            .map_err(|e| SelectionError::BadRosterRow {
                row: row_idx,
                reason: format!("`id`: {e}"),
            })?;
        let profile = MuProfile {
            id,
            d_total: field(1)?,
            d_local_cap: field(2)?,
            eps_priv: field(3)?,
            a_fn: field(4)?,
            zeta: field(5)?,
            cycles_per_sample: field(6)?,
            freq: field(7)?,
            rate: field(8)?,
            compute: field(9)?,
        };
        profile
            .validate()
            .map_err(|e| SelectionError::BadRosterRow {
                row: row_idx,
                reason: e.to_string(),
            })?;
        out.push(profile);
    }
    if out.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    Ok(out)
}

/// Reads a candidate roster from a CSV file.
pub fn roster_from_csv(path: &Path) -> Result<Vec<MuProfile>, SelectionError> {
    roster_from_reader(std::fs::File::open(path)?)
}

/// Writes a roster as CSV with the canonical column order.
pub fn roster_to_writer<W: Write>(
    profiles: &[MuProfile],
    writer: W,
) -> Result<(), SelectionError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(ROSTER_COLUMNS)?;
    for p in profiles {
        wtr.write_record([
            p.id.to_string(),
            p.d_total.to_string(),
            p.d_local_cap.to_string(),
            p.eps_priv.to_string(),
            p.a_fn.to_string(),
            p.zeta.to_string(),
            p.cycles_per_sample.to_string(),
            p.freq.to_string(),
            p.rate.to_string(),
            p.compute.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a roster to a CSV file.
pub fn roster_to_csv(profiles: &[MuProfile], path: &Path) -> Result<(), SelectionError> {
    roster_to_writer(profiles, std::fs::File::create(path)?)
}
