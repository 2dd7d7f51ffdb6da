//! Dataset synthesis, partitioning, and the contract → training handoff.
//!
//! The market layer negotiates over *sample counts*; the training layer
//! needs actual matrices. This module bridges them:
//!
//! * [`synth_dataset`] draws a reproducible linear-regression task
//!   (Gaussian features, Gaussian ground-truth weights, additive noise).
//! * [`partition_non_iid`] deals samples to users sorted by label, so
//!   each user's block covers a different slice of the label range —
//!   deliberately non-IID.
//! * [`apply_contract_split`] turns a contract book plus the provider's
//!   acceptance fractions at the realized type into per-user encrypted /
//!   local sample counts (floored to integers, clamped to the block with
//!   a warning record when a contract promises more data than the block
//!   physically holds).
//! * [`load_csv`] / [`write_csv`] move datasets in and out of CSV with a
//!   `label_*` column-name convention.
//!
//! Everything is deterministic: same seed, same bytes.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::market::{ContractBook, EtaAllocation};

/// Error raised while building, slicing, or (de)serializing datasets.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset must have at least one sample and one feature (got {rows} x {cols})")]
    EmptyDataset { rows: usize, cols: usize },

    #[error("labels have {label_rows} rows but features have {feature_rows}")]
    RowMismatch {
        feature_rows: usize,
        label_rows: usize,
    },

    #[error("cannot split {samples} samples among {users} users")]
    BadUserCount { samples: usize, users: usize },

    #[error("rows {rows:?} contain non-finite values")]
    NonFiniteRows { rows: Vec<usize> },

    #[error("csv row {row}, column `{column}`: {reason}")]
    BadCell {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("csv has no `label_*` columns")]
    NoLabelColumns,

    #[error("csv has no feature columns")]
    NoFeatureColumns,

    #[error("csv contains no data rows")]
    NoRows,

    #[error("plan covers {plan_users} users but the book has {book_users}")]
    PlanBookMismatch {
        plan_users: usize,
        book_users: usize,
    },

    #[error("realized type {index} out of range ({count} types)")]
    TypeOutOfRange { index: usize, count: usize },

    #[error("share {value} outside [0, 1]")]
    BadShare { value: f64 },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A feature/label matrix pair with matching row counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Array2<f64>,
}

impl Dataset {
    /// Wraps matrices after checking shape agreement and finiteness.
    pub fn new(features: Array2<f64>, labels: Array2<f64>) -> Result<Self, DataError> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(DataError::EmptyDataset {
                rows: features.nrows(),
                cols: features.ncols(),
            });
        }
        if labels.nrows() != features.nrows() {
            return Err(DataError::RowMismatch {
                feature_rows: features.nrows(),
                label_rows: labels.nrows(),
            });
        }
        let mut bad = Vec::new();
        for r in 0..features.nrows() {
            let row_ok = features.row(r).iter().all(|v| v.is_finite())
                && labels.row(r).iter().all(|v| v.is_finite());
            if !row_ok {
                bad.push(r);
            }
        }
        if !bad.is_empty() {
            return Err(DataError::NonFiniteRows { rows: bad });
        }
        Ok(Self { features, labels })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn label_dim(&self) -> usize {
        self.labels.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Array2<f64> {
        &self.labels
    }

    /// Gathers the given rows into a new dataset (order preserved).
    pub fn gather(&self, indices: &[usize]) -> Dataset {
        let features = self.features.select(Axis(0), indices);
        let labels = self.labels.select(Axis(0), indices);
        Dataset { features, labels }
    }

    /// Concatenates datasets row-wise. Panics if shapes disagree — the
    /// callers concatenate blocks cut from one parent dataset.
    pub fn concat(parts: &[&Dataset]) -> Option<Dataset> {
        let first = parts.first()?;
        let views: Vec<_> = parts.iter().map(|d| d.features.view()).collect();
        let features = ndarray::concatenate(Axis(0), &views).ok()?;
        let views: Vec<_> = parts.iter().map(|d| d.labels.view()).collect();
        let labels = ndarray::concatenate(Axis(0), &views).ok()?;
        let _ = first;
        Some(Dataset { features, labels })
    }
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

/// Draws a linear task: features ~ N(0,1), ground-truth weights ~ N(0,1),
/// labels = F·W + noise_sigma·N(0,1). Returns the dataset and the
/// ground-truth weight matrix (d × k).
pub fn synth_dataset(
    seed: u64,
    n_samples: usize,
    feature_dim: usize,
    label_dim: usize,
    noise_sigma: f64,
) -> Result<(Dataset, Array2<f64>), DataError> {
    if n_samples == 0 || feature_dim == 0 || label_dim == 0 {
        return Err(DataError::EmptyDataset {
            rows: n_samples,
            cols: feature_dim.min(label_dim),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = |rows: usize, cols: usize, rng: &mut ChaCha20Rng| {
        Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
    };
    let features = normal(n_samples, feature_dim, &mut rng);
    let truth = normal(feature_dim, label_dim, &mut rng);
    let noise = normal(n_samples, label_dim, &mut rng);
    let labels = features.dot(&truth) + noise * noise_sigma.abs();
    Ok((Dataset::new(features, labels)?, truth))
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

/// A deal of dataset rows to users: indices sorted by label, cut into
/// contiguous blocks (one per user).
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    sorted_indices: Vec<usize>,
    blocks: Vec<Range<usize>>,
}

impl PartitionPlan {
    /// Number of users the plan covers.
    pub fn user_count(&self) -> usize {
        self.blocks.len()
    }

    /// Row indices (into the parent dataset) of user `n`'s block.
    pub fn block(&self, n: usize) -> &[usize] {
        &self.sorted_indices[self.blocks[n].clone()]
    }

    /// Size of user `n`'s block.
    pub fn block_len(&self, n: usize) -> usize {
        self.blocks[n].len()
    }
}

/// Sorts samples by their first label column and deals contiguous blocks
/// to `mu_count` users. With `mu_count` dividing the sample count every
/// block is equal; otherwise the first `samples % mu_count` blocks get
/// one extra sample. The label-sorted dealing makes blocks non-IID.
pub fn partition_non_iid(ds: &Dataset, mu_count: usize) -> Result<PartitionPlan, DataError> {
    if mu_count == 0 || mu_count > ds.n_samples() {
        return Err(DataError::BadUserCount {
            samples: ds.n_samples(),
            users: mu_count,
        });
    }
    let mut sorted_indices: Vec<usize> = (0..ds.n_samples()).collect();
    sorted_indices.sort_by(|&a, &b| {
        ds.labels[(a, 0)]
            .total_cmp(&ds.labels[(b, 0)])
            .then(a.cmp(&b))
    });
    let base = ds.n_samples() / mu_count;
    let extra = ds.n_samples() % mu_count;
    let mut blocks = Vec::with_capacity(mu_count);
    let mut start = 0;
    for n in 0..mu_count {
        let len = base + usize::from(n < extra);
        blocks.push(start..start + len);
        start += len;
    }
    Ok(PartitionPlan {
        sorted_indices,
        blocks,
    })
}

// ---------------------------------------------------------------------------
// Contract → sample-count split
// ---------------------------------------------------------------------------

/// Record of a contract promising more samples than a user's block holds.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ClampWarning {
    pub mu_index: usize,
    pub requested_encrypted: usize,
    pub requested_local: usize,
    pub block_len: usize,
}

/// Per-user encrypted/local sample counts for one realized type.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractSplit {
    pub encrypted_counts: Vec<usize>,
    pub local_counts: Vec<usize>,
    pub warnings: Vec<ClampWarning>,
}

fn clamp_counts(
    n: usize,
    mut enc: usize,
    mut local: usize,
    block_len: usize,
    warnings: &mut Vec<ClampWarning>,
) -> (usize, usize) {
    if enc + local > block_len {
        warnings.push(ClampWarning {
            mu_index: n,
            requested_encrypted: enc,
            requested_local: local,
            block_len,
        });
        enc = enc.min(block_len);
        local = block_len - enc;
    }
    (enc, local)
}

/// Converts the book at the realized type into integer sample counts:
/// user `n` encrypts the first `floor(eta(i,n) * d_enc[i])` samples of
/// its block and trains the next `floor(d_local)` locally; the rest of
/// the block sits out. Counts exceeding the block are clamped (encrypted
/// first) and reported in `warnings`.
pub fn apply_contract_split(
    plan: &PartitionPlan,
    book: &ContractBook,
    eta: &EtaAllocation,
    realized_type: usize,
) -> Result<ContractSplit, DataError> {
    if plan.user_count() != book.mu_count() {
        return Err(DataError::PlanBookMismatch {
            plan_users: plan.user_count(),
            book_users: book.mu_count(),
        });
    }
    if realized_type >= book.type_count() {
        return Err(DataError::TypeOutOfRange {
            index: realized_type,
            count: book.type_count(),
        });
    }
    let mut encrypted_counts = Vec::with_capacity(plan.user_count());
    let mut local_counts = Vec::with_capacity(plan.user_count());
    let mut warnings = Vec::new();
    for n in 0..plan.user_count() {
        let c = book.contract(n);
        let enc = (eta.eta(realized_type, n) * c.d_enc[realized_type]).floor() as usize;
        let local = c.d_local.floor() as usize;
        let (enc, local) = clamp_counts(n, enc, local, plan.block_len(n), &mut warnings);
        encrypted_counts.push(enc);
        local_counts.push(local);
    }
    Ok(ContractSplit {
        encrypted_counts,
        local_counts,
        warnings,
    })
}

/// Builds a split directly from per-block shares instead of a contract
/// book — the hook for fixed-share experiment arms (e.g. "no encrypted
/// offloading": `enc_share = 0`).
pub fn split_by_share(
    plan: &PartitionPlan,
    enc_share: f64,
    local_share: f64,
) -> Result<ContractSplit, DataError> {
    for share in [enc_share, local_share] {
        if !share.is_finite() || !(0.0..=1.0).contains(&share) {
            return Err(DataError::BadShare { value: share });
        }
    }
    let mut encrypted_counts = Vec::with_capacity(plan.user_count());
    let mut local_counts = Vec::with_capacity(plan.user_count());
    let mut warnings = Vec::new();
    for n in 0..plan.user_count() {
        let block = plan.block_len(n);
        let enc = (enc_share * block as f64).floor() as usize;
        let local = (local_share * block as f64).floor() as usize;
        let (enc, local) = clamp_counts(n, enc, local, block, &mut warnings);
        encrypted_counts.push(enc);
        local_counts.push(local);
    }
    Ok(ContractSplit {
        encrypted_counts,
        local_counts,
        warnings,
    })
}

/// The materialized training inputs: each user's local dataset and the
/// provider's pooled encrypted dataset (users concatenated in roster
/// order). Users with zero local samples get `None`.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub locals: Vec<Option<Dataset>>,
    pub encrypted_pool: Option<Dataset>,
    pub encrypted_counts: Vec<usize>,
    pub local_counts: Vec<usize>,
}

/// Cuts the actual matrices out of the parent dataset according to a
/// split: per block, the first `enc` rows feed the encrypted pool and
/// the next `local` rows stay with the user.
pub fn materialize_split(
    ds: &Dataset,
    plan: &PartitionPlan,
    split: &ContractSplit,
) -> Result<SplitData, DataError> {
    let mut locals = Vec::with_capacity(plan.user_count());
    let mut pool_indices: Vec<usize> = Vec::new();
    for n in 0..plan.user_count() {
        let block = plan.block(n);
        let enc = split.encrypted_counts[n];
        let local = split.local_counts[n];
        debug_assert!(enc + local <= block.len());
        pool_indices.extend_from_slice(&block[..enc]);
        if local > 0 {
            locals.push(Some(ds.gather(&block[enc..enc + local])));
        } else {
            locals.push(None);
        }
    }
    let encrypted_pool = if pool_indices.is_empty() {
        None
    } else {
        Some(ds.gather(&pool_indices))
    };
    Ok(SplitData {
        locals,
        encrypted_pool,
        encrypted_counts: split.encrypted_counts.clone(),
        local_counts: split.local_counts.clone(),
    })
}

// ---------------------------------------------------------------------------
// CSV codec
// ---------------------------------------------------------------------------

/// Reads a dataset from CSV text. Columns whose header starts with
/// `label_` are labels; all other columns are features. Rows containing
/// non-numeric or non-finite cells make the whole load fail, with every
/// offending row index reported.
pub fn load_csv_reader<R: Read>(reader: R) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut feature_cols = Vec::new();
    let mut label_cols = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        if name.starts_with("label_") {
            label_cols.push(idx);
        } else {
            feature_cols.push(idx);
        }
    }
    if label_cols.is_empty() {
        return Err(DataError::NoLabelColumns);
    }
    if feature_cols.is_empty() {
        return Err(DataError::NoFeatureColumns);
    }

    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut bad_rows: Vec<usize> = Vec::new();
    let mut rows = 0usize;
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let mut row_bad = false;
        let parse = |col: usize| -> Result<f64, DataError> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|e| DataError::BadCell {
                row: row_idx,
                column: headers.get(col).unwrap_or("?").to_string(),
                reason: e.to_string(),
            })
        };
        let mut frow = Vec::with_capacity(feature_cols.len());
        let mut lrow = Vec::with_capacity(label_cols.len());
        for &col in &feature_cols {
            let v = parse(col)?;
            row_bad |= !v.is_finite();
            frow.push(v);
        }
        for &col in &label_cols {
            let v = parse(col)?;
            row_bad |= !v.is_finite();
            lrow.push(v);
        }
        if row_bad {
            bad_rows.push(row_idx);
        }
        features.extend_from_slice(&frow);
        labels.extend_from_slice(&lrow);
        rows += 1;
    }
    if rows == 0 {
        return Err(DataError::NoRows);
    }
    if !bad_rows.is_empty() {
        return Err(DataError::NonFiniteRows { rows: bad_rows });
    }
    let features = Array2::from_shape_vec((rows, feature_cols.len()), features)
        .expect("row-major construction");
    let labels =
        Array2::from_shape_vec((rows, label_cols.len()), labels).expect("row-major construction");
    Dataset::new(features, labels)
}

/// Reads a dataset from a CSV file.
pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    load_csv_reader(std::fs::File::open(path)?)
}

/// Writes a dataset as CSV with headers `f0..f{d-1}, label_0..`.
pub fn write_csv_writer<W: Write>(ds: &Dataset, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..ds.feature_dim()).map(|i| format!("f{i}")).collect();
    header.extend((0..ds.label_dim()).map(|i| format!("label_{i}")));
    wtr.write_record(&header)?;
    for r in 0..ds.n_samples() {
        let mut row: Vec<String> = Vec::with_capacity(ds.feature_dim() + ds.label_dim());
        for v in ds.features.row(r).iter() {
            row.push(format!("{v:?}"));
        }
        for v in ds.labels.row(r).iter() {
            row.push(format!("{v:?}"));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a dataset to a CSV file.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    write_csv_writer(ds, std::fs::File::create(path)?)
}
