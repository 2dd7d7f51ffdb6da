//! Economic primitives of the encrypted-data training marketplace.
//!
//! One *provider* (the MAP — the party that trains a model) buys training
//! data from many *mobile users* (MUs). Each user offers a menu of
//! encrypted-dataset sizes, one entry per provider *type*, plus a local
//! (plaintext, trained on the user's own device) dataset size. The
//! provider's type captures how much encrypted data it can afford to train
//! and how much it values the result; users never observe the realized
//! type, only its distribution.
//!
//! This module holds the shared vocabulary — profiles, pricing constants,
//! contract books, the provider's per-user acceptance fractions (η) — and
//! the pure utility arithmetic built on top:
//!
//! * users are paid per offered sample (linear pricing),
//! * users pay a privacy toll that grows logarithmically with the
//!   encrypted data they actually hand over,
//! * the provider's training gains grow with the square root of the data
//!   it trains on, and it pays energy per encrypted sample,
//! * social welfare is the realized sum of both sides.
//!
//! Everything here is deterministic and allocation-free after
//! construction; solvers and simulators live in sibling modules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slack applied to boolean feasibility checks on money-scale
/// quantities (utilities, payments). Values this close to a constraint
/// boundary count as satisfying it.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Error raised by constructors and utility evaluations in this module.
#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("parameter `{name}` must be finite and positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },

    #[error("parameter `{name}` must be finite and non-negative (got {value})")]
    Negative { name: &'static str, value: f64 },

    #[error("`{left}` has {left_len} entries but `{right}` has {right_len}")]
    LengthMismatch {
        left: &'static str,
        left_len: usize,
        right: &'static str,
        right_len: usize,
    },

    #[error("provider type index {index} out of range ({count} types)")]
    TypeOutOfRange { index: usize, count: usize },

    #[error("user index {index} out of range ({count} users)")]
    MuOutOfRange { index: usize, count: usize },

    #[error("provider types must be finite, positive and strictly increasing (violated at position {index})")]
    UnsortedTypes { index: usize },

    #[error("type distribution must be non-negative and sum to 1 (sum = {sum})")]
    BadDistribution { sum: f64 },

    #[error("acceptance fraction {value} at (type {type_index}, user {mu_index}) is outside [0, 1]")]
    EtaOutOfRange {
        value: f64,
        type_index: usize,
        mu_index: usize,
    },

    #[error("profile for user {id} is invalid: {reason}")]
    BadProfile { id: usize, reason: &'static str },

    #[error("contract book is empty (no users)")]
    EmptyBook,
}

fn ensure_positive(name: &'static str, value: f64) -> Result<(), MarketError> {
    if !value.is_finite() || value <= 0.0 {
        return Err(MarketError::NonPositive { name, value });
    }
    Ok(())
}

fn ensure_non_negative(name: &'static str, value: f64) -> Result<(), MarketError> {
    if !value.is_finite() || value < 0.0 {
        return Err(MarketError::Negative { name, value });
    }
    Ok(())
}

fn ensure_same_len(
    left: &'static str,
    left_len: usize,
    right: &'static str,
    right_len: usize,
) -> Result<(), MarketError> {
    if left_len != right_len {
        return Err(MarketError::LengthMismatch {
            left,
            left_len,
            right,
            right_len,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Profiles and pricing
// ---------------------------------------------------------------------------

/// The provider's private-type model: the ascending type values, their
/// probability distribution as seen by the users, and the encrypted-data
/// capacity each type can afford to train.
///
/// Capacities scale linearly with the type value: type `i` trains at most
/// `types[i] / types.last() * d_max_enc` encrypted samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapTypeProfile {
    types: Vec<f64>,
    dist: Vec<f64>,
    d_max_enc: f64,
    caps: Vec<f64>,
}

impl MapTypeProfile {
    /// Builds a profile from type values, their distribution, and the
    /// top type's encrypted-data capacity.
    pub fn new(types: Vec<f64>, dist: Vec<f64>, d_max_enc: f64) -> Result<Self, MarketError> {
        if types.is_empty() {
            return Err(MarketError::UnsortedTypes { index: 0 });
        }
        let mut prev = 0.0;
        for (idx, &t) in types.iter().enumerate() {
            if !t.is_finite() || t <= prev {
                return Err(MarketError::UnsortedTypes { index: idx });
            }
            prev = t;
        }
        ensure_same_len("types", types.len(), "dist", dist.len())?;
        let sum: f64 = dist.iter().sum();
        if dist.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(MarketError::BadDistribution { sum });
        }
        ensure_positive("d_max_enc", d_max_enc)?;
        let top = *types.last().expect("non-empty");
        let caps = types.iter().map(|t| t / top * d_max_enc).collect();
        Ok(Self {
            types,
            dist,
            d_max_enc,
            caps,
        })
    }

    /// Convenience constructor: uniform distribution over the given types.
    pub fn uniform(types: Vec<f64>, d_max_enc: f64) -> Result<Self, MarketError> {
        let n = types.len();
        if n == 0 {
            return Err(MarketError::UnsortedTypes { index: 0 });
        }
        MapTypeProfile::new(types, vec![1.0 / n as f64; n], d_max_enc)
    }

    /// Number of provider types.
    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    /// Type value π for type `i`.
    pub fn type_value(&self, i: usize) -> f64 {
        self.types[i]
    }

    /// Probability the users assign to type `i`.
    pub fn prob(&self, i: usize) -> f64 {
        self.dist[i]
    }

    /// Encrypted-data capacity (samples) of type `i`.
    pub fn enc_cap(&self, i: usize) -> f64 {
        self.caps[i]
    }

    /// Top type's encrypted-data capacity.
    pub fn d_max_enc(&self) -> f64 {
        self.d_max_enc
    }

    /// All type values, ascending.
    pub fn types(&self) -> &[f64] {
        &self.types
    }

    /// Validates a type index.
    pub fn check_type(&self, i: usize) -> Result<(), MarketError> {
        if i >= self.types.len() {
            return Err(MarketError::TypeOutOfRange {
                index: i,
                count: self.types.len(),
            });
        }
        Ok(())
    }
}

/// One mobile user: data endowment, device constants, and privacy posture.
///
/// * `d_total` — samples the user owns; encrypted + local offers can never
///   exceed this.
/// * `d_local_cap` — the most data the user is willing to train locally.
/// * `eps_priv` — privacy-protection level in (0, 1]; scales the privacy
///   toll per encrypted sample actually handed over.
/// * `a_fn` — sensitivity normalizer of the user's data; larger values
///   damp the privacy toll.
/// * `zeta`, `cycles_per_sample`, `freq` — local-training energy model:
///   energy per sample is `zeta * cycles_per_sample * freq^2`.
/// * `rate` — uplink rate (bit/s), used by the participant selector.
/// * `compute` — abstract device-capability score, used by the selector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MuProfile {
    pub id: usize,
    pub d_total: f64,
    pub d_local_cap: f64,
    pub eps_priv: f64,
    pub a_fn: f64,
    pub zeta: f64,
    pub cycles_per_sample: f64,
    pub freq: f64,
    pub rate: f64,
    pub compute: f64,
}

impl MuProfile {
    /// Checks every field for the documented ranges.
    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |reason| MarketError::BadProfile {
            id: self.id,
            reason,
        };
        if !self.d_total.is_finite() || self.d_total <= 0.0 {
            return Err(bad("d_total must be positive"));
        }
        if !self.d_local_cap.is_finite()
            || self.d_local_cap < 0.0
            || self.d_local_cap > self.d_total
        {
            return Err(bad("d_local_cap must lie in [0, d_total]"));
        }
        if !self.eps_priv.is_finite() || self.eps_priv <= 0.0 || self.eps_priv > 1.0 {
            return Err(bad("eps_priv must lie in (0, 1]"));
        }
        if !self.a_fn.is_finite() || self.a_fn <= 0.0 {
            return Err(bad("a_fn must be positive"));
        }
        if !self.zeta.is_finite() || self.zeta < 0.0 {
            return Err(bad("zeta must be non-negative"));
        }
        if !self.cycles_per_sample.is_finite() || self.cycles_per_sample < 0.0 {
            return Err(bad("cycles_per_sample must be non-negative"));
        }
        if !self.freq.is_finite() || self.freq < 0.0 {
            return Err(bad("freq must be non-negative"));
        }
        if !self.rate.is_finite() || self.rate <= 0.0 {
            return Err(bad("rate must be positive"));
        }
        if !self.compute.is_finite() || self.compute <= 0.0 {
            return Err(bad("compute must be positive"));
        }
        Ok(())
    }

    /// Local-training energy cost per sample: ζ·c·f².
    pub fn energy_per_sample(&self) -> f64 {
        self.zeta * self.cycles_per_sample * self.freq * self.freq
    }
}

/// Market-wide pricing and valuation constants.
///
/// * `alpha_enc`, `alpha_local` — linear unit prices: an offer of `D`
///   samples is paid `alpha * D`.
/// * `upsilon_enc`, `upsilon_local` — the provider's gain coefficients on
///   the square-root training curves for encrypted and local data.
/// * `beta_priv` — global scale of the users' privacy toll.
/// * `gamma_tx` — the users' transmission cost per encrypted sample
///   actually uploaded.
/// * `map_zeta`, `map_cycles_per_sample`, `map_freq` — the provider's
///   energy model for training encrypted samples (one set of constants
///   shared by all types).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PricingParams {
    pub alpha_enc: f64,
    pub alpha_local: f64,
    pub upsilon_enc: f64,
    pub upsilon_local: f64,
    pub beta_priv: f64,
    pub gamma_tx: f64,
    pub map_zeta: f64,
    pub map_cycles_per_sample: f64,
    pub map_freq: f64,
}

impl Default for PricingParams {
    fn default() -> Self {
        Self::default_market()
    }
}

impl PricingParams {
    /// The default market constants used throughout the simulator:
    /// unit prices 0.001 (encrypted) and 0.005 (local), gain coefficients
    /// 0.125 and 3, privacy scale 1, transmission cost 1e-4 per sample,
    /// and a provider an order of magnitude faster per sample than the
    /// default user device.
    pub fn default_market() -> Self {
        Self {
            alpha_enc: 0.001,
            alpha_local: 0.005,
            upsilon_enc: 0.125,
            upsilon_local: 3.0,
            beta_priv: 1.0,
            gamma_tx: 1e-4,
            map_zeta: 0.5e-26,
            map_cycles_per_sample: 4488.0,
            map_freq: 3e9,
        }
    }

    /// Checks every constant for the documented ranges.
    pub fn validate(&self) -> Result<(), MarketError> {
        ensure_positive("alpha_enc", self.alpha_enc)?;
        ensure_positive("alpha_local", self.alpha_local)?;
        ensure_positive("upsilon_enc", self.upsilon_enc)?;
        ensure_positive("upsilon_local", self.upsilon_local)?;
        ensure_positive("beta_priv", self.beta_priv)?;
        ensure_non_negative("gamma_tx", self.gamma_tx)?;
        ensure_non_negative("map_zeta", self.map_zeta)?;
        ensure_non_negative("map_cycles_per_sample", self.map_cycles_per_sample)?;
        ensure_non_negative("map_freq", self.map_freq)?;
        Ok(())
    }

    /// Provider-side energy cost per encrypted sample trained: ζ·c·f².
    pub fn map_energy_per_sample(&self) -> f64 {
        self.map_zeta * self.map_cycles_per_sample * self.map_freq * self.map_freq
    }
}

// ---------------------------------------------------------------------------
// Contracts and acceptance fractions
// ---------------------------------------------------------------------------

/// One user's offer: a local bundle plus one encrypted bundle per
/// provider type. Sizes are in samples, payments in money units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuContract {
    pub d_local: f64,
    pub pay_local: f64,
    /// Encrypted sizes offered to each type, index-aligned with the
    /// provider's type list.
    pub d_enc: Vec<f64>,
    /// Payment requested from each type for the full encrypted bundle.
    pub pay_enc: Vec<f64>,
}

impl MuContract {
    /// Builds a contract under linear pricing: `pay = alpha * size`.
    pub fn linear(d_local: f64, d_enc: Vec<f64>, pricing: &PricingParams) -> Self {
        let pay_enc = d_enc.iter().map(|d| pricing.alpha_enc * d).collect();
        Self {
            d_local,
            pay_local: pricing.alpha_local * d_local,
            d_enc,
            pay_enc,
        }
    }

    fn validate(&self, type_count: usize) -> Result<(), MarketError> {
        ensure_non_negative("d_local", self.d_local)?;
        ensure_non_negative("pay_local", self.pay_local)?;
        ensure_same_len("d_enc", self.d_enc.len(), "types", type_count)?;
        ensure_same_len("pay_enc", self.pay_enc.len(), "types", type_count)?;
        for &d in &self.d_enc {
            ensure_non_negative("d_enc", d)?;
        }
        for &p in &self.pay_enc {
            ensure_non_negative("pay_enc", p)?;
        }
        Ok(())
    }
}

/// The full set of offers on the table: one [`MuContract`] per user,
/// indexed by the user's position in the roster (not by `MuProfile::id`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractBook {
    type_count: usize,
    entries: Vec<MuContract>,
}

impl ContractBook {
    /// Assembles and validates a book from per-user contracts.
    pub fn new(type_count: usize, entries: Vec<MuContract>) -> Result<Self, MarketError> {
        if entries.is_empty() {
            return Err(MarketError::EmptyBook);
        }
        for entry in &entries {
            entry.validate(type_count)?;
        }
        Ok(Self {
            type_count,
            entries,
        })
    }

    /// Builds a book under linear pricing from raw sizes. `d_enc[n][i]`
    /// is user `n`'s encrypted offer to type `i`.
    pub fn linear(
        type_count: usize,
        d_locals: &[f64],
        d_enc: &[Vec<f64>],
        pricing: &PricingParams,
    ) -> Result<Self, MarketError> {
        ensure_same_len("d_locals", d_locals.len(), "d_enc", d_enc.len())?;
        let entries = d_locals
            .iter()
            .zip(d_enc)
            .map(|(&dl, row)| MuContract::linear(dl, row.clone(), pricing))
            .collect();
        ContractBook::new(type_count, entries)
    }

    /// Number of users with offers in the book.
    pub fn mu_count(&self) -> usize {
        self.entries.len()
    }

    /// Number of provider types each offer menu covers.
    pub fn type_count(&self) -> usize {
        self.type_count
    }

    /// User `n`'s contract.
    pub fn contract(&self, n: usize) -> &MuContract {
        &self.entries[n]
    }

    /// Replaces user `n`'s contract (used by the best-response sweep).
    pub fn set_contract(&mut self, n: usize, contract: MuContract) -> Result<(), MarketError> {
        contract.validate(self.type_count)?;
        if n >= self.entries.len() {
            return Err(MarketError::MuOutOfRange {
                index: n,
                count: self.entries.len(),
            });
        }
        self.entries[n] = contract;
        Ok(())
    }

    /// All contracts in roster order.
    pub fn contracts(&self) -> &[MuContract] {
        &self.entries
    }

    /// Validates a user index.
    pub fn check_mu(&self, n: usize) -> Result<(), MarketError> {
        if n >= self.entries.len() {
            return Err(MarketError::MuOutOfRange {
                index: n,
                count: self.entries.len(),
            });
        }
        Ok(())
    }
}

/// The provider's acceptance fractions: `eta(i, n)` is the fraction of
/// user `n`'s encrypted offer that type `i` actually trains on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaAllocation {
    rows: Vec<Vec<f64>>,
}

impl EtaAllocation {
    /// Validates and wraps a type-by-user fraction matrix.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, MarketError> {
        let width = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            ensure_same_len("eta row", row.len(), "first row", width)?;
            for (n, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(MarketError::EtaOutOfRange {
                        value: v,
                        type_index: i,
                        mu_index: n,
                    });
                }
            }
        }
        Ok(Self { rows })
    }

    /// An all-zero allocation of the given shape.
    pub fn zeros(type_count: usize, mu_count: usize) -> Self {
        Self {
            rows: vec![vec![0.0; mu_count]; type_count],
        }
    }

    /// Fraction accepted from user `n` when the provider is type `i`.
    pub fn eta(&self, i: usize, n: usize) -> f64 {
        self.rows[i][n]
    }

    /// Row of fractions for type `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Replaces the row for type `i`.
    pub fn set_row(&mut self, i: usize, row: Vec<f64>) {
        self.rows[i] = row;
    }

    /// Number of type rows.
    pub fn type_count(&self) -> usize {
        self.rows.len()
    }
}

// ---------------------------------------------------------------------------
// Utility arithmetic
// ---------------------------------------------------------------------------

/// Privacy toll a user pays for handing over `d_enc_actual` encrypted
/// samples: `(beta / 2) * log2(1 + eps * d / a_fn^2)`.
///
/// Zero data costs exactly zero; the toll grows logarithmically, strictly
/// monotonically in `d`.
pub fn privacy_cost(
    eps: f64,
    d_enc_actual: f64,
    a_fn: f64,
    beta: f64,
) -> Result<f64, MarketError> {
    if !eps.is_finite() || eps <= 0.0 || eps > 1.0 {
        return Err(MarketError::NonPositive {
            name: "eps",
            value: eps,
        });
    }
    ensure_non_negative("d_enc_actual", d_enc_actual)?;
    ensure_positive("a_fn", a_fn)?;
    ensure_positive("beta", beta)?;
    Ok(beta / 2.0 * (1.0 + eps * d_enc_actual / (a_fn * a_fn)).log2())
}

/// The provider's raw training gain from encrypted data:
/// `upsilon_enc * sqrt(sum_n eta[n] * d_enc[n])`. The type value
/// multiplies this gain externally (see [`map_utility`]).
pub fn gain_encrypted(
    eta_row: &[f64],
    d_enc_row: &[f64],
    upsilon_enc: f64,
) -> Result<f64, MarketError> {
    ensure_same_len("eta_row", eta_row.len(), "d_enc_row", d_enc_row.len())?;
    ensure_positive("upsilon_enc", upsilon_enc)?;
    let mut total = 0.0;
    for (&e, &d) in eta_row.iter().zip(d_enc_row) {
        ensure_non_negative("d_enc", d)?;
        total += e * d;
    }
    Ok(upsilon_enc * total.sqrt())
}

/// The provider's training gain from the users' local datasets:
/// `upsilon_local * sqrt(sum_n d_local[n])`.
pub fn gain_local(d_local: &[f64], upsilon_local: f64) -> Result<f64, MarketError> {
    ensure_positive("upsilon_local", upsilon_local)?;
    let mut total = 0.0;
    for &d in d_local {
        ensure_non_negative("d_local", d)?;
        total += d;
    }
    Ok(upsilon_local * total.sqrt())
}

/// The provider's cost of the encrypted side: payments for the accepted
/// fractions plus training energy, `sum_n eta[n] * pay_enc[n] +
/// e_map * sum_n eta[n] * d_enc[n]` with `e_map` the provider's energy
/// per sample.
pub fn cost_encrypted(
    eta_row: &[f64],
    pay_enc_row: &[f64],
    d_enc_row: &[f64],
    pricing: &PricingParams,
) -> Result<f64, MarketError> {
    ensure_same_len("eta_row", eta_row.len(), "pay_enc_row", pay_enc_row.len())?;
    ensure_same_len("eta_row", eta_row.len(), "d_enc_row", d_enc_row.len())?;
    let e_map = pricing.map_energy_per_sample();
    let mut cost = 0.0;
    for ((&e, &p), &d) in eta_row.iter().zip(pay_enc_row).zip(d_enc_row) {
        ensure_non_negative("pay_enc", p)?;
        ensure_non_negative("d_enc", d)?;
        cost += e * p + e_map * e * d;
    }
    Ok(cost)
}

/// The provider's cost of the local side: the sum of local payments.
pub fn cost_local(pay_local: &[f64]) -> Result<f64, MarketError> {
    let mut cost = 0.0;
    for &p in pay_local {
        ensure_non_negative("pay_local", p)?;
        cost += p;
    }
    Ok(cost)
}

/// Collects per-type rows (sizes and payments) out of a book.
fn enc_rows(book: &ContractBook, i: usize) -> (Vec<f64>, Vec<f64>) {
    let d: Vec<f64> = book.contracts().iter().map(|c| c.d_enc[i]).collect();
    let p: Vec<f64> = book.contracts().iter().map(|c| c.pay_enc[i]).collect();
    (d, p)
}

/// The provider's utility when its realized type is `i`:
/// `pi_i * G_enc - C_enc + G_local - C_local`.
pub fn map_utility(
    i: usize,
    eta: &EtaAllocation,
    book: &ContractBook,
    map: &MapTypeProfile,
    pricing: &PricingParams,
) -> Result<f64, MarketError> {
    map.check_type(i)?;
    let (d_row, p_row) = enc_rows(book, i);
    let eta_row = eta.row(i);
    let g_enc = gain_encrypted(eta_row, &d_row, pricing.upsilon_enc)?;
    let c_enc = cost_encrypted(eta_row, &p_row, &d_row, pricing)?;
    let d_local: Vec<f64> = book.contracts().iter().map(|c| c.d_local).collect();
    let p_local: Vec<f64> = book.contracts().iter().map(|c| c.pay_local).collect();
    let g_local = gain_local(&d_local, pricing.upsilon_local)?;
    let c_local = cost_local(&p_local)?;
    Ok(map.type_value(i) * g_enc - c_enc + g_local - c_local)
}

/// The encrypted-side part of the provider's utility at type value `pi`,
/// evaluated on the bundle (η row, sizes, payments) of some menu entry.
/// This is the quantity truthful-reporting checks compare across menu
/// entries: the local bundle does not vary with the reported type.
pub fn map_enc_utility(
    pi: f64,
    eta_row: &[f64],
    d_enc_row: &[f64],
    pay_enc_row: &[f64],
    pricing: &PricingParams,
) -> Result<f64, MarketError> {
    let g = gain_encrypted(eta_row, d_enc_row, pricing.upsilon_enc)?;
    let c = cost_encrypted(eta_row, pay_enc_row, d_enc_row, pricing)?;
    Ok(pi * g - c)
}

/// One user's realized utility when the provider's type is `i`:
/// received encrypted payment, minus privacy toll and transmission cost on
/// the samples actually uploaded, plus the local payment net of local
/// training energy.
pub fn mu_realized_utility(
    i: usize,
    n: usize,
    book: &ContractBook,
    eta: &EtaAllocation,
    mus: &[MuProfile],
    map: &MapTypeProfile,
    pricing: &PricingParams,
) -> Result<f64, MarketError> {
    map.check_type(i)?;
    book.check_mu(n)?;
    ensure_same_len("mus", mus.len(), "book entries", book.mu_count())?;
    let c = book.contract(n);
    let mu = &mus[n];
    let e = eta.eta(i, n);
    let actual = e * c.d_enc[i];
    let toll = privacy_cost(mu.eps_priv, actual, mu.a_fn, pricing.beta_priv)?;
    let enc_part = e * c.pay_enc[i] - toll - pricing.gamma_tx * actual;
    let local_part = c.pay_local - mu.energy_per_sample() * c.d_local;
    Ok(enc_part + local_part)
}

/// One user's expected utility over the provider's type distribution.
pub fn mu_expected_utility(
    n: usize,
    book: &ContractBook,
    eta: &EtaAllocation,
    mus: &[MuProfile],
    map: &MapTypeProfile,
    pricing: &PricingParams,
) -> Result<f64, MarketError> {
    let mut expected = 0.0;
    for i in 0..map.type_count() {
        expected += map.prob(i) * mu_realized_utility(i, n, book, eta, mus, map, pricing)?;
    }
    Ok(expected)
}

/// Sum of all users' realized utilities at realized type `i`.
pub fn mu_total_actual_utility(
    i: usize,
    book: &ContractBook,
    eta: &EtaAllocation,
    mus: &[MuProfile],
    map: &MapTypeProfile,
    pricing: &PricingParams,
) -> Result<f64, MarketError> {
    let mut total = 0.0;
    for n in 0..book.mu_count() {
        total += mu_realized_utility(i, n, book, eta, mus, map, pricing)?;
    }
    Ok(total)
}

/// Social welfare at realized type `i`: the provider's utility plus the
/// sum of the users' realized utilities. Payments cancel internally; what
/// remains is gains minus energy, privacy and transmission costs.
pub fn social_welfare(
    i: usize,
    book: &ContractBook,
    eta: &EtaAllocation,
    mus: &[MuProfile],
    map: &MapTypeProfile,
    pricing: &PricingParams,
) -> Result<f64, MarketError> {
    let provider = map_utility(i, eta, book, map, pricing)?;
    let users = mu_total_actual_utility(i, book, eta, mus, map, pricing)?;
    Ok(provider + users)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A user profile with simple, hand-checkable device constants:
    /// energy per local sample = 1e-6 * 2 * 100^2 = 0.02.
    fn test_mu(id: usize, eps: f64) -> MuProfile {
        MuProfile {
            id,
            d_total: 2000.0,
            d_local_cap: 500.0,
            eps_priv: eps,
            a_fn: 10.0,
            zeta: 1e-6,
            cycles_per_sample: 2.0,
            freq: 100.0,
            rate: 1e6,
            compute: 1.0,
        }
    }

    /// Pricing with map energy per sample = 2e-5 * 1 * 1 = 2e-5.
    fn test_pricing() -> PricingParams {
        PricingParams {
            alpha_enc: 0.01,
            alpha_local: 0.02,
            upsilon_enc: 2.0,
            upsilon_local: 3.0,
            beta_priv: 1.0,
            gamma_tx: 0.001,
            map_zeta: 2e-5,
            map_cycles_per_sample: 1.0,
            map_freq: 1.0,
        }
    }

    #[test]
    fn privacy_cost_zero_data_is_zero() {
        assert_eq!(privacy_cost(0.5, 0.0, 10.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn privacy_cost_matches_frozen_value() {
        // beta=1, eps=0.5, a_fn=10, d=1e4 -> 0.5 * log2(51); frozen from a
        // 30-digit evaluation.
        let got = privacy_cost(0.5, 1.0e4, 10.0, 1.0).unwrap();
        assert!((got - 2.836_212_670_985_747_8).abs() < 1e-12, "got {got}");
        // Same toll at eps=1, d=5e3: the toll depends on eps*d only.
        let same = privacy_cost(1.0, 5.0e3, 10.0, 1.0).unwrap();
        assert!((got - same).abs() < 1e-12);
    }

    #[test]
    fn privacy_cost_is_monotone_in_data() {
        let mut prev = -1.0;
        for k in 0..50 {
            let d = 100.0 * k as f64;
            let v = privacy_cost(0.7, d, 5.0, 2.0).unwrap();
            assert!(v > prev || (k == 0 && v == 0.0));
            prev = v;
        }
    }

    #[test]
    fn privacy_cost_rejects_bad_eps() {
        assert!(privacy_cost(0.0, 1.0, 10.0, 1.0).is_err());
        assert!(privacy_cost(1.5, 1.0, 10.0, 1.0).is_err());
        assert!(privacy_cost(f64::NAN, 1.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn gains_match_square_root_curves() {
        // 1*400 + 0.5*900 = 850 accepted samples.
        let g = gain_encrypted(&[1.0, 0.5], &[400.0, 900.0], 2.0).unwrap();
        assert!((g - 58.309_518_948_453_004).abs() < 1e-12, "got {g}");
        let gl = gain_local(&[100.0, 225.0], 3.0).unwrap();
        assert!((gl - 54.083_269_131_959_839).abs() < 1e-12, "got {gl}");
    }

    #[test]
    fn zero_data_zero_gain_zero_cost() {
        assert_eq!(gain_encrypted(&[], &[], 1.0).unwrap(), 0.0);
        assert_eq!(gain_local(&[], 1.0).unwrap(), 0.0);
        assert_eq!(cost_local(&[]).unwrap(), 0.0);
        assert_eq!(
            cost_encrypted(&[], &[], &[], &test_pricing()).unwrap(),
            0.0
        );
    }

    fn hand_book() -> (ContractBook, EtaAllocation, MapTypeProfile) {
        let pricing = test_pricing();
        // Single type, pi = 1.5; two users.
        let map = MapTypeProfile::new(vec![1.5], vec![1.0], 1.0e4).unwrap();
        let book = ContractBook::linear(
            1,
            &[100.0, 225.0],
            &[vec![400.0], vec![900.0]],
            &pricing,
        )
        .unwrap();
        let eta = EtaAllocation::new(vec![vec![1.0, 0.5]]).unwrap();
        (book, eta, map)
    }

    #[test]
    fn map_utility_matches_frozen_hand_example() {
        let (book, eta, map) = hand_book();
        // pi*G_o - C_o + G_l - C_l with
        //   G_o = 2*sqrt(850), C_o = 8.5 + 2e-5*850, G_l = 3*sqrt(325), C_l = 6.5
        let got = map_utility(0, &eta, &book, &map, &test_pricing()).unwrap();
        assert!((got - 126.530_547_554_639_35).abs() < 1e-10, "got {got}");
    }

    #[test]
    fn map_utility_zero_on_empty_offers() {
        let pricing = test_pricing();
        let map = MapTypeProfile::new(vec![2.0], vec![1.0], 100.0).unwrap();
        let book = ContractBook::linear(1, &[0.0], &[vec![0.0]], &pricing).unwrap();
        let eta = EtaAllocation::zeros(1, 1);
        assert_eq!(map_utility(0, &eta, &book, &map, &pricing).unwrap(), 0.0);
    }

    #[test]
    fn mu_utilities_match_frozen_hand_example() {
        let (book, eta, map) = hand_book();
        let mus = vec![test_mu(0, 0.5), test_mu(1, 1.0)];
        let pricing = test_pricing();
        // User 0: 4 - 0.5*log2(3) - 0.4 + 2 - 2
        let u0 = mu_realized_utility(0, 0, &book, &eta, &mus, &map, &pricing).unwrap();
        assert!((u0 - 2.807_518_749_639_421_9).abs() < 1e-12, "got {u0}");
        // User 1: 4.5 - 0.5*log2(5.5) - 0.45 + 4.5 - 4.5
        let u1 = mu_realized_utility(0, 1, &book, &eta, &mus, &map, &pricing).unwrap();
        assert!((u1 - 2.820_284_190_681_351_4).abs() < 1e-12, "got {u1}");
        // Single type => expected == realized.
        let e0 = mu_expected_utility(0, &book, &eta, &mus, &map, &pricing).unwrap();
        assert!((e0 - u0).abs() < 1e-15);
        let total = mu_total_actual_utility(0, &book, &eta, &mus, &map, &pricing).unwrap();
        assert!((total - 5.627_802_940_320_773_3).abs() < 1e-12, "got {total}");
    }

    #[test]
    fn social_welfare_is_the_realized_sum() {
        let (book, eta, map) = hand_book();
        let mus = vec![test_mu(0, 0.5), test_mu(1, 1.0)];
        let pricing = test_pricing();
        let sw = social_welfare(0, &book, &eta, &mus, &map, &pricing).unwrap();
        assert!((sw - 132.158_350_494_960_12).abs() < 1e-10, "got {sw}");
        let parts = map_utility(0, &eta, &book, &map, &pricing).unwrap()
            + mu_total_actual_utility(0, &book, &eta, &mus, &map, &pricing).unwrap();
        assert!((sw - parts).abs() < 1e-12);
    }

    #[test]
    fn expected_utility_averages_over_types() {
        let pricing = test_pricing();
        let map = MapTypeProfile::new(vec![1.0, 2.0], vec![0.25, 0.75], 1.0e4).unwrap();
        let book =
            ContractBook::linear(2, &[100.0], &[vec![200.0, 800.0]], &pricing).unwrap();
        let eta = EtaAllocation::new(vec![vec![1.0], vec![0.5]]).unwrap();
        let mus = vec![test_mu(0, 0.5)];
        let u_low = mu_realized_utility(0, 0, &book, &eta, &mus, &map, &pricing).unwrap();
        let u_high = mu_realized_utility(1, 0, &book, &eta, &mus, &map, &pricing).unwrap();
        let expected = mu_expected_utility(0, &book, &eta, &mus, &map, &pricing).unwrap();
        assert!((expected - (0.25 * u_low + 0.75 * u_high)).abs() < 1e-12);
    }

    #[test]
    fn type_profile_validates_inputs() {
        assert!(MapTypeProfile::new(vec![], vec![], 1.0).is_err());
        assert!(MapTypeProfile::new(vec![1.0, 1.0], vec![0.5, 0.5], 1.0).is_err());
        assert!(MapTypeProfile::new(vec![2.0, 1.0], vec![0.5, 0.5], 1.0).is_err());
        assert!(MapTypeProfile::new(vec![1.0, 2.0], vec![0.5, 0.6], 1.0).is_err());
        assert!(MapTypeProfile::new(vec![1.0, 2.0], vec![0.5, 0.5], 0.0).is_err());
        let ok = MapTypeProfile::new(vec![1.0, 4.0], vec![0.5, 0.5], 100.0).unwrap();
        assert_eq!(ok.enc_cap(0), 25.0);
        assert_eq!(ok.enc_cap(1), 100.0);
    }

    #[test]
    fn profile_caps_scale_with_type_value() {
        let map = MapTypeProfile::uniform((1..=10).map(f64::from).collect(), 5.0e5).unwrap();
        assert_eq!(map.type_count(), 10);
        assert!((map.enc_cap(0) - 5.0e4).abs() < 1e-9);
        assert!((map.enc_cap(9) - 5.0e5).abs() < 1e-9);
        assert!((map.prob(3) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mu_profile_validation_catches_bad_fields() {
        let mut mu = test_mu(7, 0.5);
        assert!(mu.validate().is_ok());
        mu.d_local_cap = 3000.0; // exceeds d_total
        assert!(mu.validate().is_err());
        let mut mu = test_mu(7, 0.5);
        mu.eps_priv = 0.0;
        assert!(mu.validate().is_err());
        let mut mu = test_mu(7, 0.5);
        mu.rate = -1.0;
        assert!(mu.validate().is_err());
    }

    #[test]
    fn eta_allocation_rejects_out_of_range() {
        assert!(EtaAllocation::new(vec![vec![0.0, 1.0]]).is_ok());
        let err = EtaAllocation::new(vec![vec![0.5], vec![1.2]]).unwrap_err();
        assert!(matches!(err, MarketError::EtaOutOfRange { .. }));
        assert!(EtaAllocation::new(vec![vec![-0.1]]).is_err());
        assert!(EtaAllocation::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn book_index_checks_error_cleanly() {
        let (book, eta, map) = hand_book();
        let mus = vec![test_mu(0, 0.5), test_mu(1, 1.0)];
        let pricing = test_pricing();
        assert!(matches!(
            map_utility(3, &eta, &book, &map, &pricing),
            Err(MarketError::TypeOutOfRange { .. })
        ));
        assert!(matches!(
            mu_realized_utility(0, 9, &book, &eta, &mus, &map, &pricing),
            Err(MarketError::MuOutOfRange { .. })
        ));
    }

    #[test]
    fn linear_pricing_sets_payments() {
        let pricing = test_pricing();
        let c = MuContract::linear(50.0, vec![100.0, 300.0], &pricing);
        assert!((c.pay_local - 1.0).abs() < 1e-12);
        assert!((c.pay_enc[0] - 1.0).abs() < 1e-12);
        assert!((c.pay_enc[1] - 3.0).abs() < 1e-12);
    }
}
