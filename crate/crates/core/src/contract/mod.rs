//! Contract design and equilibrium search for the data marketplace.
//!
//! The game: users simultaneously post menus (one encrypted bundle per
//! provider type, plus a local bundle), the provider picks the menu row
//! matching its private type and chooses per-user acceptance fractions.
//! Under linear pricing the provider's row preference depends only on
//! each row's total accepted encrypted quantity, which is what makes the
//! screening constraints tractable.
//!
//! * [`eta`] — the provider's acceptance problem, solved exactly by a
//!   cheapest-first water-filling greedy.
//! * [`feasibility`] — verification of the full constraint set on a
//!   finished book: participation (IR), truthful type reporting (IC,
//!   every ordered type pair), offer monotonicity, per-type capacity and
//!   per-user data-stock limits.
//! * [`best_response`] — one user's optimal menu against fixed rivals
//!   and fixed acceptance fractions: a dynamic program over a quantity
//!   grid whose transitions enforce monotonicity and both adjacent
//!   screening chains.
//! * [`equilibrium`] — Gauss–Seidel sweeps of best responses with the
//!   acceptance fractions re-solved each sweep, from a proportional
//!   starting book.
//! * [`comparators`] — the proportional baseline and the
//!   known-type (information-symmetric) benchmark.

pub mod best_response;
pub mod comparators;
pub mod equilibrium;
pub mod eta;
pub mod feasibility;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{
    ContractBook, EtaAllocation, MapTypeProfile, MarketError, MuProfile, PricingParams,
};

/// Error raised by the contract solvers.
#[derive(Debug, Error)]
pub enum ContractError {
    #[error(transparent)]
    Market(#[from] MarketError),

    #[error("invalid solver configuration: {0}")]
    BadConfig(String),

    #[error("instance has {mus} users but the book covers {book}")]
    RosterMismatch { mus: usize, book: usize },
}

/// Borrowed view of one market instance: the users, the provider's type
/// model, and the pricing constants.
#[derive(Debug, Clone, Copy)]
pub struct MarketInstance<'a> {
    pub mus: &'a [MuProfile],
    pub map: &'a MapTypeProfile,
    pub pricing: &'a PricingParams,
}

impl<'a> MarketInstance<'a> {
    /// Bundles the references after validating every component.
    pub fn new(
        mus: &'a [MuProfile],
        map: &'a MapTypeProfile,
        pricing: &'a PricingParams,
    ) -> Result<Self, ContractError> {
        if mus.is_empty() {
            return Err(MarketError::EmptyBook.into());
        }
        for mu in mus {
            mu.validate()?;
        }
        pricing.validate()?;
        Ok(Self { mus, map, pricing })
    }

    /// Number of users.
    pub fn mu_count(&self) -> usize {
        self.mus.len()
    }

    /// Number of provider types.
    pub fn type_count(&self) -> usize {
        self.map.type_count()
    }

    /// The provider's all-in unit cost of an accepted encrypted sample
    /// under linear pricing: unit price plus training energy.
    pub fn unit_enc_cost(&self) -> f64 {
        self.pricing.alpha_enc + self.pricing.map_energy_per_sample()
    }

    fn check_book(&self, book: &ContractBook) -> Result<(), ContractError> {
        if book.mu_count() != self.mus.len() {
            return Err(ContractError::RosterMismatch {
                mus: self.mus.len(),
                book: book.mu_count(),
            });
        }
        if book.type_count() != self.map.type_count() {
            return Err(MarketError::TypeOutOfRange {
                index: book.type_count(),
                count: self.map.type_count(),
            }
            .into());
        }
        Ok(())
    }
}

/// Knobs of the equilibrium search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Quantity-grid step (samples, at least one) for menu search.
    pub grid_step: f64,
    /// Minimum expected-utility improvement for a user to switch menus.
    pub sigma: f64,
    /// Sweep budget before the search reports non-convergence.
    pub max_iters: usize,
    /// When set, exact value ties among menu candidates are broken by a
    /// seeded draw instead of the smallest-offer rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_step: 100.0,
            sigma: 1e-6,
            max_iters: 60,
            seed: None,
        }
    }
}

impl SolverConfig {
    pub(crate) fn validate(&self) -> Result<(), ContractError> {
        if !(self.grid_step.is_finite() && self.grid_step >= 1.0) {
            return Err(ContractError::BadConfig(format!(
                "grid_step must be at least 1 sample (got {})",
                self.grid_step
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(ContractError::BadConfig(format!(
                "sigma must be positive (got {})",
                self.sigma
            )));
        }
        if self.max_iters == 0 {
            return Err(ContractError::BadConfig(
                "max_iters must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One user's expected utility at the end of one sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityTraceRow {
    pub sweep: usize,
    pub mu_index: usize,
    pub expected_utility: f64,
}

/// A finished equilibrium search.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumResult {
    pub book: ContractBook,
    pub eta: EtaAllocation,
    /// Sweeps actually executed.
    pub iterations: usize,
    /// True when a full sweep changed no menu and moved no user's
    /// expected utility by more than `sigma`.
    pub converged: bool,
    /// Per-sweep, per-user expected utilities, in execution order.
    pub utility_trace: Vec<UtilityTraceRow>,
}

/// Absolute tie window for menu values: candidates closer than this are
/// equal, and the smaller offered quantity wins.
pub(crate) const VALUE_TIE_EPS: f64 = 1e-12;

/// Lexicographic "better" on (value, total offered quantity): strictly
/// higher value wins; within the tie window the smaller total wins.
pub(crate) fn better_offer(
    value: f64,
    total: f64,
    best_value: f64,
    best_total: f64,
) -> bool {
    if value > best_value + VALUE_TIE_EPS {
        return true;
    }
    if value < best_value - VALUE_TIE_EPS {
        return false;
    }
    total + 1e-9 < best_total
}
