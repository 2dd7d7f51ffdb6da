//! Simulator for a contract-driven federated-learning data marketplace:
//!
//! - `market` — utility arithmetic for one provider buying encrypted and
//!   local training data from mobile users under menu contracts.
//! - `selection` — scoring and top-N selection of candidate users.
//! - `contract` — the provider's acceptance allocation, each user's
//!   best-response menu search, the multi-user equilibrium iteration,
//!   reference comparators, and feasibility verifiers.
//! - `he` — an explicitly insecure fixed-point cipher simulation with
//!   exact homomorphic add/sub/mul semantics and matrix helpers.
//! - `data` — synthetic regression tasks, non-IID partitioning, and
//!   contract-driven dataset splits.
//! - `fl` — straggler-aware federated training over plain or encrypted
//!   aggregation, plus the convergence-bound calculator.
//! - `scenario` — end-to-end experiment orchestration: config parsing,
//!   arm execution, artifact bundles, and comparisons.
//!
//! Everything is deterministic given explicit seeds: same inputs, same
//! bytes out.

pub mod contract;
pub mod data;
pub mod fl;
pub mod he;
pub mod market;
pub mod scenario;
pub mod selection;

pub use contract::{
    ContractError, EquilibriumResult, MarketInstance, SolverConfig, UtilityTraceRow,
};
pub use market::{
    ContractBook, EtaAllocation, MapTypeProfile, MarketError, MuContract, MuProfile,
    PricingParams,
};
pub use scenario::{
    compare_arms, load_bundle, run_scenario, Arm, Comparison, ScenarioBundle, ScenarioConfig,
    ScenarioError,
};
