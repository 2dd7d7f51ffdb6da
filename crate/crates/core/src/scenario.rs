//! Experiment orchestration: one configuration in, a directory of
//! deterministic artifacts out.
//!
//! - [`ScenarioConfig`] is the single source of experiment truth: a TOML
//!   tree with strict schema (unknown keys are rejected), defaults that
//!   match the reference market, and dotted-path overrides
//!   (`training.rounds=500`) that win over the file.
//! - [`run_scenario`] draws a candidate population, selects the roster,
//!   solves the contract game once per requested arm, trains the shared
//!   model on the realized data split, and writes traces, utility tables,
//!   an equilibrium record, and a seed+hash manifest — atomically, and
//!   byte-identically for identical `(config, seed)`.
//! - [`compare_arms`] reduces a bundle to the headline numbers: utility
//!   deltas over the proportional baseline, the welfare gap to the
//!   known-type solution, final-loss ratios against conventional
//!   federated training, and sweep counts.
//! - [`load_bundle`] reopens a bundle directory written earlier, so
//!   comparisons can run long after the scenario finished.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::comparators::{
    baseline_proportional, snap_book_to_grid, solve_info_symmetry,
};
use crate::contract::equilibrium::iterate_contracts;
use crate::contract::eta::solve_eta;
use crate::contract::feasibility::{verify_book, FeasibilityReport};
use crate::contract::{ContractError, MarketInstance, SolverConfig, UtilityTraceRow};
use crate::data::{
    materialize_split, partition_non_iid, synth_dataset, ContractSplit, DataError, Dataset,
    PartitionPlan,
};
use crate::fl::training::{
    run_training, write_trace_csv, OptimizerKind, StepSchedule, StragglerModel, TimingModel,
    TraceRow, TrainingConfig,
};
use crate::fl::FlError;
use crate::he::DEFAULT_SCALE;
use crate::market::{
    map_utility, mu_expected_utility, mu_realized_utility, social_welfare, ContractBook,
    EtaAllocation, MapTypeProfile, MarketError, MuProfile, PricingParams,
};
use crate::selection::{select_top_n, SelectionError, SelectionWeights};

/// Anything that can go wrong between a config file and a finished bundle.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario configuration: {0}")]
    BadConfig(String),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("config serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Market(#[from] MarketError),

    #[error(transparent)]
    Contract(#[from] ContractError),

    #[error(transparent)]
    Selection(#[from] SelectionError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Fl(#[from] FlError),

    #[error("artifact I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("artifact JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("artifact CSV error: {0}")]
    Csv(#[from] csv::Error),
}

// ---------------------------------------------------------------------------
// Arms
// ---------------------------------------------------------------------------

/// One entry of the comparison set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Full screening equilibrium (the subject under study).
    Proposed,
    /// Proportional-share offers, no optimization.
    Baseline,
    /// Menus solved with the provider's type known to everyone.
    InfoSymmetry,
    /// Conventional federated training: nothing encrypted, aggregation
    /// waits for a fixed number of reporting users.
    ConvFl,
}

impl Arm {
    /// All arms, in canonical execution order.
    pub const ALL: [Arm; 4] = [Arm::Proposed, Arm::Baseline, Arm::InfoSymmetry, Arm::ConvFl];

    /// The kebab-case name used in configs and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Arm::Proposed => "proposed",
            Arm::Baseline => "baseline",
            Arm::InfoSymmetry => "info-symmetry",
            Arm::ConvFl => "conv-fl",
        }
    }

    /// Filename-safe variant of [`Arm::name`].
    pub fn slug(self) -> &'static str {
        match self {
            Arm::Proposed => "proposed",
            Arm::Baseline => "baseline",
            Arm::InfoSymmetry => "info_symmetry",
            Arm::ConvFl => "conv_fl",
        }
    }

    /// Parses either the kebab-case or the filename form.
    pub fn from_name(name: &str) -> Option<Arm> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == name || a.slug() == name)
    }

    /// True when the arm produces a contract book.
    pub fn has_contract(self) -> bool {
        self != Arm::ConvFl
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Provider-type grid: `count` evenly spaced marginal-value types
/// `1, 2, …, count` with a uniform prior, sharing one capacity scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TypeSection {
    /// Number of provider types.
    pub count: usize,
    /// Encrypted-data capacity of the top type (lower types scale down).
    pub d_max_enc: f64,
}

impl Default for TypeSection {
    fn default() -> Self {
        Self {
            count: 10,
            d_max_enc: 5e5,
        }
    }
}

/// How the candidate population is synthesized. Data stocks vary
/// uniformly; device constants are common to the cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    /// Smallest candidate data stock (samples).
    pub d_total_min: f64,
    /// Largest candidate data stock (samples).
    pub d_total_max: f64,
    /// Local-training cap as a fraction of each candidate's stock.
    pub local_cap_share: f64,
    /// Per-user privacy level ε ∈ (0, 1].
    pub eps_priv: f64,
    /// Privacy-sensitivity constant of the toll curve.
    pub a_fn: f64,
    /// Effective capacitance of the user devices.
    pub zeta: f64,
    /// CPU cycles one local sample costs.
    pub cycles_per_sample: f64,
    /// User CPU frequency (Hz).
    pub freq: f64,
    /// Uplink rate (bits/s).
    pub rate: f64,
    /// Abstract compute score used by roster selection.
    pub compute: f64,
}

impl Default for PopulationSection {
    fn default() -> Self {
        Self {
            d_total_min: 8_000.0,
            d_total_max: 12_000.0,
            local_cap_share: 0.08,
            eps_priv: 1.0,
            a_fn: 10.0,
            zeta: 0.5e-26,
            cycles_per_sample: 44_880.0,
            freq: 2e9,
            rate: 293e6,
            compute: 1.0,
        }
    }
}

/// Knobs of the shared training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    /// Rounds per arm.
    pub rounds: usize,
    /// Per-round straggling probability for contract arms.
    pub straggle_p: f64,
    /// Fixed-point scale for every ciphertext.
    pub scale: u64,
    /// Reporting-user count the conventional arm waits for; derived from
    /// `straggle_p` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_participants: Option<usize>,
    /// Update rule.
    pub optimizer: OptimizerKind,
    /// Step-size schedule.
    pub step: StepSchedule,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            rounds: 300,
            straggle_p: 0.2,
            scale: DEFAULT_SCALE,
            fixed_participants: None,
            optimizer: OptimizerKind::Sgd,
            step: StepSchedule::Constant { value: 0.1 },
        }
    }
}

/// The synthetic regression task every arm trains on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    /// Total samples in the task dataset.
    pub n_samples: usize,
    /// Feature dimension.
    pub feature_dim: usize,
    /// Label dimension.
    pub label_dim: usize,
    /// Label noise σ.
    pub noise_sigma: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            n_samples: 5_000,
            feature_dim: 8,
            label_dim: 1,
            noise_sigma: 0.1,
        }
    }
}

/// Everything one experiment needs, serializable as a single TOML tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Master seed for population synthesis, straggler draws, and keys.
    pub seed: u64,
    /// The provider type that actually materializes (index).
    pub realized_type: usize,
    /// Size of the candidate population.
    pub candidates: usize,
    /// Roster size after selection.
    pub selected: usize,
    /// Comparison set to run, in order.
    pub arms: Vec<Arm>,
    /// Provider-type grid.
    pub types: TypeSection,
    /// Market constants.
    pub pricing: PricingParams,
    /// Candidate synthesis parameters.
    pub population: PopulationSection,
    /// Equilibrium-search knobs.
    pub solver: SolverConfig,
    /// Training knobs.
    pub training: TrainingSection,
    /// Synthetic task parameters.
    pub task: TaskSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            realized_type: 9,
            candidates: 100,
            selected: 10,
            arms: Arm::ALL.to_vec(),
            types: TypeSection::default(),
            pricing: PricingParams::default_market(),
            population: PopulationSection::default(),
            solver: SolverConfig::default(),
            training: TrainingSection::default(),
            task: TaskSection::default(),
        }
    }
}

impl ScenarioConfig {
    /// Checks every cross-field invariant. Runs before any compute.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::BadConfig(msg));
        if self.selected == 0 {
            return bad("selected roster size must be at least 1".to_string());
        }
        if self.selected > self.candidates {
            return bad(format!(
                "selected roster size {} exceeds the candidate pool {}",
                self.selected, self.candidates
            ));
        }
        if self.arms.is_empty() {
            return bad("at least one arm must be requested".to_string());
        }
        for (k, arm) in self.arms.iter().enumerate() {
            if self.arms[..k].contains(arm) {
                return bad(format!("arm {arm} is listed twice"));
            }
        }
        if self.types.count == 0 {
            return bad("type count must be at least 1".to_string());
        }
        if self.realized_type >= self.types.count {
            return bad(format!(
                "realized type {} out of range for {} types",
                self.realized_type, self.types.count
            ));
        }
        if !(self.types.d_max_enc.is_finite() && self.types.d_max_enc > 0.0) {
            return bad(format!(
                "top-type capacity must be positive (got {})",
                self.types.d_max_enc
            ));
        }
        let p = &self.population;
        if !(p.d_total_min.is_finite() && p.d_total_min > 0.0 && p.d_total_max >= p.d_total_min)
        {
            return bad(format!(
                "data-stock range [{}, {}] is not a positive interval",
                p.d_total_min, p.d_total_max
            ));
        }
        if !(p.local_cap_share.is_finite() && (0.0..=1.0).contains(&p.local_cap_share)) {
            return bad(format!(
                "local cap share {} outside [0, 1]",
                p.local_cap_share
            ));
        }
        self.pricing.validate()?;
        self.solver.validate()?;
        let t = &self.training;
        if t.rounds == 0 {
            return bad("training rounds must be at least 1".to_string());
        }
        if !(t.straggle_p.is_finite() && (0.0..=1.0).contains(&t.straggle_p)) {
            return bad(format!("straggle probability {} outside [0, 1]", t.straggle_p));
        }
        if t.scale < 2 {
            return bad(format!("fixed-point scale {} is too small", t.scale));
        }
        let task = &self.task;
        if task.n_samples < self.selected {
            return bad(format!(
                "task has {} samples for {} users; every user needs at least one",
                task.n_samples, self.selected
            ));
        }
        if task.feature_dim == 0 || task.label_dim == 0 {
            return bad("task dimensions must be at least 1".to_string());
        }
        if !(task.noise_sigma.is_finite() && task.noise_sigma >= 0.0) {
            return bad(format!("noise sigma {} must be non-negative", task.noise_sigma));
        }
        Ok(())
    }
}

/// Parses config text (TOML; empty text means all defaults).
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    Ok(toml::from_str(text)?)
}

/// Parses config text and applies `key.path=value` overrides on top;
/// overrides win over the file. Values are parsed as TOML scalars or
/// inline arrays/tables, falling back to plain strings.
pub fn parse_config_with_overrides(
    text: &str,
    overrides: &[String],
) -> Result<ScenarioConfig, ScenarioError> {
    let mut table: toml::Table = toml::from_str(text)?;
    for entry in overrides {
        let (path, raw) = entry.split_once('=').ok_or_else(|| {
            ScenarioError::BadConfig(format!("override '{entry}' is not of the form key=value"))
        })?;
        apply_override(&mut table, path.trim(), raw.trim())?;
    }
    Ok(toml::Table::try_into(table)?)
}

/// Sets one dotted-path key in a TOML tree, creating tables on the way.
fn apply_override(table: &mut toml::Table, path: &str, raw: &str) -> Result<(), ScenarioError> {
    let mut segments = path.split('.').collect::<Vec<_>>();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(ScenarioError::BadConfig(format!(
            "override path '{path}' has an empty segment"
        )));
    }
    let leaf = segments.pop().expect("split yields at least one segment");
    let mut node = table;
    for seg in segments {
        let entry = node
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            ScenarioError::BadConfig(format!(
                "override path '{path}' descends through non-table key '{seg}'"
            ))
        })?;
    }
    node.insert(leaf.to_string(), parse_override_value(raw));
    Ok(())
}

/// Interprets an override's right-hand side: anything TOML accepts as a
/// value (number, bool, string, array, inline table), else a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    if let Ok(mut t) = wrapped.parse::<toml::Table>() {
        if let Some(v) = t.remove("v") {
            return v;
        }
    }
    toml::Value::String(raw.to_string())
}

/// Canonical TOML rendering of a config (used for hashing and manifests).
pub fn to_toml_string(config: &ScenarioConfig) -> Result<String, ScenarioError> {
    Ok(toml::to_string_pretty(config)?)
}

/// The default configuration as TOML text.
pub fn default_config_toml() -> String {
    to_toml_string(&ScenarioConfig::default()).expect("default config serializes")
}

// ---------------------------------------------------------------------------
// Population and market assembly
// ---------------------------------------------------------------------------

/// Draws the candidate population for a config. Candidate `id`s are
/// `0..candidates`; stocks are uniform in the configured range.
pub fn synth_candidates(config: &ScenarioConfig) -> Vec<MuProfile> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let p = &config.population;
    (0..config.candidates)
        .map(|id| {
            let d_total = if p.d_total_max > p.d_total_min {
                rng.random_range(p.d_total_min..p.d_total_max)
            } else {
                p.d_total_min
            };
            MuProfile {
                id,
                d_total,
                d_local_cap: p.local_cap_share * d_total,
                eps_priv: p.eps_priv,
                a_fn: p.a_fn,
                zeta: p.zeta,
                cycles_per_sample: p.cycles_per_sample,
                freq: p.freq,
                rate: p.rate,
                compute: p.compute,
            }
        })
        .collect()
}

/// Draws the population, selects the roster (best-first), and builds the
/// provider's type grid: marginal values `1..=count`, uniform prior.
pub fn assemble_market(
    config: &ScenarioConfig,
) -> Result<(Vec<MuProfile>, MapTypeProfile), ScenarioError> {
    let candidates = synth_candidates(config);
    let picked = select_top_n(&candidates, &SelectionWeights::balanced(), config.selected)?;
    let roster = picked.iter().map(|&k| candidates[k].clone()).collect();
    let type_values: Vec<f64> = (1..=config.types.count).map(|i| i as f64).collect();
    let map = MapTypeProfile::uniform(type_values, config.types.d_max_enc)?;
    Ok((roster, map))
}

/// Derives the simulated wall-clock model from the roster's device
/// constants: users spend `cycles/freq` seconds per sample, the provider
/// its own constant, and uploads move one fixed-size encrypted gradient
/// over the mean uplink.
pub fn derive_timing(
    roster: &[MuProfile],
    pricing: &PricingParams,
    feature_dim: usize,
    label_dim: usize,
) -> TimingModel {
    let mean = |f: &dyn Fn(&MuProfile) -> f64| {
        roster.iter().map(f).sum::<f64>() / roster.len().max(1) as f64
    };
    let user_seconds_per_sample = mean(&|m: &MuProfile| {
        if m.freq > 0.0 {
            m.cycles_per_sample / m.freq
        } else {
            0.0
        }
    });
    let provider_seconds_per_sample = if pricing.map_freq > 0.0 {
        pricing.map_cycles_per_sample / pricing.map_freq
    } else {
        0.0
    };
    // Two 128-bit words plus metadata per ciphertext entry.
    let gradient_bytes = (feature_dim * label_dim) as f64 * 40.0 + 64.0;
    TimingModel {
        user_seconds_per_sample,
        provider_seconds_per_sample,
        uplink_bytes_per_second: (mean(&|m: &MuProfile| m.rate) / 8.0).max(1.0),
        gradient_bytes,
    }
}

// ---------------------------------------------------------------------------
// Arm execution
// ---------------------------------------------------------------------------

/// A contract arm's solved market side.
#[derive(Debug, Clone)]
pub struct ContractOutcome {
    pub book: ContractBook,
    pub eta: EtaAllocation,
    /// Sweeps the search ran (equilibrium arm only).
    pub iterations: Option<usize>,
    /// Whether the search settled (equilibrium arm only).
    pub converged: Option<bool>,
    pub utility_trace: Vec<UtilityTraceRow>,
    pub feasibility: FeasibilityReport,
    /// Social welfare at the realized type.
    pub welfare: f64,
    /// Provider utility at every type.
    pub map_utilities: Vec<f64>,
    /// Each user's prior-weighted utility.
    pub mu_expected: Vec<f64>,
    /// Each user's utility at the realized type.
    pub mu_realized: Vec<f64>,
}

/// Everything one arm produced.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: Arm,
    pub contract: Option<ContractOutcome>,
    pub trace: Vec<TraceRow>,
    /// Reporting-user count the conventional arm waited for.
    pub fixed_participants: Option<usize>,
}

/// Flat, serializable digest of one arm (the `summary.json` row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub welfare: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_utility_realized: Option<f64>,
    pub mu_expected: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fully_feasible: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    pub rounds_run: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_participants: Option<usize>,
}

fn summarize(result: &ArmResult, realized_type: usize) -> ArmSummary {
    let c = result.contract.as_ref();
    ArmSummary {
        arm: result.arm,
        converged: c.and_then(|c| c.converged),
        sweeps: c.and_then(|c| c.iterations),
        welfare: c.map(|c| c.welfare),
        map_utility_realized: c.map(|c| c.map_utilities[realized_type]),
        mu_expected: c.map(|c| c.mu_expected.clone()).unwrap_or_default(),
        fully_feasible: c.map(|c| c.feasibility.is_fully_feasible()),
        final_loss: result.trace.last().map(|r| r.global_loss),
        rounds_run: result.trace.len(),
        fixed_participants: result.fixed_participants,
    }
}

fn solve_contract_arm(
    arm: Arm,
    instance: &MarketInstance<'_>,
    config: &ScenarioConfig,
) -> Result<ContractOutcome, ScenarioError> {
    let (book, eta, iterations, converged, utility_trace) = match arm {
        Arm::Proposed => {
            let r = iterate_contracts(instance, &config.solver)?;
            (r.book, r.eta, Some(r.iterations), Some(r.converged), r.utility_trace)
        }
        Arm::Baseline => {
            // Quote the proportional book in grid units like every other
            // arm; exact shares would hold sub-grid crumbs no searched
            // menu can match.
            let seed = baseline_proportional(instance)?;
            let book = snap_book_to_grid(&seed, config.solver.grid_step, instance.pricing)?;
            let eta = solve_eta(instance, &book)?;
            (book, eta, None, None, Vec::new())
        }
        Arm::InfoSymmetry => {
            let book = solve_info_symmetry(config.realized_type, instance, &config.solver)?;
            let eta = solve_eta(instance, &book)?;
            (book, eta, None, None, Vec::new())
        }
        Arm::ConvFl => unreachable!("conv-fl has no contract side"),
    };
    let feasibility = verify_book(instance, &book, &eta)?;
    let i = config.realized_type;
    let welfare = social_welfare(i, &book, &eta, instance.mus, instance.map, instance.pricing)?;
    let map_utilities = (0..instance.type_count())
        .map(|t| map_utility(t, &eta, &book, instance.map, instance.pricing))
        .collect::<Result<Vec<_>, _>>()?;
    let mu_expected = (0..instance.mu_count())
        .map(|n| mu_expected_utility(n, &book, &eta, instance.mus, instance.map, instance.pricing))
        .collect::<Result<Vec<_>, _>>()?;
    let mu_realized = (0..instance.mu_count())
        .map(|n| {
            mu_realized_utility(i, n, &book, &eta, instance.mus, instance.map, instance.pricing)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ContractOutcome {
        book,
        eta,
        iterations,
        converged,
        utility_trace,
        feasibility,
        welfare,
        map_utilities,
        mu_expected,
        mu_realized,
    })
}

/// Bridges market-scale contract quantities onto the (smaller) training
/// task: each user contributes the same fractions of its task block that
/// the realized menu row takes of its market stock.
fn contract_to_split(
    plan: &PartitionPlan,
    book: &ContractBook,
    eta: &EtaAllocation,
    roster: &[MuProfile],
    realized_type: usize,
) -> ContractSplit {
    let mut encrypted_counts = Vec::with_capacity(roster.len());
    let mut local_counts = Vec::with_capacity(roster.len());
    for (n, mu) in roster.iter().enumerate() {
        let c = book.contract(n);
        let take = eta.eta(realized_type, n) * c.d_enc[realized_type];
        let enc_frac = (take / mu.d_total).clamp(0.0, 1.0);
        let local_frac = (c.d_local / mu.d_total).clamp(0.0, 1.0);
        let block = plan.block_len(n);
        let enc = ((enc_frac * block as f64).floor() as usize).min(block);
        let local = ((local_frac * block as f64).floor() as usize).min(block - enc);
        encrypted_counts.push(enc);
        local_counts.push(local);
    }
    ContractSplit {
        encrypted_counts,
        local_counts,
        warnings: Vec::new(),
    }
}

/// Conventional-FL split: every block stays fully local.
fn conv_fl_split(plan: &PartitionPlan) -> ContractSplit {
    let blocks = (0..plan.user_count()).map(|n| plan.block_len(n));
    ContractSplit {
        encrypted_counts: vec![0; plan.user_count()],
        local_counts: blocks.collect(),
        warnings: Vec::new(),
    }
}

fn run_arm(
    arm: Arm,
    config: &ScenarioConfig,
    instance: &MarketInstance<'_>,
    dataset: &Dataset,
    plan: &PartitionPlan,
    timing: &TimingModel,
) -> Result<ArmResult, ScenarioError> {
    let contract = if arm.has_contract() {
        Some(solve_contract_arm(arm, instance, config)?)
    } else {
        None
    };

    let split = match &contract {
        Some(c) => contract_to_split(plan, &c.book, &c.eta, instance.mus, config.realized_type),
        None => conv_fl_split(plan),
    };
    let data = materialize_split(dataset, plan, &split)?;

    let eligible = data.locals.iter().filter(|d| d.is_some()).count();
    let (straggler, fixed_participants) = if arm == Arm::ConvFl {
        let count = config.training.fixed_participants.unwrap_or_else(|| {
            (((1.0 - config.training.straggle_p) * eligible as f64).round() as usize).max(1)
        });
        (StragglerModel::FixedParticipants { count }, Some(count))
    } else {
        (
            StragglerModel::Bernoulli {
                p: config.training.straggle_p,
            },
            None,
        )
    };

    let training = TrainingConfig {
        rounds: config.training.rounds,
        optimizer: config.training.optimizer,
        step: config.training.step,
        straggler,
        seed: config.seed,
        scale: config.training.scale,
        stop_tol: None,
        stop_patience: 10,
        timing: Some(*timing),
    };
    let init = ndarray::Array2::zeros((config.task.feature_dim, config.task.label_dim));
    let outcome = run_training(&data, &init, &training)?;

    Ok(ArmResult {
        arm,
        contract,
        trace: outcome.trace,
        fixed_participants,
    })
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

/// The bundle's index: what ran, under which seed and config, into which
/// files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// FNV-1a hash of the canonical config TOML, hex.
    pub config_hash: String,
    pub seed: u64,
    pub arms: Vec<Arm>,
    /// Candidate ids that made the roster, best-first.
    pub selected_ids: Vec<usize>,
    /// Every file the bundle wrote, sorted.
    pub files: Vec<String>,
    /// The full effective configuration.
    pub config: ScenarioConfig,
}

/// A finished scenario: the manifest plus one digest per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub summaries: Vec<ArmSummary>,
}

impl ScenarioBundle {
    /// The digest for one arm, if it ran.
    pub fn summary(&self, arm: Arm) -> Option<&ArmSummary> {
        self.summaries.iter().find(|s| s.arm == arm)
    }
}

/// 64-bit FNV-1a.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Writes via a temp file plus rename, so readers never see half a file.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Formats a float with shortest-round-trip precision (stable bytes).
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn utilities_csv(results: &[ArmResult], map: &MapTypeProfile) -> Result<Vec<u8>, csv::Error> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "arm",
        "type_index",
        "type_value",
        "map_utility",
        "welfare",
        "aggregate_accepted",
    ])?;
    for r in results {
        let Some(c) = &r.contract else { continue };
        for i in 0..map.type_count() {
            wtr.write_record([
                r.arm.name().to_string(),
                i.to_string(),
                fmt_f64(map.type_value(i)),
                fmt_f64(c.map_utilities[i]),
                fmt_f64(c.welfare),
                fmt_f64(c.feasibility.aggregate_accepted[i]),
            ])?;
        }
    }
    wtr.into_inner().map_err(|e| e.into_error().into())
}

fn mu_utilities_csv(
    results: &[ArmResult],
    roster: &[MuProfile],
    realized_type: usize,
) -> Result<Vec<u8>, csv::Error> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "arm",
        "mu_index",
        "mu_id",
        "expected_utility",
        "realized_utility",
        "d_local",
        "pay_local",
        "d_enc_realized",
        "pay_enc_realized",
        "eta_realized",
    ])?;
    for r in results {
        let Some(c) = &r.contract else { continue };
        for (n, mu) in roster.iter().enumerate() {
            let k = c.book.contract(n);
            wtr.write_record([
                r.arm.name().to_string(),
                n.to_string(),
                mu.id.to_string(),
                fmt_f64(c.mu_expected[n]),
                fmt_f64(c.mu_realized[n]),
                fmt_f64(k.d_local),
                fmt_f64(k.pay_local),
                fmt_f64(k.d_enc[realized_type]),
                fmt_f64(k.pay_enc[realized_type]),
                fmt_f64(c.eta.eta(realized_type, n)),
            ])?;
        }
    }
    wtr.into_inner().map_err(|e| e.into_error().into())
}

/// The equilibrium record: the solved book with its acceptance plan,
/// search diagnostics, and the full feasibility audit.
#[derive(Debug, Clone, Serialize)]
struct EquilibriumRecord<'a> {
    book: &'a ContractBook,
    eta: &'a EtaAllocation,
    iterations: Option<usize>,
    converged: Option<bool>,
    utility_trace: &'a [UtilityTraceRow],
    feasibility: &'a FeasibilityReport,
}

/// Runs the full scenario into `out_dir` and returns the bundle.
///
/// Artifacts: `trace_<arm>.csv` per arm, `utilities.csv` and
/// `mu_utilities.csv` over the contract arms, `equilibrium.json` when the
/// equilibrium arm runs, `summary.json`, and `manifest.json` (written
/// last). Identical `(config, seed)` produce byte-identical files.
pub fn run_scenario(
    config: &ScenarioConfig,
    out_dir: &Path,
) -> Result<ScenarioBundle, ScenarioError> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;

    let (roster, map) = assemble_market(config)?;
    let selected_ids: Vec<usize> = roster.iter().map(|m| m.id).collect();
    let instance = MarketInstance::new(&roster, &map, &config.pricing)?;

    let (dataset, _truth) = synth_dataset(
        config.seed,
        config.task.n_samples,
        config.task.feature_dim,
        config.task.label_dim,
        config.task.noise_sigma,
    )?;
    let plan = partition_non_iid(&dataset, config.selected)?;
    let timing = derive_timing(&roster, &config.pricing, config.task.feature_dim, config.task.label_dim);

    let mut results = Vec::with_capacity(config.arms.len());
    let mut files: Vec<String> = Vec::new();
    for &arm in &config.arms {
        let result = run_arm(arm, config, &instance, &dataset, &plan, &timing)?;
        let name = format!("trace_{}.csv", arm.slug());
        let mut buf = Vec::new();
        write_trace_csv(&result.trace, &mut buf)?;
        write_atomic(&out_dir.join(&name), &buf)?;
        files.push(name);
        results.push(result);
    }

    if results.iter().any(|r| r.contract.is_some()) {
        write_atomic(&out_dir.join("utilities.csv"), &utilities_csv(&results, &map)?)?;
        write_atomic(
            &out_dir.join("mu_utilities.csv"),
            &mu_utilities_csv(&results, &roster, config.realized_type)?,
        )?;
        files.push("utilities.csv".to_string());
        files.push("mu_utilities.csv".to_string());
    }

    if let Some(prop) = results
        .iter()
        .find(|r| r.arm == Arm::Proposed)
        .and_then(|r| r.contract.as_ref())
    {
        let record = EquilibriumRecord {
            book: &prop.book,
            eta: &prop.eta,
            iterations: prop.iterations,
            converged: prop.converged,
            utility_trace: &prop.utility_trace,
            feasibility: &prop.feasibility,
        };
        write_atomic(
            &out_dir.join("equilibrium.json"),
            &serde_json::to_vec_pretty(&record)?,
        )?;
        files.push("equilibrium.json".to_string());
    }

    let summaries: Vec<ArmSummary> = results
        .iter()
        .map(|r| summarize(r, config.realized_type))
        .collect();
    write_atomic(
        &out_dir.join("summary.json"),
        &serde_json::to_vec_pretty(&summaries)?,
    )?;
    files.push("summary.json".to_string());
    files.push("manifest.json".to_string());
    files.sort();

    let manifest = Manifest {
        config_hash: format!("{:016x}", fnv1a64(to_toml_string(config)?.as_bytes())),
        seed: config.seed,
        arms: config.arms.clone(),
        selected_ids,
        files,
        config: config.clone(),
    };
    write_atomic(
        &out_dir.join("manifest.json"),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;

    Ok(ScenarioBundle {
        dir: out_dir.to_path_buf(),
        manifest,
        summaries,
    })
}

/// Reopens a bundle directory written by [`run_scenario`].
pub fn load_bundle(dir: &Path) -> Result<ScenarioBundle, ScenarioError> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let summaries: Vec<ArmSummary> = serde_json::from_slice(&fs::read(dir.join("summary.json"))?)?;
    Ok(ScenarioBundle {
        dir: dir.to_path_buf(),
        manifest,
        summaries,
    })
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

/// Headline deltas between the arms of one bundle. Every field is absent
/// when the arms it needs did not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Per-user expected-utility gain of the equilibrium over the
    /// proportional baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_utility_delta_vs_baseline: Option<Vec<f64>>,
    /// Mean of the per-user gains.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_mu_utility_delta_vs_baseline: Option<f64>,
    /// Provider-utility gain at the realized type over the baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_utility_delta_vs_baseline: Option<f64>,
    /// `(W_info − W_proposed) / |W_info|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub welfare_gap_vs_info_symmetry: Option<f64>,
    /// `W_baseline ≤ W_proposed ≤ W_info` (with slack 1e-9).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub welfare_ordering_ok: Option<bool>,
    /// Conventional-FL final loss over the equilibrium arm's final loss.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss_ratio_vs_conv_fl: Option<f64>,
    /// Sweep counts of the arms that searched.
    pub sweep_counts: Vec<(Arm, usize)>,
}

/// Reduces a bundle to its headline comparison numbers.
pub fn compare_arms(bundle: &ScenarioBundle) -> Comparison {
    let prop = bundle.summary(Arm::Proposed);
    let base = bundle.summary(Arm::Baseline);
    let info = bundle.summary(Arm::InfoSymmetry);
    let conv = bundle.summary(Arm::ConvFl);

    let mu_delta = match (prop, base) {
        (Some(p), Some(b)) if p.mu_expected.len() == b.mu_expected.len() => Some(
            p.mu_expected
                .iter()
                .zip(&b.mu_expected)
                .map(|(a, b)| a - b)
                .collect::<Vec<f64>>(),
        ),
        _ => None,
    };
    let mean_delta = mu_delta
        .as_ref()
        .filter(|d| !d.is_empty())
        .map(|d| d.iter().sum::<f64>() / d.len() as f64);
    let map_delta = match (prop, base) {
        (Some(p), Some(b)) => match (p.map_utility_realized, b.map_utility_realized) {
            (Some(a), Some(c)) => Some(a - c),
            _ => None,
        },
        _ => None,
    };
    let (gap, ordering) = {
        let wp = prop.and_then(|s| s.welfare);
        let wb = base.and_then(|s| s.welfare);
        let wi = info.and_then(|s| s.welfare);
        let gap = match (wp, wi) {
            (Some(p), Some(i)) => Some((i - p) / i.abs().max(1e-12)),
            _ => None,
        };
        let ordering = match (wp, wb, wi) {
            (Some(p), Some(b), Some(i)) => Some(b <= p + 1e-9 && p <= i + 1e-9),
            _ => None,
        };
        (gap, ordering)
    };
    let loss_ratio = match (prop, conv) {
        (Some(p), Some(c)) => match (p.final_loss, c.final_loss) {
            (Some(lp), Some(lc)) if lp > 0.0 => Some(lc / lp),
            _ => None,
        },
        _ => None,
    };
    let sweep_counts = bundle
        .summaries
        .iter()
        .filter_map(|s| s.sweeps.map(|k| (s.arm, k)))
        .collect();

    Comparison {
        mu_utility_delta_vs_baseline: mu_delta,
        mean_mu_utility_delta_vs_baseline: mean_delta,
        map_utility_delta_vs_baseline: map_delta,
        welfare_gap_vs_info_symmetry: gap,
        welfare_ordering_ok: ordering,
        final_loss_ratio_vs_conv_fl: loss_ratio,
        sweep_counts,
    }
}

/// Plain-text table of a comparison, for terminal output.
pub fn render_comparison(bundle: &ScenarioBundle, cmp: &Comparison) -> String {
    let mut out = String::new();
    let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    out.push_str("arm            welfare        map_utility    final_loss     sweeps\n");
    for s in &bundle.summaries {
        out.push_str(&format!(
            "{:<14} {:<14} {:<14} {:<14} {}\n",
            s.arm.name(),
            fmt_opt(s.welfare),
            fmt_opt(s.map_utility_realized),
            fmt_opt(s.final_loss),
            s.sweeps.map_or("-".to_string(), |k| k.to_string()),
        ));
    }
    out.push('\n');
    out.push_str(&format!(
        "mean user-utility gain vs baseline: {}\n",
        fmt_opt(cmp.mean_mu_utility_delta_vs_baseline)
    ));
    out.push_str(&format!(
        "provider-utility gain vs baseline:  {}\n",
        fmt_opt(cmp.map_utility_delta_vs_baseline)
    ));
    out.push_str(&format!(
        "welfare gap to known-type solution: {}\n",
        fmt_opt(cmp.welfare_gap_vs_info_symmetry)
    ));
    out.push_str(&format!(
        "welfare ordering holds:             {}\n",
        cmp.welfare_ordering_ok
            .map_or("-".to_string(), |b| b.to_string())
    ));
    out.push_str(&format!(
        "final-loss ratio conv-fl/proposed:  {}\n",
        fmt_opt(cmp.final_loss_ratio_vs_conv_fl)
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A miniature config that runs the whole pipeline in milliseconds.
    fn small_config() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.seed = 11;
        cfg.candidates = 6;
        cfg.selected = 3;
        cfg.realized_type = 2;
        cfg.types = TypeSection {
            count: 3,
            d_max_enc: 3_000.0,
        };
        cfg.population = PopulationSection {
            d_total_min: 900.0,
            d_total_max: 1_100.0,
            local_cap_share: 0.1,
            ..PopulationSection::default()
        };
        cfg.solver.max_iters = 40;
        cfg.training.rounds = 8;
        cfg.training.straggle_p = 0.5;
        cfg.task = TaskSection {
            n_samples: 120,
            feature_dim: 3,
            label_dim: 1,
            noise_sigma: 0.0,
        };
        cfg
    }

    #[test]
    fn defaults_match_the_reference_market() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.types.count, 10);
        assert_eq!(cfg.types.d_max_enc, 5e5);
        assert_eq!(cfg.candidates, 100);
        assert_eq!(cfg.selected, 10);
        assert_eq!(cfg.pricing.alpha_enc, 0.001);
        assert_eq!(cfg.pricing.alpha_local, 0.005);
        assert_eq!(cfg.pricing.upsilon_enc, 0.125);
        assert_eq!(cfg.pricing.upsilon_local, 3.0);
        assert_eq!(cfg.pricing.beta_priv, 1.0);
        assert_eq!(cfg.pricing.gamma_tx, 1e-4);
        assert_eq!(cfg.population.zeta, 0.5e-26);
        assert_eq!(cfg.population.freq, 2e9);
        assert_eq!(cfg.population.cycles_per_sample, 44_880.0);
        assert_eq!(cfg.population.rate, 293e6);
        assert_eq!(cfg.training.rounds, 300);
        assert_eq!(cfg.arms, Arm::ALL.to_vec());
    }

    #[test]
    fn toml_round_trip_is_idempotent() {
        let partial = "seed = 5\n[training]\nrounds = 4\n";
        let once = to_toml_string(&parse_config(partial).unwrap()).unwrap();
        let twice = to_toml_string(&parse_config(&once).unwrap()).unwrap();
        assert_eq!(once, twice);
        let cfg = parse_config(&once).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.training.rounds, 4);
        // Untouched sections keep their defaults.
        assert_eq!(cfg.types.count, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse_config("sneed = 5\n"),
            Err(ScenarioError::Toml(_))
        ));
        assert!(matches!(
            parse_config("[training]\nroundz = 2\n"),
            Err(ScenarioError::Toml(_))
        ));
        assert!(matches!(
            parse_config("[pricing]\nalpha_env = 0.1\n"),
            Err(ScenarioError::Toml(_))
        ));
    }

    #[test]
    fn dotted_overrides_beat_the_file() {
        let overrides = vec![
            "seed=9".to_string(),
            "training.rounds=7".to_string(),
            "pricing.beta_priv=2.5".to_string(),
            "arms=[\"proposed\"]".to_string(),
        ];
        let cfg = parse_config_with_overrides("seed = 1\n", &overrides).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.training.rounds, 7);
        assert_eq!(cfg.pricing.beta_priv, 2.5);
        assert_eq!(cfg.arms, vec![Arm::Proposed]);
        // A typo inside an override is still schema-checked.
        assert!(parse_config_with_overrides("", &["training.roundz=7".to_string()]).is_err());
    }

    #[test]
    fn oversubscribed_selection_is_rejected_before_compute() {
        let mut cfg = small_config();
        cfg.selected = 7; // pool has 6
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, ScenarioError::BadConfig(_)));
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("never");
        assert!(run_scenario(&cfg, &out).is_err());
        assert!(!out.exists(), "validation failures must precede artifacts");
    }

    #[test]
    fn default_arm_set_produces_the_full_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = run_scenario(&small_config(), dir.path()).unwrap();
        assert_eq!(bundle.summaries.len(), 4);
        for name in [
            "trace_proposed.csv",
            "trace_baseline.csv",
            "trace_info_symmetry.csv",
            "trace_conv_fl.csv",
            "utilities.csv",
            "mu_utilities.csv",
            "equilibrium.json",
            "summary.json",
            "manifest.json",
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
            assert!(
                bundle.manifest.files.contains(&name.to_string()),
                "manifest omits {name}"
            );
        }
        assert_eq!(bundle.manifest.selected_ids.len(), 3);
        let prop = bundle.summary(Arm::Proposed).unwrap();
        assert_eq!(prop.fully_feasible, Some(true));
        assert_eq!(prop.rounds_run, 8);
        assert!(prop.final_loss.is_some());
    }

    #[test]
    fn same_seed_runs_are_byte_identical() {
        let cfg = small_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = run_scenario(&cfg, dir_a.path()).unwrap();
        let b = run_scenario(&cfg, dir_b.path()).unwrap();
        assert_eq!(a.manifest.config_hash, b.manifest.config_hash);
        for name in &a.manifest.files {
            if name == "manifest.json" {
                continue; // embeds no path, still compared below
            }
            let left = fs::read(dir_a.path().join(name)).unwrap();
            let right = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(left, right, "{name} differs between identical runs");
        }
        let left = fs::read(dir_a.path().join("manifest.json")).unwrap();
        let right = fs::read(dir_b.path().join("manifest.json")).unwrap();
        assert_eq!(left, right);
    }

    #[test]
    fn single_arm_request_builds_a_single_arm_bundle() {
        let mut cfg = small_config();
        cfg.arms = vec![Arm::ConvFl];
        let dir = tempfile::tempdir().unwrap();
        let bundle = run_scenario(&cfg, dir.path()).unwrap();
        assert_eq!(bundle.summaries.len(), 1);
        assert!(dir.path().join("trace_conv_fl.csv").exists());
        assert!(!dir.path().join("equilibrium.json").exists());
        assert!(!dir.path().join("utilities.csv").exists());
        let s = bundle.summary(Arm::ConvFl).unwrap();
        assert!(s.welfare.is_none());
        assert!(s.final_loss.is_some());
    }

    #[test]
    fn conventional_arm_waits_for_a_fixed_count() {
        let mut cfg = small_config();
        cfg.arms = vec![Arm::ConvFl];
        // (1 − 0.5) · 3 eligible users, rounded: 2 reporters per round.
        let dir = tempfile::tempdir().unwrap();
        let bundle = run_scenario(&cfg, dir.path()).unwrap();
        assert_eq!(bundle.summary(Arm::ConvFl).unwrap().fixed_participants, Some(2));
        let text = fs::read_to_string(dir.path().join("trace_conv_fl.csv")).unwrap();
        for line in text.lines().skip(1) {
            let participants: usize = line.split(',').nth(2).unwrap().parse().unwrap();
            assert_eq!(participants, 2);
        }
    }

    #[test]
    fn bundles_reload_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = run_scenario(&small_config(), dir.path()).unwrap();
        let reloaded = load_bundle(dir.path()).unwrap();
        assert_eq!(bundle.manifest, reloaded.manifest);
        assert_eq!(bundle.summaries, reloaded.summaries);
    }

    #[test]
    fn identical_arms_compare_to_zero_deltas() {
        let digest = ArmSummary {
            arm: Arm::Proposed,
            converged: Some(true),
            sweeps: Some(3),
            welfare: Some(10.0),
            map_utility_realized: Some(4.0),
            mu_expected: vec![1.0, 2.0],
            fully_feasible: Some(true),
            final_loss: Some(0.5),
            rounds_run: 8,
            fixed_participants: None,
        };
        let clone_as = |arm: Arm| ArmSummary {
            arm,
            sweeps: None,
            converged: None,
            ..digest.clone()
        };
        let bundle = ScenarioBundle {
            dir: PathBuf::new(),
            manifest: Manifest {
                config_hash: String::new(),
                seed: 0,
                arms: Arm::ALL.to_vec(),
                selected_ids: vec![],
                files: vec![],
                config: ScenarioConfig::default(),
            },
            summaries: vec![
                digest.clone(),
                clone_as(Arm::Baseline),
                clone_as(Arm::InfoSymmetry),
                clone_as(Arm::ConvFl),
            ],
        };
        let cmp = compare_arms(&bundle);
        assert_eq!(cmp.mu_utility_delta_vs_baseline, Some(vec![0.0, 0.0]));
        assert_eq!(cmp.mean_mu_utility_delta_vs_baseline, Some(0.0));
        assert_eq!(cmp.map_utility_delta_vs_baseline, Some(0.0));
        assert_eq!(cmp.welfare_gap_vs_info_symmetry, Some(0.0));
        assert_eq!(cmp.welfare_ordering_ok, Some(true));
        assert_eq!(cmp.final_loss_ratio_vs_conv_fl, Some(1.0));
        assert_eq!(cmp.sweep_counts, vec![(Arm::Proposed, 3)]);
    }

    #[test]
    fn comparison_of_a_real_bundle_fills_every_field() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = run_scenario(&small_config(), dir.path()).unwrap();
        let cmp = compare_arms(&bundle);
        assert!(cmp.mu_utility_delta_vs_baseline.is_some());
        assert!(cmp.mean_mu_utility_delta_vs_baseline.is_some());
        assert!(cmp.map_utility_delta_vs_baseline.is_some());
        assert!(cmp.welfare_gap_vs_info_symmetry.is_some());
        assert!(cmp.welfare_ordering_ok.is_some());
        let ratio = cmp.final_loss_ratio_vs_conv_fl.unwrap();
        assert!(ratio.is_finite() && ratio > 0.0);
        assert!(!cmp.sweep_counts.is_empty());
        let text = render_comparison(&bundle, &cmp);
        assert!(text.contains("proposed"));
        assert!(text.contains("welfare gap"));
    }
}
