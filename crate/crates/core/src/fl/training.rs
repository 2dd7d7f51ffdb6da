//! The federated round loop over the simulated cipher.
//!
//! One round:
//!
//! 1. The coordinator encrypts the current model; every party works from
//!    this fresh ciphertext, so multiplicative depth never carries over
//!    between rounds.
//! 2. The provider computes the sum-form gradient on its pooled
//!    encrypted shard (two cipher products).
//! 3. Each non-straggling user computes a plaintext gradient on its
//!    local block — at the *decrypted* model, so both paths see the same
//!    fixed-point quantization — and submits it encrypted.
//! 4. Gradients merge into the global mean, weighted by sample counts;
//!    the result is decrypted and an optimizer step is applied.
//! 5. The round's loss is averaged over the parties that reported
//!    (provider shard counted as one party), and a trace row is emitted.
//!
//! Stragglers are drawn per round from a seeded generator: either an
//! independent coin per user or a fixed participant count. A straggler
//! contributes neither gradient nor loss that round.
//!
//! Wall-clock in the trace is *simulated* from an optional timing model
//! (per-sample compute plus gradient upload), keeping traces byte-stable
//! across machines and runs.

use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::encrypted::{merge_global_gradient, EncryptedShard};
use super::model::{local_gradient, local_loss};
use super::FlError;
use crate::data::SplitData;
use crate::he::matrix::CipherMatrix;
use crate::he::{keygen, KeyPair, DEFAULT_SCALE};

/// Step-size schedule λₜ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// λₜ = value.
    Constant { value: f64 },
    /// λₜ = initial / (1 + rate·t) — a harmonic decay.
    Decay { initial: f64, rate: f64 },
}

impl StepSchedule {
    /// Step size at round `t`.
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { value } => value,
            StepSchedule::Decay { initial, rate } => initial / (1.0 + rate * t as f64),
        }
    }

    fn validate(&self) -> Result<(), FlError> {
        let ok = match *self {
            StepSchedule::Constant { value } => value.is_finite() && value >= 0.0,
            StepSchedule::Decay { initial, rate } => {
                initial.is_finite() && initial >= 0.0 && rate.is_finite() && rate >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(FlError::BadConfig(format!("bad step schedule: {self:?}")))
        }
    }
}

/// Which update rule consumes the global gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Υ ← Υ − λₜ·g.
    Sgd,
    /// Adam with the usual moment estimates; λₜ is the step size.
    Adam,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// How users drop out of a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StragglerModel {
    /// Each user independently straggles with probability `p`.
    Bernoulli { p: f64 },
    /// A uniformly drawn subset of exactly `count` users reports
    /// (fewer if fewer users hold data).
    FixedParticipants { count: usize },
}

impl StragglerModel {
    fn validate(&self) -> Result<(), FlError> {
        match *self {
            StragglerModel::Bernoulli { p } => {
                if p.is_finite() && (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(FlError::BadConfig(format!(
                        "straggler probability {p} outside [0, 1]"
                    )))
                }
            }
            StragglerModel::FixedParticipants { .. } => Ok(()),
        }
    }

    /// Splits `eligible` into (participants, stragglers), both ascending.
    fn draw(&self, eligible: &[usize], rng: &mut ChaCha20Rng) -> (Vec<usize>, Vec<usize>) {
        match *self {
            StragglerModel::Bernoulli { p } => {
                let mut ins = Vec::new();
                let mut outs = Vec::new();
                for &n in eligible {
                    if rng.random::<f64>() < p {
                        outs.push(n);
                    } else {
                        ins.push(n);
                    }
                }
                (ins, outs)
            }
            StragglerModel::FixedParticipants { count } => {
                let mut pool = eligible.to_vec();
                pool.shuffle(rng);
                let take = count.min(pool.len());
                let mut ins: Vec<usize> = pool[..take].to_vec();
                let mut outs: Vec<usize> = pool[take..].to_vec();
                ins.sort_unstable();
                outs.sort_unstable();
                (ins, outs)
            }
        }
    }
}

/// Deterministic stand-in for wall-clock time: per-sample compute plus a
/// fixed-size gradient upload, users in parallel, provider in parallel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingModel {
    /// Seconds a user spends per local sample.
    pub user_seconds_per_sample: f64,
    /// Seconds the provider spends per pooled sample.
    pub provider_seconds_per_sample: f64,
    /// Upload throughput for the encrypted gradient, bytes/second.
    pub uplink_bytes_per_second: f64,
    /// Size of one encrypted gradient message in bytes.
    pub gradient_bytes: f64,
}

impl TimingModel {
    fn round_ms(&self, participant_samples: &[usize], pool_samples: usize) -> f64 {
        let user_time = participant_samples
            .iter()
            .map(|&s| {
                s as f64 * self.user_seconds_per_sample
                    + self.gradient_bytes / self.uplink_bytes_per_second
            })
            .fold(0.0f64, f64::max);
        let provider_time = pool_samples as f64 * self.provider_seconds_per_sample;
        user_time.max(provider_time) * 1000.0
    }

    fn validate(&self) -> Result<(), FlError> {
        let vals = [
            self.user_seconds_per_sample,
            self.provider_seconds_per_sample,
            self.uplink_bytes_per_second,
            self.gradient_bytes,
        ];
        if vals.iter().all(|v| v.is_finite() && *v >= 0.0) && self.uplink_bytes_per_second > 0.0 {
            Ok(())
        } else {
            Err(FlError::BadConfig("bad timing model".to_string()))
        }
    }
}

/// Full configuration of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Maximum number of rounds.
    pub rounds: usize,
    /// Update rule.
    pub optimizer: OptimizerKind,
    /// Step-size schedule.
    pub step: StepSchedule,
    /// Dropout model for users.
    pub straggler: StragglerModel,
    /// Seed for straggler draws and key generation.
    pub seed: u64,
    /// Fixed-point scale for all ciphertexts.
    pub scale: u64,
    /// Early stop: halt once the loss changes by less than this for
    /// [`TrainingConfig::stop_patience`] consecutive rounds.
    pub stop_tol: Option<f64>,
    /// Consecutive quiet rounds required to stop early.
    pub stop_patience: usize,
    /// Optional simulated timing for the trace's wall-clock column.
    pub timing: Option<TimingModel>,
}

impl TrainingConfig {
    /// A sane default: plain SGD, no dropouts, default scale.
    pub fn new(rounds: usize, step: f64, seed: u64) -> Self {
        Self {
            rounds,
            optimizer: OptimizerKind::Sgd,
            step: StepSchedule::Constant { value: step },
            straggler: StragglerModel::Bernoulli { p: 0.0 },
            seed,
            scale: DEFAULT_SCALE,
            stop_tol: None,
            stop_patience: 10,
            timing: None,
        }
    }

    fn validate(&self) -> Result<(), FlError> {
        if self.rounds == 0 {
            return Err(FlError::BadConfig("rounds must be >= 1".to_string()));
        }
        self.step.validate()?;
        self.straggler.validate()?;
        if let Some(tol) = self.stop_tol {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(FlError::BadConfig(format!("bad stop tolerance {tol}")));
            }
            if self.stop_patience == 0 {
                return Err(FlError::BadConfig(
                    "stop_patience must be >= 1 when stop_tol is set".to_string(),
                ));
            }
        }
        if let Some(t) = &self.timing {
            t.validate()?;
        }
        Ok(())
    }
}

/// One per-round observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    /// Round index, starting at 0.
    pub round: usize,
    /// Loss averaged over the parties that reported this round.
    pub global_loss: f64,
    /// Number of users that reported.
    pub participants: usize,
    /// Users that straggled, ascending.
    pub straggled: Vec<usize>,
    /// Simulated round duration (0 without a timing model).
    pub wallclock_ms: f64,
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    /// Final model (fixed-point-quantized, as every party sees it).
    pub model: Array2<f64>,
    /// Per-round trace.
    pub trace: Vec<TraceRow>,
    /// Whether the early-stop criterion fired before `rounds`.
    pub converged_early: bool,
}

/// Writes trace rows as CSV with a fixed header; straggler ids are
/// `;`-joined inside one field. Float formatting is shortest-round-trip,
/// so identical traces serialize to identical bytes.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "round",
        "global_loss",
        "participants",
        "straggled_ids",
        "wallclock_ms",
    ])?;
    for row in rows {
        let ids = row
            .straggled
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(";");
        wtr.write_record([
            row.round.to_string(),
            format!("{:?}", row.global_loss),
            row.participants.to_string(),
            ids,
            format!("{:?}", row.wallclock_ms),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

struct AdamState {
    m: Array2<f64>,
    v: Array2<f64>,
    t: usize,
}

impl AdamState {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Array2::zeros((rows, cols)),
            v: Array2::zeros((rows, cols)),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Array2<f64>, grad: &Array2<f64>, lr: f64) {
        self.t += 1;
        let b1t = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let b2t = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for ((m, v), (w, g)) in self
            .m
            .iter_mut()
            .zip(self.v.iter_mut())
            .zip(model.iter_mut().zip(grad.iter()))
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / b1t;
            let v_hat = *v / b2t;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Runs federated training on a materialized split.
///
/// `init_model` is `feature_dim × label_dim`. The returned trajectory is
/// fully determined by `(data, init_model, cfg)`.
pub fn run_training(
    data: &SplitData,
    init_model: &Array2<f64>,
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome, FlError> {
    cfg.validate()?;
    let expected = model_shape(data)?;
    if (init_model.nrows(), init_model.ncols()) != expected {
        return Err(FlError::ModelShape {
            expected,
            got: (init_model.nrows(), init_model.ncols()),
        });
    }
    let (rows, cols) = expected;

    // One evaluation domain for the whole run: all parties hold the same
    // simulated key, exactly like a shared-secret deployment.
    let key: KeyPair = keygen(0xFED, cfg.seed);
    let shard = match &data.encrypted_pool {
        Some(pool) => Some(EncryptedShard::enc(pool, &key, cfg.scale)?),
        None => None,
    };
    let eligible: Vec<usize> = data
        .locals
        .iter()
        .enumerate()
        .filter_map(|(n, d)| d.as_ref().map(|_| n))
        .collect();
    if shard.is_none() && eligible.is_empty() {
        return Err(FlError::NoTrainingData);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut model = init_model.clone();
    let mut adam = AdamState::new(rows, cols);
    let mut trace: Vec<TraceRow> = Vec::with_capacity(cfg.rounds);
    let mut quiet_rounds = 0usize;
    let mut converged_early = false;
    let mut prev_loss: Option<f64> = None;

    for round in 0..cfg.rounds {
        let (participants, straggled) = cfg.straggler.draw(&eligible, &mut rng);

        // Fresh ciphertext per round; everyone sees the quantized model.
        let model_ct = CipherMatrix::enc(&model, &key, cfg.scale)?;
        let model_q = model_ct.dec(&key)?;

        let shard_sum = match &shard {
            Some(s) => Some((s.gradient_sum(&model_ct)?, s.n_samples())),
            None => None,
        };
        let mut user_cts: Vec<(usize, CipherMatrix)> = Vec::with_capacity(participants.len());
        for &n in &participants {
            let block = data.locals[n].as_ref().expect("participant holds data");
            let g = local_gradient(block, &model_q);
            user_cts.push((block.n_samples(), CipherMatrix::enc(&g, &key, cfg.scale)?));
        }

        let total_reporting = user_cts.iter().map(|(w, _)| *w).sum::<usize>()
            + shard_sum.as_ref().map_or(0, |(_, n)| *n);
        if total_reporting > 0 {
            let terms: Vec<(usize, &CipherMatrix)> =
                user_cts.iter().map(|(w, m)| (*w, m)).collect();
            let global_ct = merge_global_gradient(
                &terms,
                shard_sum.as_ref().map(|(s, n)| (s, *n)),
                rows,
                cols,
                &key,
                cfg.scale,
            )?;
            let grad = global_ct.dec(&key)?;
            let lr = cfg.step.at(round);
            model = model_q.clone();
            match cfg.optimizer {
                OptimizerKind::Sgd => model = model - &grad * lr,
                OptimizerKind::Adam => adam.step(&mut model, &grad, lr),
            }
        } else {
            model = model_q.clone();
        }

        let loss = round_loss(data, &shard, &participants, &model, prev_loss);
        let wallclock_ms = cfg.timing.map_or(0.0, |t| {
            let sizes: Vec<usize> = participants
                .iter()
                .map(|&n| data.locals[n].as_ref().map_or(0, |d| d.n_samples()))
                .collect();
            t.round_ms(
                &sizes,
                data.encrypted_pool.as_ref().map_or(0, |p| p.n_samples()),
            )
        });
        trace.push(TraceRow {
            round,
            global_loss: loss,
            participants: participants.len(),
            straggled,
            wallclock_ms,
        });

        if let (Some(tol), Some(prev)) = (cfg.stop_tol, prev_loss) {
            if (loss - prev).abs() < tol {
                quiet_rounds += 1;
            } else {
                quiet_rounds = 0;
            }
            if quiet_rounds >= cfg.stop_patience {
                converged_early = true;
                break;
            }
        }
        prev_loss = Some(loss);
    }

    Ok(TrainingOutcome {
        model,
        trace,
        converged_early,
    })
}

fn model_shape(data: &SplitData) -> Result<(usize, usize), FlError> {
    let mut shape: Option<(usize, usize)> = None;
    let mut check = |d: &crate::data::Dataset| -> Result<(), FlError> {
        let s = (d.feature_dim(), d.label_dim());
        match shape {
            None => {
                shape = Some(s);
                Ok(())
            }
            Some(existing) if existing == s => Ok(()),
            Some(existing) => Err(FlError::ModelShape {
                expected: existing,
                got: s,
            }),
        }
    };
    if let Some(pool) = &data.encrypted_pool {
        check(pool)?;
    }
    for block in data.locals.iter().flatten() {
        check(block)?;
    }
    shape.ok_or(FlError::NoTrainingData)
}

/// Loss averaged over reporting parties (shard counts as one party).
/// With nobody reporting, the previous round's value carries over; on
/// the very first round, everyone is evaluated as the baseline.
fn round_loss(
    data: &SplitData,
    shard: &Option<EncryptedShard>,
    participants: &[usize],
    model: &Array2<f64>,
    prev: Option<f64>,
) -> f64 {
    let mut total = 0.0;
    let mut parties = 0usize;
    if shard.is_some() {
        let pool = data.encrypted_pool.as_ref().expect("shard implies pool");
        total += local_loss(pool, model);
        parties += 1;
    }
    for &n in participants {
        let block = data.locals[n].as_ref().expect("participant holds data");
        total += local_loss(block, model);
        parties += 1;
    }
    if parties > 0 {
        return total / parties as f64;
    }
    if let Some(p) = prev {
        return p;
    }
    // First round, everyone straggled, no shard: baseline over all data.
    let mut total = 0.0;
    let mut parties = 0usize;
    for block in data.locals.iter().flatten() {
        total += local_loss(block, model);
        parties += 1;
    }
    total / parties.max(1) as f64
}
