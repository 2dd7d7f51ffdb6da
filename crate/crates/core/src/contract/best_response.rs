//! One user's optimal menu against fixed rivals and fixed acceptance
//! fractions: the per-user step of the equilibrium sweep.
//!
//! The search space is a quantity grid. A menu assigns every provider
//! type an offered encrypted size `g_i = j_i·Δ` plus one local size
//! `l = c·Δ`, with payments induced by linear pricing. The constraints:
//!
//! - offered sizes nondecreasing in the type index (menu monotonicity);
//! - both adjacent screening chains on the provider's row utilities, so
//!   no type prefers a neighboring row — with monotone offers this
//!   telescopes to the full truthful-reporting set;
//! - provider participation at the lowest type (the chains lift it to
//!   every other type);
//! - acceptance within each type's remaining encrypted capacity;
//! - `g_{last} + l` within the user's data stock (offers never promise
//!   samples the user does not hold, whatever fraction is accepted);
//! - `l` within the user's local cap.
//!
//! Because the objective separates per type and every constraint couples
//! at most adjacent types, an exact dynamic program over (type, grid
//! index) finds the optimum in `O(I·K²)` per participation mask, where
//! `K` is the grid size. The local size only shifts the participation
//! threshold and truncates the final states, so one DP per distinct
//! threshold mask serves every local-size candidate sharing it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{better_offer, ContractError, MarketInstance, SolverConfig, VALUE_TIE_EPS};
use crate::market::{privacy_cost, ContractBook, EtaAllocation, MuContract};

/// Slack on screening-chain and participation comparisons inside the
/// search; stricter than the verifier's tolerance, so chosen menus
/// always re-verify.
pub(crate) const CHAIN_TOL: f64 = 1e-12;
/// Slack on acceptance-capacity comparisons (samples).
pub(crate) const CAP_TOL: f64 = 1e-9;
/// Refuse quantity grids beyond this many points per type.
pub(crate) const MAX_GRID_POINTS: usize = 50_000;

/// A chosen menu and the expected utility it earns its owner.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub contract: MuContract,
    /// Expected utility of `contract` under the acceptance fractions the
    /// search was given.
    pub expected_utility: f64,
}

/// One assembled menu candidate (a local size plus a backtracked row of
/// encrypted offers).
struct Candidate {
    value: f64,
    total: f64,
    d_enc: Vec<f64>,
    d_local: f64,
}

/// Tables of one finished dynamic program, reusable across local sizes
/// that share a participation mask.
struct DpTables {
    mask: Vec<bool>,
    /// `best_prefix[j]` = best final-layer value over final states `0..=j`
    /// together with its state (ties keep the smallest state).
    best_prefix: Vec<(f64, usize)>,
    parent: Vec<Vec<usize>>,
}

/// Computes user `n`'s optimal menu against the fixed `book` (its own
/// entry is ignored) and fixed acceptance fractions `eta`. Falls back to
/// the all-zero menu when no grid point satisfies the constraints.
pub fn best_response(
    n: usize,
    book: &ContractBook,
    eta: &EtaAllocation,
    instance: &MarketInstance<'_>,
    config: &SolverConfig,
) -> Result<BestResponse, ContractError> {
    instance.check_book(book)?;
    config.validate()?;
    book.check_mu(n)?;

    let pricing = instance.pricing;
    let map = instance.map;
    let mu = &instance.mus[n];
    let type_count = book.type_count();
    let delta = config.grid_step;
    let e_map = pricing.map_energy_per_sample();
    let u_map = instance.unit_enc_cost();
    let ups_o = pricing.upsilon_enc;
    let margin = pricing.alpha_enc - pricing.gamma_tx;

    // Everything the rivals contribute, per type row and on the local side.
    let mut other_acc = vec![0.0; type_count];
    let mut other_cost = vec![0.0; type_count];
    let mut other_local = 0.0;
    let mut other_pay_local = 0.0;
    for m in 0..book.mu_count() {
        if m == n {
            continue;
        }
        let c = book.contract(m);
        other_local += c.d_local;
        other_pay_local += c.pay_local;
        for i in 0..type_count {
            let acc = eta.eta(i, m) * c.d_enc[i];
            other_acc[i] += acc;
            other_cost[i] += eta.eta(i, m) * c.pay_enc[i] + e_map * acc;
        }
    }

    let k_grid = (mu.d_total / delta).floor() as usize;
    if k_grid + 1 > MAX_GRID_POINTS {
        return Err(ContractError::BadConfig(format!(
            "quantity grid for user {n} needs {} points; raise grid_step",
            k_grid + 1
        )));
    }
    let k = k_grid + 1;

    // Per-state tables. State (i, j) means "offer j·Δ to type i"; `a` is
    // the quantity the provider then actually trains.
    let mut sqrt_s = vec![vec![0.0; k]; type_count];
    let mut cost_s = vec![vec![0.0; k]; type_count];
    let mut w = vec![vec![0.0; k]; type_count];
    let mut state_ok = vec![vec![false; k]; type_count];
    for i in 0..type_count {
        let frac = eta.eta(i, n);
        let cap_left = (map.enc_cap(i) - other_acc[i]).max(0.0);
        let phi = map.prob(i);
        for j in 0..k {
            let a = frac * delta * j as f64;
            sqrt_s[i][j] = (other_acc[i] + a).sqrt();
            cost_s[i][j] = other_cost[i] + u_map * a;
            let toll = privacy_cost(mu.eps_priv, a, mu.a_fn, pricing.beta_priv)?;
            w[i][j] = phi * (margin * a - toll);
            state_ok[i][j] = a <= cap_left + CAP_TOL;
        }
    }
    // Provider's row utility when its value-per-gain is `pi` and the row
    // is (i, j): pi·υ·√s − (rivals' cost + own linear cost).
    let row_u = |pi: f64, i: usize, j: usize| pi * ups_o * sqrt_s[i][j] - cost_s[i][j];

    // Local-size candidates and their participation thresholds: the
    // provider's net local take shifts how much the lowest type's
    // encrypted row must earn.
    let pi0 = map.type_value(0);
    let local_steps = (mu.d_local_cap / delta).floor() as usize;
    let e_n = mu.energy_per_sample();
    let mut tables: Vec<DpTables> = Vec::new();
    let mut candidates: Vec<Candidate> = Vec::new();
    for c in 0..=local_steps {
        let l = delta * c as f64;
        let local_net = pricing.upsilon_local * (other_local + l).sqrt()
            - (other_pay_local + pricing.alpha_local * l);
        let mask: Vec<bool> = (0..k)
            .map(|j| state_ok[0][j] && row_u(pi0, 0, j) + CHAIN_TOL >= -local_net)
            .collect();
        let table_idx = match tables.iter().position(|t| t.mask == mask) {
            Some(idx) => idx,
            None => {
                tables.push(run_dp(&mask, &state_ok, &w, &row_u, map, type_count, k));
                tables.len() - 1
            }
        };
        let j_limit = ((mu.d_total - l) / delta).floor() as usize;
        let (best, arg) = tables[table_idx].best_prefix[j_limit.min(k - 1)];
        if !best.is_finite() {
            continue;
        }
        let mut js = vec![0usize; type_count];
        js[type_count - 1] = arg;
        for i in (1..type_count).rev() {
            js[i - 1] = tables[table_idx].parent[i][js[i]];
        }
        let d_enc: Vec<f64> = js.iter().map(|&j| delta * j as f64).collect();
        let total = d_enc.iter().sum::<f64>() + l;
        candidates.push(Candidate {
            value: best + (pricing.alpha_local - e_n) * l,
            total,
            d_enc,
            d_local: l,
        });
    }

    let chosen = pick_candidate(&candidates, n, config);
    Ok(match chosen {
        Some(c) => BestResponse {
            contract: MuContract::linear(c.d_local, c.d_enc.clone(), pricing),
            expected_utility: c.value,
        },
        None => BestResponse {
            contract: MuContract::linear(0.0, vec![0.0; type_count], pricing),
            expected_utility: 0.0,
        },
    })
}

/// Runs the chain dynamic program under one participation mask.
fn run_dp(
    mask: &[bool],
    state_ok: &[Vec<bool>],
    w: &[Vec<f64>],
    row_u: &dyn Fn(f64, usize, usize) -> f64,
    map: &crate::market::MapTypeProfile,
    type_count: usize,
    k: usize,
) -> DpTables {
    let mut dp = vec![vec![f64::NEG_INFINITY; k]; type_count];
    let mut parent = vec![vec![usize::MAX; k]; type_count];
    for j in 0..k {
        if mask[j] {
            dp[0][j] = w[0][j];
        }
    }
    for i in 1..type_count {
        let pi = map.type_value(i);
        let pi_prev = map.type_value(i - 1);
        for j in 0..k {
            if !state_ok[i][j] {
                continue;
            }
            let u_hi_here = row_u(pi, i, j);
            let u_lo_here = row_u(pi_prev, i, j);
            let mut best = f64::NEG_INFINITY;
            let mut arg = usize::MAX;
            for jp in 0..=j {
                let v = dp[i - 1][jp];
                if !v.is_finite() || v <= best {
                    continue;
                }
                // The new type must not envy the previous row, and the
                // previous type must not envy the new one.
                if u_hi_here + CHAIN_TOL < row_u(pi, i - 1, jp) {
                    continue;
                }
                if row_u(pi_prev, i - 1, jp) + CHAIN_TOL < u_lo_here {
                    continue;
                }
                best = v;
                arg = jp;
            }
            if arg != usize::MAX {
                dp[i][j] = w[i][j] + best;
                parent[i][j] = arg;
            }
        }
    }
    let last = &dp[type_count - 1];
    let mut best_prefix = Vec::with_capacity(k);
    let mut run = (f64::NEG_INFINITY, usize::MAX);
    for (j, &v) in last.iter().enumerate() {
        if v.is_finite() && v > run.0 {
            run = (v, j);
        }
        best_prefix.push(run);
    }
    DpTables {
        mask: mask.to_vec(),
        best_prefix,
        parent,
    }
}

/// Applies the tie policy: highest value, then (unseeded) smallest total
/// offered data in scan order, or (seeded) a uniform draw among the
/// value-tied candidates.
fn pick_candidate<'c>(
    candidates: &'c [Candidate],
    n: usize,
    config: &SolverConfig,
) -> Option<&'c Candidate> {
    if candidates.is_empty() {
        return None;
    }
    match config.seed {
        None => {
            let mut best: Option<&Candidate> = None;
            for c in candidates {
                let replace = match best {
                    None => true,
                    Some(b) => better_offer(c.value, c.total, b.value, b.total),
                };
                if replace {
                    best = Some(c);
                }
            }
            best
        }
        Some(seed) => {
            let top = candidates
                .iter()
                .map(|c| c.value)
                .fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<&Candidate> = candidates
                .iter()
                .filter(|c| c.value >= top - VALUE_TIE_EPS)
                .collect();
            let mut rng = ChaCha20Rng::seed_from_u64(
                seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            Some(tied[rng.random_range(0..tied.len())])
        }
    }
}
