//! Reference contract schemes the equilibrium is measured against: a
//! proportional-split baseline and the full-information upper bound.
//!
//! - [`baseline_proportional`] mirrors the naive scheme: every user
//!   offers each type a slice of the type's capacity proportional to the
//!   user's share of the total data stock, fills its local cap, and is
//!   paid by linear pricing. No screening, no optimization.
//! - [`snap_book_to_grid`] floors a book's quantities onto the solver's
//!   quantity grid, so seeds and comparators quote contracts in the same
//!   units the searches do.
//! - [`solve_info_symmetry`] assumes the provider's type is publicly
//!   known, so menus collapse to a single bundle per user (every row of
//!   the offer is the same). Users take turns optimizing their bundle on
//!   the shared quantity grid — the same coordinate-ascent machinery as
//!   the equilibrium sweep, minus the screening chains — subject to
//!   capacity at the known type and one participation constraint. Its
//!   welfare upper-bounds the equilibrium's.

use super::best_response::{CAP_TOL, CHAIN_TOL, MAX_GRID_POINTS};
use super::eta::solve_eta;
use super::{better_offer, ContractError, MarketInstance, SolverConfig};
use crate::market::{
    mu_realized_utility, privacy_cost, ContractBook, MuContract, PricingParams,
};

/// Builds the proportional-split baseline book: user `n` offers type `i`
/// `min(cap_i · D_n / Σ_m D_m, D_n − local cap)` encrypted samples plus
/// its full local cap, priced linearly. Offers never promise samples the
/// local side already consumes, so the book stays within stock however
/// much the provider accepts.
pub fn baseline_proportional(
    instance: &MarketInstance<'_>,
) -> Result<ContractBook, ContractError> {
    let total_stock: f64 = instance.mus.iter().map(|m| m.d_total).sum();
    let type_count = instance.type_count();
    let mut d_locals = Vec::with_capacity(instance.mu_count());
    let mut d_enc = Vec::with_capacity(instance.mu_count());
    for mu in instance.mus {
        let enc_room = (mu.d_total - mu.d_local_cap).max(0.0);
        let share = mu.d_total / total_stock;
        let row: Vec<f64> = (0..type_count)
            .map(|i| (instance.map.enc_cap(i) * share).min(enc_room))
            .collect();
        d_locals.push(mu.d_local_cap);
        d_enc.push(row);
    }
    Ok(ContractBook::linear(
        type_count,
        &d_locals,
        &d_enc,
        instance.pricing,
    )?)
}

/// Floors every quantity in `book` onto the `step` grid and re-prices
/// the menus linearly. Menus are searched — and therefore quoted — in
/// grid units, so books built from exact proportional shares are snapped
/// before any search or comparison; otherwise a comparator would hold
/// sub-grid crumbs no grid menu can match. Flooring only shrinks
/// quantities, so feasibility and monotonicity survive.
pub fn snap_book_to_grid(
    book: &ContractBook,
    step: f64,
    pricing: &PricingParams,
) -> Result<ContractBook, ContractError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(ContractError::BadConfig(format!(
            "grid step must be positive and finite, got {step}"
        )));
    }
    let snap = |q: f64| (q / step).floor() * step;
    let mut d_locals = Vec::with_capacity(book.mu_count());
    let mut d_enc = Vec::with_capacity(book.mu_count());
    for n in 0..book.mu_count() {
        let c = book.contract(n);
        d_locals.push(snap(c.d_local));
        d_enc.push(c.d_enc.iter().map(|&q| snap(q)).collect::<Vec<f64>>());
    }
    Ok(ContractBook::linear(
        book.type_count(),
        &d_locals,
        &d_enc,
        pricing,
    )?)
}

/// Solves the full-information benchmark at the publicly known type
/// `i_true`: coordinate ascent over users on the shared quantity grid,
/// each maximizing its realized utility subject to the provider's
/// capacity at `i_true` and the provider's participation. Menus carry
/// the same bundle in every row, since no screening is needed.
pub fn solve_info_symmetry(
    i_true: usize,
    instance: &MarketInstance<'_>,
    config: &SolverConfig,
) -> Result<ContractBook, ContractError> {
    config.validate()?;
    instance.map.check_type(i_true)?;
    let seed = baseline_proportional(instance)?;
    let mut book = snap_book_to_grid(&seed, config.grid_step, instance.pricing)?;
    // The baseline differentiates rows by type; flatten each menu to the
    // known type's bundle so the starting point lives in this scheme's
    // contract space.
    for n in 0..book.mu_count() {
        let bundle = book.contract(n).d_enc[i_true];
        let flat = MuContract::linear(
            book.contract(n).d_local,
            vec![bundle; book.type_count()],
            instance.pricing,
        );
        book.set_contract(n, flat)?;
    }
    for _ in 0..config.max_iters {
        let eta = solve_eta(instance, &book)?;
        let mut changed = false;
        for n in 0..book.mu_count() {
            let incumbent = mu_realized_utility(
                i_true,
                n,
                &book,
                &eta,
                instance.mus,
                instance.map,
                instance.pricing,
            )?;
            if let Some((bundle, value)) = best_bundle(n, i_true, &book, &eta, instance, config)? {
                if value > incumbent + config.sigma {
                    book.set_contract(n, bundle)?;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(book)
}

/// Grid search for user `n`'s best single bundle (encrypted size, local
/// size) at the known type, against fixed rivals and fixed acceptance
/// fractions. Returns `None` when no grid point satisfies participation.
fn best_bundle(
    n: usize,
    i_true: usize,
    book: &ContractBook,
    eta: &crate::market::EtaAllocation,
    instance: &MarketInstance<'_>,
    config: &SolverConfig,
) -> Result<Option<(MuContract, f64)>, ContractError> {
    let pricing = instance.pricing;
    let mu = &instance.mus[n];
    let delta = config.grid_step;
    let u_map = instance.unit_enc_cost();
    let margin = pricing.alpha_enc - pricing.gamma_tx;
    let pi = instance.map.type_value(i_true);
    let e_n = mu.energy_per_sample();

    let mut other_acc = 0.0;
    let mut other_cost = 0.0;
    let mut other_local = 0.0;
    let mut other_pay_local = 0.0;
    for m in 0..book.mu_count() {
        if m == n {
            continue;
        }
        let c = book.contract(m);
        let acc = eta.eta(i_true, m) * c.d_enc[i_true];
        other_acc += acc;
        other_cost += eta.eta(i_true, m) * c.pay_enc[i_true]
            + pricing.map_energy_per_sample() * acc;
        other_local += c.d_local;
        other_pay_local += c.pay_local;
    }
    let cap_left = (instance.map.enc_cap(i_true) - other_acc).max(0.0);
    let frac = eta.eta(i_true, n);

    let k_grid = (mu.d_total / delta).floor() as usize;
    if k_grid + 1 > MAX_GRID_POINTS {
        return Err(ContractError::BadConfig(format!(
            "quantity grid for user {n} needs {} points; raise grid_step",
            k_grid + 1
        )));
    }
    let local_steps = (mu.d_local_cap / delta).floor() as usize;

    let mut best: Option<(f64, f64, usize, usize)> = None; // value, total, c, j
    for c in 0..=local_steps {
        let l = delta * c as f64;
        let local_net = pricing.upsilon_local * (other_local + l).sqrt()
            - (other_pay_local + pricing.alpha_local * l);
        let local_val = (pricing.alpha_local - e_n) * l;
        let j_limit = ((mu.d_total - l) / delta).floor() as usize;
        for j in 0..=j_limit.min(k_grid) {
            let a = frac * delta * j as f64;
            if a > cap_left + CAP_TOL {
                continue;
            }
            let provider = pi * pricing.upsilon_enc * (other_acc + a).sqrt()
                - (other_cost + u_map * a);
            if provider + CHAIN_TOL < -local_net {
                continue;
            }
            let toll = privacy_cost(mu.eps_priv, a, mu.a_fn, pricing.beta_priv)?;
            let value = margin * a - toll + local_val;
            let total = delta * j as f64 + l;
            let replace = match best {
                None => true,
                Some((bv, bt, _, _)) => better_offer(value, total, bv, bt),
            };
            if replace {
                best = Some((value, total, c, j));
            }
        }
    }
    Ok(best.map(|(value, _, c, j)| {
        let bundle = MuContract::linear(
            delta * c as f64,
            vec![delta * j as f64; book.type_count()],
            pricing,
        );
        (bundle, value)
    }))
}
