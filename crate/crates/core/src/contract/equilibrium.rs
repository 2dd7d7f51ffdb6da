//! The multi-user contract iteration: repeated best-response sweeps
//! until no user wants to move.
//!
//! Each sweep freezes the provider's acceptance fractions (solved on the
//! book as the sweep starts), then visits users in ascending id. A user
//! switches menus only when its best response improves its expected
//! utility by more than `sigma`; later users in the same sweep already
//! see the switch. When re-solving the fractions has left the standing
//! book infeasible, the sweep instead replaces every menu with its best
//! response outright — stale menus are not playable, so they get no
//! no-regret protection. The run converges when a sweep starts from a
//! verified book, changes no menu, and every user's recorded expected
//! utility moved at most `sigma` since the previous sweep — so the last
//! two sweeps of the trace always agree within `sigma` — and is flagged
//! non-converged when the sweep budget runs out first.

use super::best_response::best_response;
use super::comparators::{baseline_proportional, snap_book_to_grid};
use super::eta::solve_eta;
use super::feasibility::verify_book;
use super::{
    ContractError, EquilibriumResult, MarketInstance, SolverConfig, UtilityTraceRow,
};
use crate::market::mu_expected_utility;

/// Runs best-response sweeps from the proportional baseline (snapped to
/// the quantity grid, the only menus a sweep can play) until no user
/// moves, and returns the final book, the acceptance fractions solved on
/// it, and the per-sweep utility trace.
///
/// A converged book is always feasible under its own acceptance
/// fractions: convergence requires a sweep that started from a verified
/// book and changed nothing, so the verified book is the one returned.
pub fn iterate_contracts(
    instance: &MarketInstance<'_>,
    config: &SolverConfig,
) -> Result<EquilibriumResult, ContractError> {
    config.validate()?;
    let seed = baseline_proportional(instance)?;
    let mut book = snap_book_to_grid(&seed, config.grid_step, instance.pricing)?;
    let mu_count = book.mu_count();
    let mut utility_trace: Vec<UtilityTraceRow> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for sweep in 0..config.max_iters {
        iterations = sweep + 1;
        let eta = solve_eta(instance, &book)?;
        // Menus were certified against the fractions current when their
        // owners last moved; re-solving the fractions can leave the
        // standing book infeasible. An infeasible menu is not playable,
        // so such sweeps replace every menu with its re-optimized best
        // response instead of letting the no-regret filter shield it.
        let feasible = verify_book(instance, &book, &eta)?.is_fully_feasible();
        let mut changed = false;
        for n in 0..mu_count {
            let incumbent = mu_expected_utility(
                n,
                &book,
                &eta,
                instance.mus,
                instance.map,
                instance.pricing,
            )?;
            let reply = best_response(n, &book, &eta, instance, config)?;
            let accept = if feasible {
                reply.expected_utility > incumbent + config.sigma
            } else {
                reply.contract != *book.contract(n)
            };
            if accept {
                book.set_contract(n, reply.contract)?;
                changed = true;
            }
        }
        for n in 0..mu_count {
            utility_trace.push(UtilityTraceRow {
                sweep,
                mu_index: n,
                expected_utility: mu_expected_utility(
                    n,
                    &book,
                    &eta,
                    instance.mus,
                    instance.map,
                    instance.pricing,
                )?,
            });
        }
        if feasible && !changed && utilities_settled(&utility_trace, sweep, mu_count, config.sigma) {
            converged = true;
            break;
        }
    }

    let eta = solve_eta(instance, &book)?;
    Ok(EquilibriumResult {
        book,
        eta,
        iterations,
        converged,
        utility_trace,
    })
}

/// True when the sweep's recorded utilities sit within `sigma` of the
/// previous sweep's, for every user. The very first sweep settles
/// trivially: there is no previous sweep to disagree with.
fn utilities_settled(
    trace: &[UtilityTraceRow],
    sweep: usize,
    mu_count: usize,
    sigma: f64,
) -> bool {
    if sweep == 0 {
        return true;
    }
    let this = &trace[sweep * mu_count..(sweep + 1) * mu_count];
    let prev = &trace[(sweep - 1) * mu_count..sweep * mu_count];
    this.iter()
        .zip(prev)
        .all(|(a, b)| (a.expected_utility - b.expected_utility).abs() <= sigma)
}
