//! The provider's acceptance problem: which fractions of each user's
//! encrypted offer to actually train on.
//!
//! For a fixed menu row `i` the provider maximizes
//!
//! ```text
//! π_i·υ·√(Σ_n a_n) − Σ_n u_n·a_n,   0 ≤ a_n ≤ d_n,   Σ_n a_n ≤ cap_i
//! ```
//!
//! where `a_n = η_n·d_n` is the accepted quantity and
//! `u_n = pay_n/d_n + e_map` the all-in unit cost of user `n`'s data.
//! The objective is concave in the total and linear in who supplies it,
//! so the exact optimum is a water-filling greedy: buy cheapest first,
//! and stop at the point `s* = (π_i·υ/(2u))²` where the marginal gain
//! `π_i·υ/(2√s)` has dropped to the current unit cost — or at the
//! capacity, whichever bites first.
//!
//! Offers tied at the marginal unit cost (the generic case under linear
//! pricing, where every user quotes the same rate) are rationed pro
//! rata: the group shares one acceptance fraction. The provider is
//! indifferent — only the accepted total enters its objective — and the
//! symmetric split keeps one user's enlarged offer from confiscating a
//! rival's entire allocation, which would make payoffs jump discretely
//! under menu changes.

use super::{ContractError, MarketInstance};
use crate::market::{ContractBook, EtaAllocation};

/// Relative spread under which unit costs count as tied. Linear-pricing
/// ties differ only by floating-point rounding of `(α·d)/d`, far inside
/// this window; deliberately distinct rates sit far outside it.
const UNIT_COST_TIE_REL: f64 = 1e-9;

/// Solves the acceptance problem for every menu row of `book`.
pub fn solve_eta(
    instance: &MarketInstance<'_>,
    book: &ContractBook,
) -> Result<EtaAllocation, ContractError> {
    instance.check_book(book)?;
    let e_map = instance.pricing.map_energy_per_sample();
    let upsilon = instance.pricing.upsilon_enc;
    let mu_count = book.mu_count();
    let mut rows = Vec::with_capacity(book.type_count());

    for i in 0..book.type_count() {
        let pi = instance.map.type_value(i);
        let cap = instance.map.enc_cap(i);

        // (unit cost, user index, offered quantity), cheapest first.
        let mut offers: Vec<(f64, usize, f64)> = Vec::with_capacity(mu_count);
        for n in 0..mu_count {
            let c = book.contract(n);
            let d = c.d_enc[i];
            if d > 0.0 {
                offers.push((c.pay_enc[i] / d + e_map, n, d));
            }
        }
        offers.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut row = vec![0.0; mu_count];
        let mut s = 0.0f64;
        let mut g = 0;
        while g < offers.len() && s < cap {
            let head_cost = offers[g].0;
            let mut h = g + 1;
            while h < offers.len()
                && offers[h].0 - head_cost <= head_cost.abs() * UNIT_COST_TIE_REL + 1e-15
            {
                h += 1;
            }
            // Beyond s* the marginal gain π·υ/(2√s) is below this unit
            // cost; cheaper groups never reach s* after costlier ones, so
            // once a target is passed every later target is passed too.
            let s_star = if head_cost > 0.0 {
                let root = pi * upsilon / (2.0 * head_cost);
                root * root
            } else {
                f64::INFINITY
            };
            let room = cap.min(s_star) - s;
            if room <= 0.0 {
                break;
            }
            let total_d: f64 = offers[g..h].iter().map(|o| o.2).sum();
            if total_d <= room {
                for &(_, n, _) in &offers[g..h] {
                    row[n] = 1.0;
                }
                s += total_d;
            } else {
                let fraction = room / total_d;
                for &(_, n, _) in &offers[g..h] {
                    row[n] = fraction;
                }
                s += room;
            }
            g = h;
        }
        rows.push(row);
    }
    Ok(EtaAllocation::new(rows)?)
}

/// Total accepted encrypted quantity of row `i`: `Σ_n η_{i,n}·d_{i,n}`.
pub fn accepted_total(book: &ContractBook, eta: &EtaAllocation, i: usize) -> f64 {
    (0..book.mu_count())
        .map(|n| eta.eta(i, n) * book.contract(n).d_enc[i])
        .sum()
}
