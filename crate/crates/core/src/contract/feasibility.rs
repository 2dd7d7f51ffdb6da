//! Post-hoc verification that a contract book and its acceptance plan
//! satisfy every constraint the market imposes:
//!
//! - participation: the provider nets a non-negative utility at every type;
//! - truthful reporting: no type gains by picking another type's menu row
//!   (rows are compared on their encrypted part only — the local bundle is
//!   the same row-for-row and cancels);
//! - monotonicity: each user's offered sizes and payments are
//!   nondecreasing in the type index;
//! - capacity: each type's accepted total fits its encrypted-data budget;
//! - stock: no user is committed beyond the samples it holds, and local
//!   bundles respect the per-user local cap.
//!
//! The report carries the raw numbers alongside the verdicts so callers
//! can log or serialize exactly what was checked.

use serde::Serialize;

use super::{eta::accepted_total, ContractError, MarketInstance};
use crate::market::{map_enc_utility, map_utility, ContractBook, EtaAllocation, FEASIBILITY_TOL};

/// Slack allowed on sample-quantity comparisons (quantities run to 1e5+,
/// so this is far below one sample).
const QUANTITY_TOL: f64 = 1e-6;

/// Everything `verify_book` measured, with one verdict per constraint family.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    /// Provider utility at each type under truthful row selection.
    pub ir_values: Vec<f64>,
    /// `ic_matrix[i][j]`: encrypted-part utility of type `i` picking row `j`.
    pub ic_matrix: Vec<Vec<f64>>,
    /// Aggregate accepted encrypted quantity per type.
    pub aggregate_accepted: Vec<f64>,
    /// Every `ir_values[i]` is non-negative (up to tolerance).
    pub ir_ok: bool,
    /// Every diagonal of `ic_matrix` dominates its row (up to tolerance).
    pub ic_ok: bool,
    /// Every user's offered sizes and payments are nondecreasing in type.
    pub monotone_ok: bool,
    /// Accepted totals fit each type's encrypted-data capacity.
    pub capacity_ok: bool,
    /// Per-user committed samples fit stock; local bundles fit their caps.
    pub stock_ok: bool,
    /// Human-readable description of each violation found.
    pub violations: Vec<String>,
}

impl FeasibilityReport {
    /// True when every constraint family passed.
    pub fn is_fully_feasible(&self) -> bool {
        self.ir_ok && self.ic_ok && self.monotone_ok && self.capacity_ok && self.stock_ok
    }
}

/// Per-type participation check: provider utility at each type is
/// non-negative up to tolerance.
pub fn verify_ir(
    instance: &MarketInstance<'_>,
    book: &ContractBook,
    eta: &EtaAllocation,
) -> Result<Vec<bool>, ContractError> {
    instance.check_book(book)?;
    let mut flags = Vec::with_capacity(book.type_count());
    for i in 0..book.type_count() {
        let u = map_utility(i, eta, book, instance.map, instance.pricing)?;
        flags.push(u >= -FEASIBILITY_TOL);
    }
    Ok(flags)
}

/// Truthful-reporting check. Returns the full deviation matrix — entry
/// `(i, j)` is the encrypted-part utility of true type `i` taking row `j`
/// with its listed acceptance fractions — plus a diagnosis flag that is
/// true iff every row's maximum sits on the diagonal up to tolerance.
pub fn verify_ic(
    instance: &MarketInstance<'_>,
    book: &ContractBook,
    eta: &EtaAllocation,
) -> Result<(Vec<Vec<f64>>, bool), ContractError> {
    instance.check_book(book)?;
    let type_count = book.type_count();
    let mut matrix = Vec::with_capacity(type_count);
    for i in 0..type_count {
        let pi = instance.map.type_value(i);
        let mut row = Vec::with_capacity(type_count);
        for j in 0..type_count {
            let d_row: Vec<f64> = book.contracts().iter().map(|c| c.d_enc[j]).collect();
            let p_row: Vec<f64> = book.contracts().iter().map(|c| c.pay_enc[j]).collect();
            row.push(map_enc_utility(
                pi,
                eta.row(j),
                &d_row,
                &p_row,
                instance.pricing,
            )?);
        }
        matrix.push(row);
    }
    let diagnosis = (0..type_count).all(|i| {
        (0..type_count).all(|j| matrix[i][j] <= matrix[i][i] + FEASIBILITY_TOL)
    });
    Ok((matrix, diagnosis))
}

/// Offer-shape check: true iff every user's encrypted sizes and payments
/// are nondecreasing in the type index.
pub fn check_monotonicity(book: &ContractBook) -> bool {
    book.contracts().iter().all(|c| {
        c.d_enc.windows(2).all(|w| w[1] + QUANTITY_TOL >= w[0])
            && c.pay_enc.windows(2).all(|w| w[1] + QUANTITY_TOL >= w[0])
    })
}

/// Checks `book` with acceptance plan `eta` against all market constraints.
pub fn verify_book(
    instance: &MarketInstance<'_>,
    book: &ContractBook,
    eta: &EtaAllocation,
) -> Result<FeasibilityReport, ContractError> {
    instance.check_book(book)?;
    let type_count = book.type_count();
    let mu_count = book.mu_count();
    let mut violations = Vec::new();

    let mut ir_values = Vec::with_capacity(type_count);
    let mut ir_ok = true;
    for i in 0..type_count {
        let u = map_utility(i, eta, book, instance.map, instance.pricing)?;
        if u < -FEASIBILITY_TOL {
            ir_ok = false;
            violations.push(format!("type {i}: provider utility {u:.6} is negative"));
        }
        ir_values.push(u);
    }

    let (ic_matrix, ic_ok) = verify_ic(instance, book, eta)?;
    if !ic_ok {
        for i in 0..type_count {
            for j in 0..type_count {
                if ic_matrix[i][j] > ic_matrix[i][i] + FEASIBILITY_TOL {
                    violations.push(format!(
                        "type {i} prefers row {j} ({:.6} > {:.6})",
                        ic_matrix[i][j], ic_matrix[i][i]
                    ));
                }
            }
        }
    }

    let monotone_ok = check_monotonicity(book);
    if !monotone_ok {
        for (n, c) in book.contracts().iter().enumerate() {
            for i in 1..type_count {
                if c.d_enc[i] + QUANTITY_TOL < c.d_enc[i - 1] {
                    violations.push(format!(
                        "user {n}: offered size falls from type {} ({:.3}) to type {i} ({:.3})",
                        i - 1,
                        c.d_enc[i - 1],
                        c.d_enc[i]
                    ));
                }
                if c.pay_enc[i] + QUANTITY_TOL < c.pay_enc[i - 1] {
                    violations.push(format!(
                        "user {n}: payment falls from type {} ({:.6}) to type {i} ({:.6})",
                        i - 1,
                        c.pay_enc[i - 1],
                        c.pay_enc[i]
                    ));
                }
            }
        }
    }

    let aggregate_accepted: Vec<f64> =
        (0..type_count).map(|i| accepted_total(book, eta, i)).collect();
    let mut capacity_ok = true;
    for i in 0..type_count {
        let cap = instance.map.enc_cap(i);
        if aggregate_accepted[i] > cap + QUANTITY_TOL {
            capacity_ok = false;
            violations.push(format!(
                "type {i}: accepted {:.3} exceeds capacity {:.3}",
                aggregate_accepted[i], cap
            ));
        }
    }

    let mut stock_ok = true;
    for n in 0..mu_count {
        let c = book.contract(n);
        let profile = &instance.mus[n];
        if c.d_local > profile.d_local_cap + QUANTITY_TOL {
            stock_ok = false;
            violations.push(format!(
                "user {n}: local bundle {:.3} exceeds local cap {:.3}",
                c.d_local, profile.d_local_cap
            ));
        }
        for i in 0..type_count {
            let committed = eta.eta(i, n) * c.d_enc[i] + c.d_local;
            if committed > profile.d_total + QUANTITY_TOL {
                stock_ok = false;
                violations.push(format!(
                    "user {n} at type {i}: committed {:.3} exceeds stock {:.3}",
                    committed, profile.d_total
                ));
            }
        }
    }

    Ok(FeasibilityReport {
        ir_values,
        ic_matrix,
        aggregate_accepted,
        ir_ok,
        ic_ok,
        monotone_ok,
        capacity_ok,
        stock_ok,
        violations,
    })
}
