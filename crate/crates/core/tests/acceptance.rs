//! Acceptance checks for the marketplace simulator, end to end: contract
//! feasibility at reference scale, screening soundness on random
//! instances, equilibrium optimality against exhaustive menu search,
//! welfare ordering of the comparator arms, sweep-count scaling, gradient
//! and cipher correctness, straggler resilience, loss-bound dominance,
//! and byte-level determinism.
//!
//! Each check prints one `cNN ...: PASS` line with its measured numbers
//! (visible under `--nocapture`); a failed assertion is the FAIL line.

use std::fs;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use fedmarket_core::contract::comparators::{
    baseline_proportional, snap_book_to_grid, solve_info_symmetry,
};
use fedmarket_core::contract::equilibrium::iterate_contracts;
use fedmarket_core::contract::eta::solve_eta;
use fedmarket_core::contract::feasibility::{check_monotonicity, verify_ic, verify_ir};
use fedmarket_core::data::{
    materialize_split, partition_non_iid, split_by_share, synth_dataset, Dataset,
};
use fedmarket_core::fl::bound::{
    convergence_bound, hessian_extreme_eigenvalues, pooled_hessian, ConvergenceBoundParams,
};
use fedmarket_core::fl::encrypted::EncryptedShard;
use fedmarket_core::fl::model::{gradient_sum, least_squares_fit, local_gradient, local_loss};
use fedmarket_core::fl::training::{run_training, StragglerModel, TrainingConfig};
use fedmarket_core::he::matrix::CipherMatrix;
use fedmarket_core::he::{dec, enc, hadd, hmul, hmul_plain, hsub, keygen, DEFAULT_SCALE};
use fedmarket_core::market::{
    map_enc_utility, map_utility, mu_expected_utility, social_welfare,
};
use fedmarket_core::{
    run_scenario, ContractBook, MapTypeProfile, MarketInstance, MuContract, MuProfile,
    PricingParams, ScenarioConfig, SolverConfig,
};

/// Slack for boolean feasibility comparisons, matching the verifiers.
const TOL: f64 = 1e-9;

/// Frobenius norm of a matrix.
fn fro(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Random small markets shared by the screening and oracle checks
// ---------------------------------------------------------------------------

struct SmallMarket {
    mus: Vec<MuProfile>,
    map: MapTypeProfile,
    pricing: PricingParams,
}

/// Draws a random miniature market: `mu_count` users with stocks below
/// `max_stock`, `type_count` strictly increasing type values, a prior
/// with mass on every type, and capacity that may or may not bind.
fn random_small_market(
    rng: &mut ChaCha20Rng,
    mu_count: usize,
    type_count: usize,
    max_stock: f64,
) -> SmallMarket {
    let alpha_enc = rng.random_range(0.005..0.02);
    let pricing = PricingParams {
        alpha_enc,
        alpha_local: rng.random_range(0.002..0.006),
        upsilon_enc: rng.random_range(0.3..1.0),
        upsilon_local: rng.random_range(0.02..0.10),
        beta_priv: 1.0,
        gamma_tx: alpha_enc * rng.random_range(0.05..0.8),
        map_zeta: 0.0,
        map_cycles_per_sample: 0.0,
        map_freq: 0.0,
    };
    let mut mus = Vec::with_capacity(mu_count);
    let mut total = 0.0;
    for id in 0..mu_count {
        let d_total = rng.random_range(600.0..max_stock);
        total += d_total;
        mus.push(MuProfile {
            id,
            d_total,
            d_local_cap: d_total * rng.random_range(0.0..0.25),
            eps_priv: rng.random_range(0.3..1.0),
            a_fn: rng.random_range(5.0..20.0),
            // e_n = zeta here (one cycle per sample at unit frequency),
            // straddling alpha_local so local work is not always a win.
            zeta: rng.random_range(0.0..0.008),
            cycles_per_sample: 1.0,
            freq: 1.0,
            rate: 1e6,
            compute: 1.0,
        });
    }
    let mut values = Vec::with_capacity(type_count);
    let mut v = rng.random_range(0.5..1.5);
    for _ in 0..type_count {
        values.push(v);
        v += rng.random_range(0.3..1.0);
    }
    let raw: Vec<f64> = (0..type_count).map(|_| rng.random_range(0.2..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut dist: Vec<f64> = raw.iter().map(|w| w / sum).collect();
    let head: f64 = dist[..type_count - 1].iter().sum();
    dist[type_count - 1] = 1.0 - head;
    let d_max = total * rng.random_range(0.6..1.5);
    let map = MapTypeProfile::new(values, dist, d_max).unwrap();
    SmallMarket { mus, map, pricing }
}

// ---------------------------------------------------------------------------
// c01 — reference-scale equilibrium passes the full constraint set
// ---------------------------------------------------------------------------

#[test]
fn c01_default_equilibrium_is_feasible() {
    let start = Instant::now();
    let config = ScenarioConfig::default();
    let (mus, map) = fedmarket_core::scenario::assemble_market(&config).unwrap();
    let instance = MarketInstance::new(&mus, &map, &config.pricing).unwrap();
    let result = iterate_contracts(&instance, &config.solver).unwrap();
    assert!(
        result.converged,
        "equilibrium did not settle in {} sweeps",
        result.iterations
    );

    let ir = verify_ir(&instance, &result.book, &result.eta).unwrap();
    for (i, ok) in ir.iter().enumerate() {
        assert!(*ok, "provider participation fails at type {i}");
    }
    let (ic, diagonal_dominant) = verify_ic(&instance, &result.book, &result.eta).unwrap();
    assert!(diagonal_dominant, "truthful row choice is not optimal");
    for (i, row) in ic.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!(
                ic[i][i] + TOL >= *v,
                "type {i} prefers row {j}: {} < {v}",
                ic[i][i]
            );
        }
    }
    assert!(check_monotonicity(&result.book), "menus are not monotone");

    let mut prev = f64::NEG_INFINITY;
    for i in 0..map.type_count() {
        let u = map_utility(i, &result.eta, &result.book, &map, &config.pricing).unwrap();
        assert!(
            u + TOL >= prev,
            "provider utility drops from {prev} to {u} at type {i}"
        );
        prev = u;
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:.2?}");
    println!(
        "c01 reference-market equilibrium feasibility: PASS — {} types, {} users, \
         {} sweeps, {elapsed:.2?}",
        map.type_count(),
        mus.len(),
        result.iterations
    );
}

// ---------------------------------------------------------------------------
// c02 — adjacent screening constraints imply the full set on random markets
// ---------------------------------------------------------------------------

#[test]
fn c02_random_small_markets_satisfy_every_ir_and_ic_pair() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xC02);
    let config = SolverConfig::default();
    let trials = 60;
    let mut violations = Vec::new();
    let mut pairs_checked = 0usize;
    let mut settled = 0usize;
    for trial in 0..trials {
        let mu_count = rng.random_range(2..=4usize);
        let market = random_small_market(&mut rng, mu_count, 3, 3000.0);
        let instance =
            MarketInstance::new(&market.mus, &market.map, &market.pricing).unwrap();
        let result = iterate_contracts(&instance, &config).unwrap();
        if !result.converged {
            // Only settled books are certified outputs; the flag already
            // reports these honestly.
            continue;
        }
        settled += 1;

        let ir = verify_ir(&instance, &result.book, &result.eta).unwrap();
        for (i, ok) in ir.iter().enumerate() {
            if !*ok {
                violations.push(format!("trial {trial}: participation fails at type {i}"));
            }
        }
        let (ic, _) = verify_ic(&instance, &result.book, &result.eta).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                pairs_checked += 1;
                if ic[i][i] + TOL < ic[i][j] {
                    violations.push(format!(
                        "trial {trial}: type {i} prefers row {j} ({} < {})",
                        ic[i][i], ic[i][j]
                    ));
                }
            }
        }
    }
    assert!(violations.is_empty(), "{violations:#?}");
    assert!(settled >= 50, "only {settled} of {trials} markets settled");
    println!(
        "c02 screening soundness on random markets: PASS — {settled} settled markets \
         of {trials}, {pairs_checked} ordered type pairs, zero violations"
    );
}

// ---------------------------------------------------------------------------
// c03 — equilibrium menus beat exhaustive unilateral deviations
// ---------------------------------------------------------------------------

/// Matches the search's internal comparison tolerances.
const CHAIN_TOL: f64 = 1e-12;
const CAP_TOL: f64 = 1e-9;

/// Exhaustive best deviation for user `n` on a two-type market: every
/// grid menu (local size, monotone offer pair) that keeps the book
/// screening-feasible, valued under the fixed acceptance fractions.
fn best_deviation_two_types(
    n: usize,
    book: &ContractBook,
    eta: &fedmarket_core::EtaAllocation,
    instance: &MarketInstance<'_>,
    step: f64,
) -> f64 {
    let mu = &instance.mus[n];
    let kg = (mu.d_total / step).floor() as usize;
    let kl = (mu.d_local_cap / step).floor() as usize;
    let pricing = instance.pricing;
    let mut best = f64::NEG_INFINITY;
    for c in 0..=kl {
        let l = step * c as f64;
        for j0 in 0..=kg {
            for j1 in j0..=kg {
                if step * j1 as f64 + l > mu.d_total + CAP_TOL {
                    continue;
                }
                let cand = MuContract::linear(
                    l,
                    vec![step * j0 as f64, step * j1 as f64],
                    pricing,
                );
                let mut trial = book.clone();
                trial.set_contract(n, cand).unwrap();
                let mut m = [[0.0; 2]; 2];
                for (i, row) in m.iter_mut().enumerate() {
                    let pi = instance.map.type_value(i);
                    for (j, cell) in row.iter_mut().enumerate() {
                        let d: Vec<f64> =
                            trial.contracts().iter().map(|x| x.d_enc[j]).collect();
                        let p: Vec<f64> =
                            trial.contracts().iter().map(|x| x.pay_enc[j]).collect();
                        *cell = map_enc_utility(pi, eta.row(j), &d, &p, pricing).unwrap();
                    }
                }
                let chains = m[1][1] + CHAIN_TOL >= m[1][0] && m[0][0] + CHAIN_TOL >= m[0][1];
                if !chains {
                    continue;
                }
                if map_utility(0, eta, &trial, instance.map, pricing).unwrap() < -CHAIN_TOL {
                    continue;
                }
                let cap_ok = (0..2).all(|i| {
                    let acc: f64 = (0..trial.mu_count())
                        .map(|q| eta.eta(i, q) * trial.contract(q).d_enc[i])
                        .sum();
                    acc <= instance.map.enc_cap(i) + CAP_TOL
                });
                if !cap_ok {
                    continue;
                }
                let v = mu_expected_utility(
                    n,
                    &trial,
                    eta,
                    instance.mus,
                    instance.map,
                    pricing,
                )
                .unwrap();
                if v > best {
                    best = v;
                }
            }
        }
    }
    best
}

#[test]
fn c03_equilibrium_survives_exhaustive_deviation_search() {
    let config = SolverConfig::default();
    let mut worst_slack = f64::INFINITY;
    for seed in 0..20u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(0xC03_0000 + seed);
        // Stocks below 1900 put every menu on a grid of at most 20 points.
        let market = random_small_market(&mut rng, 2, 2, 1900.0);
        let instance =
            MarketInstance::new(&market.mus, &market.map, &market.pricing).unwrap();
        let result = iterate_contracts(&instance, &config).unwrap();
        assert!(result.converged, "seed {seed} did not settle");
        for n in 0..2 {
            let incumbent = mu_expected_utility(
                n,
                &result.book,
                &result.eta,
                &market.mus,
                &market.map,
                &market.pricing,
            )
            .unwrap();
            let best = best_deviation_two_types(
                n,
                &result.book,
                &result.eta,
                &instance,
                config.grid_step,
            );
            assert!(
                incumbent >= best - config.sigma,
                "seed {seed} user {n}: equilibrium {incumbent} vs deviation {best}"
            );
            worst_slack = worst_slack.min(incumbent - (best - config.sigma));
        }
    }
    println!(
        "c03 exhaustive-deviation optimality: PASS — 20 seeds, 2 users x 2 types, \
         worst slack {worst_slack:.3e}"
    );
}

// ---------------------------------------------------------------------------
// c04 — welfare ordering of the three contract arms
// ---------------------------------------------------------------------------

/// Welfare of the three contract arms at the realized type, plus whether
/// the equilibrium settled.
fn welfare_triple(config: &ScenarioConfig) -> (f64, f64, f64) {
    let (mus, map) = fedmarket_core::scenario::assemble_market(config).unwrap();
    let instance = MarketInstance::new(&mus, &map, &config.pricing).unwrap();
    let welfare = |book: &ContractBook| {
        let eta = solve_eta(&instance, book).unwrap();
        social_welfare(
            config.realized_type,
            book,
            &eta,
            &mus,
            &map,
            &config.pricing,
        )
        .unwrap()
    };
    let equilibrium = iterate_contracts(&instance, &config.solver).unwrap();
    assert!(equilibrium.converged, "equilibrium did not settle");
    let seed_book = baseline_proportional(&instance).unwrap();
    let base =
        snap_book_to_grid(&seed_book, config.solver.grid_step, &config.pricing).unwrap();
    let info = solve_info_symmetry(config.realized_type, &instance, &config.solver).unwrap();
    (welfare(&base), welfare(&equilibrium.book), welfare(&info))
}

#[test]
fn c04_welfare_orders_baseline_equilibrium_full_information() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xC04);
    let mut configs = vec![ScenarioConfig::default()];
    for k in 0..10 {
        let mut cfg = ScenarioConfig::default();
        let mut f = |lo: f64, hi: f64| rng.random_range(lo..hi);
        cfg.seed = 1000 + k as u64;
        cfg.pricing.alpha_enc *= f(0.9, 1.1);
        cfg.pricing.alpha_local *= f(0.9, 1.1);
        cfg.pricing.upsilon_enc *= f(0.9, 1.1);
        cfg.pricing.upsilon_local *= f(0.9, 1.1);
        cfg.pricing.gamma_tx *= f(0.9, 1.1);
        cfg.types.d_max_enc *= f(0.9, 1.1);
        let stock = f(0.9, 1.1);
        cfg.population.d_total_min *= stock;
        cfg.population.d_total_max *= stock;
        cfg.population.local_cap_share = (cfg.population.local_cap_share * f(0.9, 1.1)).min(0.5);
        cfg.population.eps_priv = (cfg.population.eps_priv * f(0.9, 1.1)).min(1.0);
        cfg.population.a_fn *= f(0.9, 1.1);
        configs.push(cfg);
    }
    let mut max_gap = 0.0f64;
    for (k, cfg) in configs.iter().enumerate() {
        let (base, proposed, info) = welfare_triple(cfg);
        assert!(
            base <= proposed + TOL,
            "config {k}: baseline welfare {base} exceeds equilibrium {proposed}"
        );
        assert!(
            proposed <= info + TOL,
            "config {k}: equilibrium welfare {proposed} exceeds full-information {info}"
        );
        let gap = (info - proposed) / info.abs().max(1e-12);
        assert!(
            gap <= 0.05,
            "config {k}: gap to full information {:.3}% exceeds 5%",
            gap * 100.0
        );
        max_gap = max_gap.max(gap);
    }
    println!(
        "c04 comparator welfare ordering: PASS — defaults + 10 perturbations, \
         max gap to full information {:.4}%",
        max_gap * 100.0
    );
}

// ---------------------------------------------------------------------------
// c05 — sweep counts grow like the log of the user count
// ---------------------------------------------------------------------------

/// Least-squares fit of `y ~ c1·x + c2`, returning `(c1, c2, r_squared)`.
/// A flat series that the fit reproduces exactly counts as fully
/// explained.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let c1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c2 = my - c1 * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (c1 * x + c2);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 1e-12 {
        1.0 - ss_res / ss_tot
    } else if ss_res < 1e-12 {
        1.0
    } else {
        0.0
    };
    (c1, c2, r2)
}

/// A market whose users all compete for scarce acceptance: log-uniform
/// stocks spread user sizes over a wide range, and encrypted capacity of
/// only 5–12% of the total stock keeps the provider rationing, so every
/// menu change reverberates through the shared fractions. Near-symmetric
/// slack markets settle in a size-independent handful of sweeps; this
/// coupled family is where adjustment depth actually grows with the
/// user count.
fn random_coupled_market(rng: &mut ChaCha20Rng, mu_count: usize) -> SmallMarket {
    const TYPE_COUNT: usize = 3;
    let alpha_enc = rng.random_range(0.005..0.02);
    let pricing = PricingParams {
        alpha_enc,
        alpha_local: rng.random_range(0.002..0.006),
        upsilon_enc: rng.random_range(0.3..1.0),
        upsilon_local: rng.random_range(0.02..0.10),
        beta_priv: 1.0,
        gamma_tx: alpha_enc * rng.random_range(0.05..0.8),
        map_zeta: 0.0,
        map_cycles_per_sample: 0.0,
        map_freq: 0.0,
    };
    let mut mus = Vec::with_capacity(mu_count);
    let mut total = 0.0;
    for id in 0..mu_count {
        // Log-uniform stocks spread user sizes over 500..10_000.
        let d_total = 500.0 * 20.0f64.powf(rng.random_range(0.0..1.0));
        total += d_total;
        mus.push(MuProfile {
            id,
            d_total,
            d_local_cap: d_total * rng.random_range(0.0..0.25),
            eps_priv: rng.random_range(0.3..1.0),
            a_fn: rng.random_range(5.0..20.0),
            zeta: rng.random_range(0.0..0.008),
            cycles_per_sample: 1.0,
            freq: 1.0,
            rate: 1e6,
            compute: 1.0,
        });
    }
    let mut values = Vec::with_capacity(TYPE_COUNT);
    let mut v = rng.random_range(0.5..1.5);
    for _ in 0..TYPE_COUNT {
        values.push(v);
        v += rng.random_range(0.3..1.0);
    }
    let raw: Vec<f64> = (0..TYPE_COUNT).map(|_| rng.random_range(0.2..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut dist: Vec<f64> = raw.iter().map(|w| w / sum).collect();
    let head: f64 = dist[..TYPE_COUNT - 1].iter().sum();
    dist[TYPE_COUNT - 1] = 1.0 - head;
    let d_max = total * rng.random_range(0.05..0.12);
    let map = MapTypeProfile::new(values, dist, d_max).unwrap();
    SmallMarket { mus, map, pricing }
}

#[test]
fn c05_sweep_counts_scale_with_log_of_user_count() {
    let sizes = [2usize, 4, 8, 16];
    let config = SolverConfig::default();
    let mut xs = Vec::new();
    let mut means = Vec::new();
    let mut max_at_16 = 0usize;
    for &n in &sizes {
        let mut total = 0usize;
        for seed in 0..20u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(0xC05_0000 + seed * 31 + n as u64);
            let market = random_coupled_market(&mut rng, n);
            let instance =
                MarketInstance::new(&market.mus, &market.map, &market.pricing).unwrap();
            let result = iterate_contracts(&instance, &config).unwrap();
            assert!(result.converged, "n={n} seed={seed} did not settle");
            total += result.iterations;
            if n == 16 {
                max_at_16 = max_at_16.max(result.iterations);
            }
        }
        xs.push((n as f64).ln());
        means.push(total as f64 / 20.0);
    }
    let (c1, c2, r2) = linear_fit(&xs, &means);
    assert!(
        r2 >= 0.8,
        "log fit explains too little: R^2 = {r2:.3}, means {means:?}"
    );
    assert!(max_at_16 <= 50, "worst case at 16 users: {max_at_16} sweeps");
    println!(
        "c05 sweep scaling: PASS — means {means:?} for sizes {sizes:?}, fit \
         {c1:.2}*ln(n)+{c2:.2}, R^2 {r2:.3}, max at 16 users {max_at_16}"
    );
}

// ---------------------------------------------------------------------------
// c06 — analytic gradients match finite differences; cipher matches plain
// ---------------------------------------------------------------------------

/// Central finite-difference gradient of the block loss.
fn central_fd(ds: &Dataset, model: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(model.raw_dim());
    for r in 0..model.nrows() {
        for c in 0..model.ncols() {
            let h = 1e-6 * model[(r, c)].abs().max(1.0);
            let mut plus = model.clone();
            plus[(r, c)] += h;
            let mut minus = model.clone();
            minus[(r, c)] -= h;
            out[(r, c)] = (local_loss(ds, &plus) - local_loss(ds, &minus)) / (2.0 * h);
        }
    }
    out
}

#[test]
fn c06_gradients_match_finite_differences_and_cipher_decodes() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xC06);
    let mut worst_rel = 0.0f64;
    let mut worst_cipher_margin = 0.0f64;
    for trial in 0..100u64 {
        let n = rng.random_range(20..=100usize);
        let d = rng.random_range(2..=6usize);
        let k = rng.random_range(1..=3usize);
        let (ds, _) = synth_dataset(0xC06_0000 + trial, n, d, k, 0.3).unwrap();
        let model = Array2::from_shape_fn((d, k), |_| rng.random_range(-1.0..1.0));

        let grad = local_gradient(&ds, &model);
        let fd = central_fd(&ds, &model);
        let rel = fro(&(&fd - &grad)) / fro(&grad).max(1e-12);
        assert!(rel < 1e-5, "trial {trial}: gradient mismatch {rel:.3e}");
        worst_rel = worst_rel.max(rel);

        let key = keygen(7, trial);
        let shard = EncryptedShard::enc(&ds, &key, DEFAULT_SCALE).unwrap();
        let model_ct = CipherMatrix::enc(&model, &key, DEFAULT_SCALE).unwrap();
        let decoded = shard.gradient_sum(&model_ct).unwrap().dec(&key).unwrap();
        let want = gradient_sum(&ds, &model);
        let err = (&decoded - &want)
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let bound = n as f64 * 2.0 / DEFAULT_SCALE as f64;
        assert!(
            err <= bound,
            "trial {trial}: decoded gradient off by {err:.3e}, bound {bound:.3e}"
        );
        worst_cipher_margin = worst_cipher_margin.max(err / bound);
    }
    println!(
        "c06 gradient correctness: PASS — 100 tasks, worst finite-difference \
         error {worst_rel:.2e}, worst cipher error at {:.0}% of its bound",
        worst_cipher_margin * 100.0
    );
}

// ---------------------------------------------------------------------------
// c07 — cipher arithmetic stays within its stated error bounds
// ---------------------------------------------------------------------------

#[test]
fn c07_cipher_roundtrip_and_homomorphism_bounds_hold() {
    let key = keygen(1, 0xC07);
    let mut rng = ChaCha20Rng::seed_from_u64(0xC07);
    let scale = DEFAULT_SCALE as f64;
    let iterations = 100_000;
    let mut violations = 0usize;
    for _ in 0..iterations {
        let x: f64 = rng.random_range(-50.0..50.0);
        let y: f64 = rng.random_range(-50.0..50.0);
        let c: f64 = rng.random_range(-20.0..20.0);
        let ex = enc(x, &key, DEFAULT_SCALE).unwrap();
        let ey = enc(y, &key, DEFAULT_SCALE).unwrap();

        if (dec(&ex, &key).unwrap() - x).abs() > 1.0 / scale {
            violations += 1;
        }
        if (dec(&hadd(&ex, &ey).unwrap(), &key).unwrap() - (x + y)).abs() > 2.0 / scale {
            violations += 1;
        }
        if (dec(&hsub(&ex, &ey).unwrap(), &key).unwrap() - (x - y)).abs() > 2.0 / scale {
            violations += 1;
        }
        let mul_bound = (x.abs() + y.abs() + 2.0) / scale;
        if (dec(&hmul(&ex, &ey).unwrap(), &key).unwrap() - x * y).abs() > mul_bound {
            violations += 1;
        }
        let plain_bound = (c.abs() + 1.0) / scale;
        if (dec(&hmul_plain(&ex, c).unwrap(), &key).unwrap() - c * x).abs() > plain_bound {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "{violations} bound violations");
    println!(
        "c07 cipher property suite: PASS — {iterations} random draws, five checks \
         each, zero violations"
    );
}

// ---------------------------------------------------------------------------
// c08 — the pooled encrypted shard rides out stragglers
// ---------------------------------------------------------------------------

#[test]
fn c08_encrypted_pool_keeps_training_through_stragglers() {
    let start = Instant::now();
    // Noise-free task: final losses measure optimization error, not the
    // irreducible label-noise floor. The step is small enough that the
    // round budget ends mid-descent, so rounds lost to stragglers are
    // visible in the finals instead of being erased by full convergence,
    // and the cohort is small enough that heavy straggling regularly
    // leaves the pool-free arm with nobody reporting at all.
    let (ds, _) = synth_dataset(0xC08, 5000, 8, 1, 0.0).unwrap();
    let plan = partition_non_iid(&ds, 5).unwrap();
    let init = Array2::<f64>::zeros((8, 1));
    let cfg = |p: f64| {
        let mut c = TrainingConfig::new(300, 0.03, 0xC08);
        c.straggler = StragglerModel::Bernoulli { p };
        c
    };
    let final_loss = |out: &fedmarket_core::fl::training::TrainingOutcome| {
        out.trace.last().unwrap().global_loss
    };

    // Half of every block rides in the provider's encrypted pool.
    let half = materialize_split(&ds, &plan, &split_by_share(&plan, 0.5, 0.5).unwrap()).unwrap();
    let calm = run_training(&half, &init, &cfg(0.0)).unwrap();
    let rough = run_training(&half, &init, &cfg(0.8)).unwrap();

    // No pool at all: every sample stays local, stragglers hit everything.
    let local_only =
        materialize_split(&ds, &plan, &split_by_share(&plan, 0.0, 1.0).unwrap()).unwrap();
    let conventional = run_training(&local_only, &init, &cfg(0.8)).unwrap();

    let (calm, rough, conventional) = (
        final_loss(&calm),
        final_loss(&rough),
        final_loss(&conventional),
    );
    assert!(
        rough <= 1.5 * calm + 1e-12,
        "heavy straggling degrades the pooled run: {rough:.3e} vs calm {calm:.3e}"
    );
    assert!(
        conventional >= 2.0 * rough,
        "pool-free run ends at {conventional:.3e}, pooled at {rough:.3e}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:.2?}");
    println!(
        "c08 straggler resilience: PASS — pooled losses {calm:.3e} (p=0) vs \
         {rough:.3e} (p=0.8), pool-free {conventional:.3e} (p=0.8), {elapsed:.2?}"
    );
}

// ---------------------------------------------------------------------------
// c09 — the optimality-gap bound dominates measured gaps and decreases
// ---------------------------------------------------------------------------

#[test]
fn c09_loss_gap_bound_dominates_measured_training() {
    let (ds, _) = synth_dataset(0xC09, 2000, 6, 1, 0.05).unwrap();
    let users = 10usize;
    let reporting = 8usize;
    let plan = partition_non_iid(&ds, users).unwrap();
    let data =
        materialize_split(&ds, &plan, &split_by_share(&plan, 0.0, 1.0).unwrap()).unwrap();

    let (delta2, delta1) = hessian_extreme_eigenvalues(&pooled_hessian(&ds)).unwrap();
    let w_star = least_squares_fit(&ds).unwrap();
    let f_star = local_loss(&ds, &w_star);
    let init = Array2::<f64>::zeros((6, 1));
    let gap0_sq = fro(&(&init - &w_star)).powi(2);

    // Gradient-norm estimate from the start of the trajectory, with
    // headroom; verified against every checkpoint below.
    let gamma_hat = 1.5 * fro(&local_gradient(&ds, &init));
    let straggler_factor =
        1.0 + (users + 1 - reporting) as f64 / (reporting as f64 * users as f64);
    // A constant step small enough that the bound recursion's steady
    // state sits below its start, so the bound decreases; also admissible.
    let lam_decreasing = 0.4 * delta2 * gap0_sq / (gamma_hat * gamma_hat * straggler_factor);
    let lam = (0.9 / delta1).min(1.0).min(lam_decreasing);

    let rounds = 500usize;
    let checkpoints: Vec<usize> = (1..=10).map(|k| k * rounds / 10).collect();
    let mut cfg = TrainingConfig::new(rounds, lam, 0xC09);
    cfg.straggler = StragglerModel::FixedParticipants { count: reporting };

    // Same seed, shorter horizons: each prefix replays the same rounds,
    // exposing the model at every checkpoint.
    let mut measured = Vec::new();
    let mut grad_seen = fro(&local_gradient(&ds, &init));
    let mut div_seen = 0.0f64;
    for &t in &checkpoints {
        let mut prefix = cfg.clone();
        prefix.rounds = t;
        let out = run_training(&data, &init, &prefix).unwrap();
        measured.push(local_loss(&ds, &out.model) - f_star);
        let pooled = local_gradient(&ds, &out.model);
        grad_seen = grad_seen.max(fro(&pooled));
        for block in data.locals.iter().flatten() {
            div_seen = div_seen.max(fro(&(&local_gradient(block, &out.model) - &pooled)));
        }
    }
    assert!(
        gamma_hat >= grad_seen,
        "gradient estimate {gamma_hat} exceeded along the trajectory: {grad_seen}"
    );

    let params = ConvergenceBoundParams {
        delta1,
        delta2,
        gamma: gamma_hat,
        lambda_div: 1.5 * div_seen,
        vartheta: 1.0,
        vartheta_th: 1.0,
        m_total: users,
        n_participants: reporting,
        gap0_sq,
    };
    assert!(lam <= params.max_step(), "step {lam} is not admissible");
    let bound = convergence_bound(&params, &vec![lam; rounds]).unwrap();

    for (k, &t) in checkpoints.iter().enumerate() {
        assert!(
            measured[k] <= bound[t] + TOL,
            "round {t}: measured gap {:.4e} exceeds bound {:.4e}",
            measured[k],
            bound[t]
        );
    }
    for w in checkpoints.windows(2) {
        assert!(
            bound[w[1]] <= bound[w[0]] * (1.0 + 1e-12),
            "bound rises between rounds {} and {}",
            w[0],
            w[1]
        );
    }
    assert!(
        bound[*checkpoints.last().unwrap()] < bound[checkpoints[0]],
        "bound never falls across the run"
    );
    println!(
        "c09 loss-gap bound: PASS — step {lam:.4}, bound {:.3} -> {:.3} over {rounds} \
         rounds, worst measured/bound ratio {:.2e}",
        bound[checkpoints[0]],
        bound[*checkpoints.last().unwrap()],
        checkpoints
            .iter()
            .enumerate()
            .map(|(k, &t)| measured[k] / bound[t])
            .fold(0.0f64, f64::max)
    );
}

// ---------------------------------------------------------------------------
// c10 — identical configs produce identical metric bytes
// ---------------------------------------------------------------------------

#[test]
fn c10_same_seed_scenarios_emit_identical_csv_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = ScenarioConfig::default();
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    run_scenario(&config, &first).unwrap();
    run_scenario(&config, &second).unwrap();

    let mut compared = 0usize;
    let mut names: Vec<String> = fs::read_dir(&first)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in &names {
        if !name.ends_with(".csv") {
            continue;
        }
        let a = fs::read(first.join(name)).unwrap();
        let b = fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
        compared += 1;
    }
    assert!(compared >= 6, "only {compared} metric files compared");
    println!(
        "c10 determinism: PASS — {compared} metric files byte-identical across two runs"
    );
}
