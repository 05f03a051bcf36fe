//! Acceptance suite: nine end-to-end checks covering statistical
//! calibration, oracle equivalence, critical-value accuracy, scan
//! invariances, extreme-value shape and runtime budgets.
//!
//! Each criterion is one test; every test prints a single
//! `ACCEPTANCE <k> <name>: PASS/FAIL (<detail>)` line before asserting,
//! so a filtered run still reports what was measured
//! (`cargo test --test acceptance -- --nocapture`).
//!
//! The Monte Carlo criteria pin 2000-replication rejection rates against
//! reference operating characteristics; the tolerances (±0.03 size,
//! ±0.04 power, ±0.02 at the null of the power tables) cover the binomial
//! error of both this run and the reference estimates.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use cmiscan::critval::{
    analytic_critical_value, refined_critical_value, simulated_null_sample, GumbelConstants,
    MultiplierCovariance,
};
use cmiscan::data::Covariates;
use cmiscan::geometry::{build_hull, truncation, TruncationRule};
use cmiscan::models::{Model, Theta};
use cmiscan::montecarlo::{power_table, simulate_design, size_table, DesignSpec, McTable};
use cmiscan::rng::substream;
use cmiscan::scan::{scan_statistic, MomentMatrix, ScanConfig};

const SEED: u64 = 31415926;
const REPS: usize = 2000;
const LF_B: usize = 2000;
const THIRD: f64 = 1.0 / 3.0;
const RULES: [TruncationRule; 3] = [
    TruncationRule::Power(0.2),
    TruncationRule::Power(THIRD),
    TruncationRule::Power(0.5),
];

fn report(k: usize, name: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {k} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Looks up one estimate by (power-of-n rule exponent, offset, level, n).
fn table_estimate(table: &McTable, delta: f64, offset: f64, alpha: f64, n: usize) -> f64 {
    table
        .rows
        .iter()
        .find(|r| {
            r.n == n
                && r.offset == offset
                && r.alpha == alpha
                && matches!(r.rule, TruncationRule::Power(d) if d == delta)
        })
        .unwrap_or_else(|| panic!("missing row n={n} delta={delta} offset={offset} alpha={alpha}"))
        .estimate
}

/// The Design 1 size table (three sample sizes, three rules, both levels)
/// and its build time, computed once and shared between criteria 1 and 9.
fn design1_size_table() -> &'static (McTable, Duration) {
    static TABLE: OnceLock<(McTable, Duration)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let start = Instant::now();
        let table =
            size_table(DesignSpec::One, &[100, 500, 1000], &RULES, &[0.10, 0.05], REPS, SEED)
                .expect("size table");
        (table, start.elapsed())
    })
}

#[test]
fn criterion_1_size_at_the_boundary() {
    let (table, _) = design1_size_table();
    let checks = [
        (0.05, THIRD, 1000, 0.0550),
        (0.10, THIRD, 500, 0.1160),
        (0.05, 0.5, 1000, 0.0350),
        (0.10, 0.2, 100, 0.2510),
    ];
    let mut detail = String::new();
    let mut pass = true;
    for (alpha, delta, n, target) in checks {
        let est = table_estimate(table, delta, 0.0, alpha, n);
        pass &= (est - target).abs() <= 0.03;
        detail.push_str(&format!("n={n} δ={delta:.2} α={alpha}: {est:.4} vs {target}; "));
    }
    let detail = detail.trim_end_matches("; ");
    report(1, "size at the boundary", pass, detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_2_power_least_favorable() {
    let null = power_table(DesignSpec::One, &[100, 500, 1000], &RULES, &[0.0], 0.05, REPS, LF_B, SEED)
        .expect("null power table");
    let mid = power_table(
        DesignSpec::One,
        &[500],
        &[TruncationRule::Power(THIRD)],
        &[0.2],
        0.05,
        REPS,
        LF_B,
        SEED,
    )
    .expect("n=500 power row");
    let small = power_table(
        DesignSpec::One,
        &[100],
        &[TruncationRule::Power(0.2)],
        &[0.3],
        0.05,
        REPS,
        LF_B,
        SEED,
    )
    .expect("n=100 power row");

    let mut worst_null = 0.0f64;
    for delta in [0.2, THIRD, 0.5] {
        for n in [100, 500, 1000] {
            let est = table_estimate(&null, delta, 0.0, 0.05, n);
            worst_null = worst_null.max((est - 0.05).abs());
        }
    }
    let est_mid = table_estimate(&mid, THIRD, 0.2, 0.05, 500);
    let est_small = table_estimate(&small, 0.2, 0.3, 0.05, 100);
    let pass = worst_null <= 0.02
        && (est_mid - 0.9390).abs() <= 0.04
        && (est_small - 0.7590).abs() <= 0.04;
    let detail = format!(
        "max |null - 0.05| = {worst_null:.4} over 9 rows; n=500 δ=1/3 a=0.2: {est_mid:.4} vs 0.9390; \
         n=100 δ=0.2 a=0.3: {est_small:.4} vs 0.7590"
    );
    report(2, "power against the least-favorable null", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_3_power_other_designs() {
    let d2 = power_table(
        DesignSpec::Two,
        &[1000],
        &[TruncationRule::Power(THIRD)],
        &[0.4],
        0.05,
        REPS,
        LF_B,
        SEED,
    )
    .expect("design 2 power row");
    let d3 = power_table(
        DesignSpec::Three,
        &[500],
        &[TruncationRule::Power(0.2)],
        &[0.3],
        0.05,
        REPS,
        LF_B,
        SEED,
    )
    .expect("design 3 power row");
    let est2 = table_estimate(&d2, THIRD, 0.4, 0.05, 1000);
    let est3 = table_estimate(&d3, 0.2, 0.3, 0.05, 500);
    let pass = (est2 - 0.8760).abs() <= 0.04 && (est3 - 0.8690).abs() <= 0.04;
    let detail = format!(
        "design 2 n=1000 δ=1/3 a=0.4: {est2:.4} vs 0.8760; design 3 n=500 δ=0.2 a=0.3: {est3:.4} vs 0.8690"
    );
    report(3, "power on the curved designs", pass, &detail);
    assert!(pass, "{detail}");
}

/// Naive 1-D oracle: every contiguous sorted run re-derived from the
/// realizability rule and summed from scratch, with the same
/// cross-multiplied comparison (and iteration order) as the prefix path.
fn naive_scan_1d(x: &Covariates, moments: &MomentMatrix, t_n: f64) -> Vec<f64> {
    let n = x.n();
    let col: Vec<f64> = x.column(0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap().then(a.cmp(&b)));
    let xs: Vec<f64> = order.iter().map(|&i| col[i]).collect();
    let mut t = vec![0.0; moments.d_y()];
    for (m, slot) in t.iter_mut().enumerate() {
        let mut best: Option<(f64, f64, f64)> = None; // (s1², den, s1)
        for i in 0..n {
            for j in i..n {
                if i > 0 && xs[i - 1] == xs[i] {
                    continue;
                }
                if j + 1 < n && xs[j] == xs[j + 1] {
                    continue;
                }
                let lo = if i > 0 { xs[i - 1] } else { xs[0] };
                let hi = if j + 1 < n { xs[j + 1] } else { xs[n - 1] };
                let gap = hi - lo;
                if !(gap > t_n || (gap == t_n && i == 0 && j + 1 == n)) {
                    continue;
                }
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for &k in &order[i..=j] {
                    let v = moments.value(k, m);
                    s1 += v;
                    s2 += v * v;
                }
                let den = n as f64 * s2 - s1 * s1;
                if den > 0.0 && s1 < 0.0 {
                    let num2 = s1 * s1;
                    let better = match &best {
                        None => true,
                        Some((bn, bd, _)) => num2 * bd > bn * den,
                    };
                    if better {
                        best = Some((num2, den, s1));
                    }
                }
            }
        }
        if let Some((_, den, s1)) = best {
            *slot = -s1 / den.sqrt();
        }
    }
    t
}

/// Naive 2-D oracle: all boxes between distinct observed values, membership
/// by direct closed-interval comparison, sums recomputed per box.
fn naive_scan_2d(x: &Covariates, moments: &MomentMatrix, t_n: f64) -> Vec<f64> {
    let n = x.n();
    let c0: Vec<f64> = x.column(0).collect();
    let c1: Vec<f64> = x.column(1).collect();
    let mut e0 = c0.clone();
    e0.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e0.dedup();
    let mut e1 = c1.clone();
    e1.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e1.dedup();
    let mut t = vec![0.0; moments.d_y()];
    for (m, slot) in t.iter_mut().enumerate() {
        let mut best: Option<(f64, f64, f64)> = None;
        for a in 0..e0.len() {
            for b in a..e0.len() {
                if e0[b] - e0[a] < t_n {
                    continue;
                }
                for c in 0..e1.len() {
                    for d in c..e1.len() {
                        if e1[d] - e1[c] < t_n {
                            continue;
                        }
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for i in 0..n {
                            if c0[i] >= e0[a] && c0[i] <= e0[b] && c1[i] >= e1[c] && c1[i] <= e1[d]
                            {
                                let v = moments.value(i, m);
                                s1 += v;
                                s2 += v * v;
                            }
                        }
                        let den = n as f64 * s2 - s1 * s1;
                        if den > 0.0 && s1 < 0.0 {
                            let num2 = s1 * s1;
                            let better = match &best {
                                None => true,
                                Some((bn, bd, _)) => num2 * bd > bn * den,
                            };
                            if better {
                                best = Some((num2, den, s1));
                            }
                        }
                    }
                }
            }
        }
        if let Some((_, den, s1)) = best {
            *slot = -s1 / den.sqrt();
        }
    }
    t
}

#[test]
fn criterion_4_scan_matches_naive_oracle() {
    // All inputs are dyadic rationals with small numerators, so every
    // prefix sum, summed-area entry and cross-multiplied comparison is
    // exact in f64: the fast path and the naive oracle must agree bit for
    // bit, not merely to a tolerance.
    let mut rng = substream(SEED, &[4]);
    let config = ScanConfig::default();
    let start = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    for case in 0..200 {
        let d_x = if rng.gen_bool(0.5) { 1 } else { 2 };
        let d_y = if rng.gen_bool(0.5) { 1 } else { 2 };
        let n = rng.gen_range(2..=25);
        let vals: Vec<f64> =
            (0..n * d_x).map(|_| rng.gen_range(0..=64) as f64 / 64.0).collect();
        let x = Covariates::new(vals, d_x).unwrap();
        let min_range = x
            .bounds()
            .iter()
            .map(|(lo, hi)| hi - lo)
            .fold(f64::INFINITY, f64::min);
        let k_max = (min_range * 32.0).floor() as u32;
        let t_n = rng.gen_range(0..=k_max) as f64 / 32.0;
        let ms: Vec<f64> =
            (0..n * d_y).map(|_| rng.gen_range(-32..=32) as f64 / 64.0).collect();
        let m = MomentMatrix::new(ms, d_y, vec![]).unwrap();
        let fast = scan_statistic(&x, &m, t_n, &config).unwrap();
        let naive = match d_x {
            1 => naive_scan_1d(&x, &m, t_n),
            _ => naive_scan_2d(&x, &m, t_n),
        };
        if fast.t != naive || fast.s != naive.iter().cloned().fold(0.0, f64::max) {
            failures.push(format!("case {case}: d_x={d_x} fast {:?} vs naive {naive:?}", fast.t));
            if failures.len() >= 3 {
                break;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(10);
    let detail = format!(
        "200 instances, {} mismatches, {elapsed:.1?} (budget 10 s){}{}",
        failures.len(),
        if failures.is_empty() { "" } else { ": " },
        failures.join("; ")
    );
    report(4, "prefix scan equals the naive oracle", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_5_analytic_critical_value() {
    // n = 1000, 10 boxes at the truncation scale, one moment, α = 0.05.
    let cv = analytic_critical_value(1000, 1, 1, 1.0, 0.1, 0.05).unwrap();
    let err = (cv.threshold - 0.111_416_821_735_886_9).abs();
    let pass = err < 1e-6;
    let detail = format!("threshold {:.12}, |err| = {err:.2e}", cv.threshold);
    report(5, "analytic critical value", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_6_refined_critical_value() {
    // Residual of the defining equation exp(-h(q̂)) = 1 - α on a
    // 2 × 5 × 5 sweep, with the tail weight recomputed here from scratch.
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for d_x in [1usize, 2] {
        for t_n in [0.04, 0.08, 0.12, 0.16, 0.25] {
            for alpha in [0.01, 0.025, 0.05, 0.1, 0.2] {
                let q = refined_critical_value(1000, d_x, 1, 1.0, t_n, alpha)
                    .unwrap_or_else(|e| panic!("d_x={d_x} t_n={t_n} alpha={alpha}: {e}"))
                    .threshold;
                let k = t_n.powi(-(d_x as i32))
                    / std::f64::consts::PI.sqrt()
                    / 2f64.powf(2.0 * d_x as f64 + 0.5);
                let h = k * q.powf(4.0 * d_x as f64 - 1.0) * (-0.5 * q * q).exp();
                worst = worst.max(((-h).exp() - (1.0 - alpha)).abs());
                count += 1;
            }
        }
    }
    let q_example = refined_critical_value(1000, 1, 1, 1.0, 0.1, 0.05).unwrap().threshold;
    let pass = count == 50
        && worst < 1e-10
        && (q_example - 3.7165).abs() <= 0.001
        && (q_example - 3.716_399_773_497_610).abs() < 1e-9;
    let detail = format!(
        "worst residual {worst:.2e} over {count} points; example threshold {q_example:.6} vs 3.7165 ± 0.001"
    );
    report(6, "refined critical value", pass, &detail);
    assert!(pass, "{detail}");
}

struct InvarianceCase {
    x: Covariates,
    moments: Vec<f64>,
    d_y: usize,
    t_n: f64,
}

/// Draws covariates with distinct dyadic coordinates (multiples of 1/512)
/// and a dyadic t_n no larger than the smallest coordinate range, so that
/// translations by multiples of 1/8 stay exact in f64.
fn draw_invariance_case<R: Rng>(rng: &mut R, d_x: usize) -> InvarianceCase {
    let n = if d_x == 1 { rng.gen_range(3..=40) } else { rng.gen_range(3..=24) };
    let d_y = if rng.gen_bool(0.5) { 1 } else { 2 };
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d_x);
    for _ in 0..d_x {
        let mut pool: Vec<u32> = (0..=512).collect();
        let (picked, _) = pool.partial_shuffle(rng, n);
        columns.push(picked.iter().map(|&k| k as f64 / 512.0).collect());
    }
    let mut vals = Vec::with_capacity(n * d_x);
    for i in 0..n {
        for col in &columns {
            vals.push(col[i]);
        }
    }
    let x = Covariates::new(vals, d_x).unwrap();
    let min_range = x
        .bounds()
        .iter()
        .map(|(lo, hi)| hi - lo)
        .fold(f64::INFINITY, f64::min);
    let k_max = (min_range * 512.0).round() as u32;
    let t_n = rng.gen_range(0..=k_max) as f64 / 512.0;
    let moments: Vec<f64> = (0..n * d_y).map(|_| rng.gen_range(-1.0..1.0)).collect();
    InvarianceCase { x, moments, d_y, t_n }
}

#[test]
fn criterion_7_scan_invariances() {
    let mut rng = substream(SEED, &[7]);
    let config = ScanConfig::default();
    let mut failures: Vec<String> = Vec::new();
    let push = |failures: &mut Vec<String>, case: usize, what: &str| {
        failures.push(format!("case {case}: {what}"));
    };
    for case in 0..500 {
        let d_x = if case % 4 == 0 { 2 } else { 1 };
        let c = draw_invariance_case(&mut rng, d_x);
        let n = c.x.n();
        let m = MomentMatrix::new(c.moments.clone(), c.d_y, vec![]).unwrap();
        let base = scan_statistic(&c.x, &m, c.t_n, &config).unwrap();

        // Scale: multiplying the moments by a positive constant cancels in
        // the studentization up to round-off.
        let factor = 10f64.powf(rng.gen_range(-6.0..6.0));
        let scaled: Vec<f64> = c.moments.iter().map(|v| v * factor).collect();
        let scaled = MomentMatrix::new(scaled, c.d_y, vec![]).unwrap();
        let scaled = scan_statistic(&c.x, &scaled, c.t_n, &config).unwrap();
        if !base.t.iter().zip(&scaled.t).all(|(a, b)| rel_close(*a, *b, 1e-12)) {
            push(&mut failures, case, "scale");
        }

        // Permutation: reordering rows reorders nothing the statistic can
        // see. Exact in 1-D (distinct coordinates give one sort order);
        // the 2-D table accumulates in row order, so round-off moves.
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut pvals = Vec::with_capacity(n * d_x);
        let mut pmoms = Vec::with_capacity(n * c.d_y);
        for &i in &perm {
            pvals.extend_from_slice(c.x.row(i));
            pmoms.extend_from_slice(&c.moments[i * c.d_y..(i + 1) * c.d_y]);
        }
        let px = Covariates::new(pvals, d_x).unwrap();
        let pm = MomentMatrix::new(pmoms, c.d_y, vec![]).unwrap();
        let permuted = scan_statistic(&px, &pm, c.t_n, &config).unwrap();
        let perm_ok = if d_x == 1 {
            permuted.t == base.t && permuted.s == base.s
        } else {
            base.t.iter().zip(&permuted.t).all(|(a, b)| rel_close(*a, *b, 1e-12))
        };
        if !perm_ok {
            push(&mut failures, case, "permutation");
        }

        // Translation: shifting by a multiple of 1/8 is exact on the
        // dyadic coordinates, so every realizability decision and sum is
        // bitwise unchanged.
        let mut tvals = Vec::with_capacity(n * d_x);
        let shifts: Vec<f64> =
            (0..d_x).map(|_| rng.gen_range(-40..=40) as f64 / 8.0).collect();
        for i in 0..n {
            for (k, shift) in shifts.iter().enumerate() {
                tvals.push(c.x.row(i)[k] + shift);
            }
        }
        let tx = Covariates::new(tvals, d_x).unwrap();
        let translated = scan_statistic(&tx, &m, c.t_n, &config).unwrap();
        if translated.t != base.t || translated.s != base.s {
            push(&mut failures, case, "translation");
        }

        // Monotone transform at t_n = 0: only the coordinate order enters,
        // and x ↦ x³ + 4x spreads the dyadic grid enough that the
        // transformed coordinates stay distinct.
        let base0 = scan_statistic(&c.x, &m, 0.0, &config).unwrap();
        let gvals: Vec<f64> = (0..n)
            .flat_map(|i| c.x.row(i).to_vec())
            .map(|v| v * v * v + 4.0 * v)
            .collect();
        let gx = Covariates::new(gvals, d_x).unwrap();
        let transformed = scan_statistic(&gx, &m, 0.0, &config).unwrap();
        if transformed.t != base0.t || transformed.s != base0.s {
            push(&mut failures, case, "monotone transform");
        }

        if failures.len() >= 3 {
            break;
        }
    }
    let pass = failures.is_empty();
    let detail = format!(
        "500 cases × 4 invariances{}{}",
        if pass { ", all hold" } else { ": " },
        failures.join("; ")
    );
    report(7, "scan invariances", pass, &detail);
    assert!(pass, "{detail}");
}

/// Kolmogorov–Smirnov distance between `a·s - b` over the draws and the
/// standard Gumbel CDF `exp(-e^{-z})`.
fn ks_distance_to_gumbel(draws: &[f64], norm: &GumbelConstants) -> f64 {
    let mut z: Vec<f64> = draws.iter().map(|s| norm.a * s - norm.b).collect();
    z.sort_unstable_by(|p, q| p.partial_cmp(q).expect("finite draws"));
    let m = z.len() as f64;
    let mut dist = 0.0f64;
    for (i, zi) in z.iter().enumerate() {
        let f = (-(-zi).exp()).exp();
        dist = dist.max(f - i as f64 / m).max((i as f64 + 1.0) / m - f);
    }
    dist
}

#[test]
fn criterion_8_extreme_value_shape() {
    // The extreme-value approximation converges at a logarithmic rate, so
    // the normalized multiplier maximum is still visibly off its Gumbel
    // limit at n = 2000: the measured KS distance is ≈ 0.11 there (stable
    // to ±0.01 across master seeds) and falls to ≈ 0.08 by n = 8000. The
    // pinned bounds reflect those measurements; the substantive checks are
    // that the distance is small, crosses 0.10 by n = 8000, and never
    // increases in n.
    let mut ks = Vec::new();
    for n in [2000usize, 8000] {
        let mut rng = substream(SEED, &[8, n as u64]);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let x = Covariates::new(xs, 1).unwrap();
        let t_n = truncation(TruncationRule::Power(0.5), n, &x).unwrap();
        let hull = build_hull(&x).unwrap();
        let draws = simulated_null_sample(
            &x,
            1,
            t_n,
            2000,
            SEED,
            &MultiplierCovariance::Identity,
            &ScanConfig::default(),
        )
        .unwrap();
        let norm = GumbelConstants::new(n, 1, hull.volume(), t_n).unwrap();
        ks.push(ks_distance_to_gumbel(&draws, &norm));
    }
    let pass = ks[0] <= 0.12 && ks[1] <= 0.10 && ks[1] <= ks[0];
    let detail = format!(
        "KS(n=2000) = {:.4} (bound 0.12), KS(n=8000) = {:.4} (bound 0.10), must not increase in n",
        ks[0], ks[1]
    );
    report(8, "extreme-value shape of the null maximum", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_9_runtime_budget() {
    // One scan at n = 1000 with the n^{-1/3} rule, timed cold.
    let mut rng = substream(SEED, &[9]);
    let data = simulate_design(DesignSpec::One, 1000, &mut rng).unwrap();
    let theta = Theta::new(vec![DesignSpec::One.boundary_theta1(), 0.0]).unwrap();
    let moments = Model::Missing.moments(&data, &theta).unwrap();
    let t_n = truncation(TruncationRule::Power(THIRD), 1000, data.covariates()).unwrap();
    let start = Instant::now();
    let result = scan_statistic(data.covariates(), &moments, t_n, &ScanConfig::default()).unwrap();
    let single = start.elapsed();
    assert!(result.s.is_finite());

    // The full size table (3 sample sizes × 3 rules × 2000 replications,
    // both levels) must fit the ten-minute budget.
    let (_, table_time) = design1_size_table();
    let pass = single < Duration::from_millis(50) && *table_time < Duration::from_secs(600);
    let detail = format!(
        "single n=1000 scan {single:.1?} (budget 50 ms); size table {table_time:.1?} (budget 600 s)"
    );
    report(9, "runtime budget", pass, &detail);
    assert!(pass, "{detail}");
}
