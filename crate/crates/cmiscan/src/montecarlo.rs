//! Monte Carlo harness: size and power of the test under three
//! missing-data designs.
//!
//! All designs share the same observables: `X ~ U(0, 1)`, a latent outcome
//! `W* = u` with `u ~ U(-1, 1)` independent of `X`, and a missingness
//! indicator with covariate-dependent probability `p(x)`. Observed rows
//! carry the point interval `[u, u]`, missing rows the uninformative
//! `[-inf, +inf]`. The designs differ only in `p(x)`:
//!
//! * design 1: `p(x) = 0.1` (constant);
//! * design 2: `p(x) = 0.02 + 2·0.98·|x - 1/2|` (kink at the minimum);
//! * design 3: `p(x) = 0.02 + 4·0.98·(x - 1/2)²` (smooth minimum).
//!
//! With `p* = min_x p(x)`, the identified set for the intercept touches its
//! upper boundary `θ̄₁ = p*/(1 - p*)` where the moment binds; size is
//! estimated at `θ̄ = (θ̄₁, 0)` and power at intercepts offset above the
//! boundary. Every replication runs the full pipeline — draw, truncate,
//! scan, critical value — from its own deterministic substream, so tables
//! are reproducible regardless of thread count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::critval::{analytic_critical_value, least_favorable_critical_value_with_rule};
use crate::data::{Covariates, Dataset};
use crate::error::{Error, Result};
use crate::geometry::{build_hull, truncation, TruncationRule};
use crate::models::{Model, Theta};
use crate::rng::{purpose, substream};
use crate::scan::{scan_statistic, ScanConfig};

/// One of the three missing-data data-generating designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignSpec {
    One,
    Two,
    Three,
}

impl DesignSpec {
    /// All designs, in id order.
    pub const ALL: [DesignSpec; 3] = [DesignSpec::One, DesignSpec::Two, DesignSpec::Three];

    /// Stable identifier used in CLI flags and table metadata.
    pub fn id(&self) -> &'static str {
        match self {
            DesignSpec::One => "1",
            DesignSpec::Two => "2",
            DesignSpec::Three => "3",
        }
    }

    /// Numeric tag for substream derivation.
    pub(crate) fn tag(&self) -> u64 {
        match self {
            DesignSpec::One => 1,
            DesignSpec::Two => 2,
            DesignSpec::Three => 3,
        }
    }

    /// Missingness probability at covariate value `x`.
    pub fn missing_prob(&self, x: f64) -> f64 {
        match self {
            DesignSpec::One => 0.1,
            DesignSpec::Two => 0.02 + 2.0 * 0.98 * (x - 0.5).abs(),
            DesignSpec::Three => 0.02 + 4.0 * 0.98 * (x - 0.5) * (x - 0.5),
        }
    }

    /// `p* = min_x p(x)`, attained at `x = 1/2` for designs 2 and 3.
    pub fn min_missing_prob(&self) -> f64 {
        match self {
            DesignSpec::One => 0.1,
            DesignSpec::Two | DesignSpec::Three => 0.02,
        }
    }

    /// Boundary intercept `θ̄₁ = p*/(1 - p*)` of the identified set.
    pub fn boundary_theta1(&self) -> f64 {
        let p = self.min_missing_prob();
        p / (1.0 - p)
    }

    /// The point where all moments hold with equality in the latent model.
    pub fn theta_star(&self) -> Theta {
        Theta::new(vec![0.0, 0.0]).expect("constant theta")
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DesignSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(DesignSpec::One),
            "2" => Ok(DesignSpec::Two),
            "3" => Ok(DesignSpec::Three),
            other => Err(Error::InvalidInput(format!(
                "unknown design {other:?}: expected \"1\", \"2\" or \"3\""
            ))),
        }
    }
}

/// Draws one dataset from a design.
///
/// Three sequential passes over the sample — covariates, latent outcomes,
/// missingness coins — so the random stream layout is independent of which
/// rows end up missing.
pub fn simulate_design<R: Rng>(design: DesignSpec, n: usize, rng: &mut R) -> Result<Dataset> {
    simulate_with_prob(n, rng, |x| design.missing_prob(x))
}

/// Draws one dataset from the least-favorable version of a design: the
/// missingness probability is flattened to its minimum `p*`, which puts the
/// binding moment everywhere instead of at a single covariate value.
pub fn simulate_least_favorable<R: Rng>(
    design: DesignSpec,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let p = design.min_missing_prob();
    simulate_with_prob(n, rng, |_x| p)
}

fn simulate_with_prob<R: Rng>(
    n: usize,
    rng: &mut R,
    prob: impl Fn(f64) -> f64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("cannot simulate an empty sample".into()));
    }
    let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let us: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut w_lo = Vec::with_capacity(n);
    let mut w_hi = Vec::with_capacity(n);
    for i in 0..n {
        if rng.gen_bool(prob(xs[i])) {
            w_lo.push(f64::NEG_INFINITY);
            w_hi.push(f64::INFINITY);
        } else {
            w_lo.push(us[i]);
            w_hi.push(us[i]);
        }
    }
    Dataset::new(Covariates::new(xs, 1)?, Some(w_lo), Some(w_hi))
}

/// What a Monte Carlo table estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Rejection rate at the boundary of the identified set.
    Size,
    /// Rejection rate at intercepts offset above the boundary.
    Power,
}

impl TableKind {
    pub fn id(&self) -> &'static str {
        match self {
            TableKind::Size => "size",
            TableKind::Power => "power",
        }
    }
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "size" => Ok(TableKind::Size),
            "power" => Ok(TableKind::Power),
            other => Err(Error::InvalidInput(format!(
                "unknown table kind {other:?}: expected \"size\" or \"power\""
            ))),
        }
    }
}

/// One estimated rejection rate.
#[derive(Debug, Clone)]
pub struct McRow {
    pub n: usize,
    pub rule: TruncationRule,
    /// Test level (per-row for size tables, table-wide for power tables).
    pub alpha: f64,
    /// Intercept offset above the boundary (zero in size tables).
    pub offset: f64,
    /// Fraction of replications that rejected.
    pub estimate: f64,
}

/// A size or power table plus everything needed to reproduce it.
#[derive(Debug, Clone)]
pub struct McTable {
    pub kind: TableKind,
    pub design: DesignSpec,
    pub ns: Vec<usize>,
    pub rows: Vec<McRow>,
    pub reps: usize,
    pub seed: u64,
    /// Least-favorable replication count (power tables only).
    pub lf_b: Option<usize>,
}

impl McTable {
    /// Writes the table as CSV: `# key=value` metadata comments, then one
    /// row per (level, rule) or (rule, offset) with a column per sample
    /// size.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# kind={}", self.kind.id())?;
        writeln!(w, "# design={}", self.design.id())?;
        writeln!(w, "# theta1_bar={}", self.design.boundary_theta1())?;
        writeln!(w, "# reps={}", self.reps)?;
        writeln!(w, "# seed={}", self.seed)?;
        if let Some(lf_b) = self.lf_b {
            writeln!(w, "# lf_b={lf_b}")?;
        }
        let mut header: Vec<String> = match self.kind {
            TableKind::Size => vec!["alpha".into(), "rule".into()],
            TableKind::Power => vec!["rule".into(), "offset".into()],
        };
        header.extend(self.ns.iter().map(|n| format!("n={n}")));
        writeln!(w, "{}", header.join(","))?;

        // Rows are produced n-fastest; regroup them into one output line
        // per leading pair, preserving first-appearance order.
        let mut lines: Vec<(String, Vec<String>)> = Vec::new();
        for row in &self.rows {
            let key = match self.kind {
                TableKind::Size => format!("{},{}", row.alpha, row.rule),
                TableKind::Power => format!("{},{}", row.rule, row.offset),
            };
            match lines.iter_mut().find(|(k, _)| *k == key) {
                Some((_, cells)) => cells.push(format!("{:.4}", row.estimate)),
                None => lines.push((key, vec![format!("{:.4}", row.estimate)])),
            }
        }
        for (key, cells) in lines {
            writeln!(w, "{key},{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn validate_common(ns: &[usize], rules: &[TruncationRule], reps: usize) -> Result<()> {
    if ns.is_empty() || rules.is_empty() {
        return Err(Error::InvalidInput(
            "sample sizes and truncation rules must be non-empty".into(),
        ));
    }
    if let Some(&n) = ns.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidInput(format!("sample sizes must be at least 2, got {n}")));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("replication count must be at least 1".into()));
    }
    Ok(())
}

/// Estimates the rejection rate at the boundary point `θ̄` with the
/// analytic critical value, for every combination of sample size,
/// truncation rule and level.
pub fn size_table(
    design: DesignSpec,
    ns: &[usize],
    rules: &[TruncationRule],
    alphas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<McTable> {
    validate_common(ns, rules, reps)?;
    if alphas.is_empty() {
        return Err(Error::InvalidInput("levels must be non-empty".into()));
    }
    if let Some(&a) = alphas.iter().find(|a| !(a.is_finite() && 0.0 < **a && **a < 1.0)) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie strictly between 0 and 1, got {a}"
        )));
    }
    let theta_bar = Theta::new(vec![design.boundary_theta1(), 0.0])?;
    let config = ScanConfig::default();

    // rejections[(alpha, rule, n)] in row order: alpha outer, rule, n.
    let mut rows = Vec::with_capacity(alphas.len() * rules.len() * ns.len());
    for &alpha in alphas {
        for rule in rules {
            for &n in ns {
                let tags_base = {
                    let rt = rule.stream_tags();
                    [purpose::SIZE, design.tag(), n as u64, rt[0], rt[1]]
                };
                let hits: usize = (0..reps as u64)
                    .into_par_iter()
                    .map(|rep| -> Result<usize> {
                        let mut tags = tags_base.to_vec();
                        tags.push(rep);
                        let mut rng = substream(seed, &tags);
                        let data = simulate_design(design, n, &mut rng)?;
                        let x = data.covariates();
                        let t_n = truncation(*rule, n, x)?;
                        let vol = build_hull(x)?.volume();
                        let m = Model::Missing.moments(&data, &theta_bar)?;
                        let s = scan_statistic(x, &m, t_n, &config)?.s;
                        let cv = analytic_critical_value(n, 1, 1, vol, t_n, alpha)?;
                        Ok(cv.rejects(s, n) as usize)
                    })
                    .try_reduce(|| 0, |a, b| Ok(a + b))?;
                rows.push(McRow {
                    n,
                    rule: rule.clone(),
                    alpha,
                    offset: 0.0,
                    estimate: hits as f64 / reps as f64,
                });
            }
        }
    }
    Ok(McTable {
        kind: TableKind::Size,
        design,
        ns: ns.to_vec(),
        rows,
        reps,
        seed,
        lf_b: None,
    })
}

/// Estimates the rejection rate at intercepts `θ̄₁ + offset` with the
/// least-favorable critical value, for every combination of sample size,
/// truncation rule and offset.
///
/// All offsets of one replication reuse the same simulated dataset, so
/// power is exactly monotone in the offset for each replication's data and
/// the estimates differ only through the moment evaluation point.
pub fn power_table(
    design: DesignSpec,
    ns: &[usize],
    rules: &[TruncationRule],
    offsets: &[f64],
    alpha: f64,
    reps: usize,
    lf_b: usize,
    seed: u64,
) -> Result<McTable> {
    validate_common(ns, rules, reps)?;
    if offsets.is_empty() {
        return Err(Error::InvalidInput("offsets must be non-empty".into()));
    }
    if let Some(&o) = offsets.iter().find(|o| !(o.is_finite() && **o >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "offsets must be nonnegative reals, got {o}"
        )));
    }
    if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    let config = ScanConfig::default();
    let thetas: Vec<Theta> = offsets
        .iter()
        .map(|o| Theta::new(vec![design.boundary_theta1() + o, 0.0]))
        .collect::<Result<_>>()?;

    // hits[rule][offset][n]
    let mut hits = vec![vec![vec![0usize; ns.len()]; offsets.len()]; rules.len()];
    for (ri, rule) in rules.iter().enumerate() {
        for (ni, &n) in ns.iter().enumerate() {
            let cv = least_favorable_critical_value_with_rule(design, n, rule, alpha, lf_b, seed)?;
            let tags_base = {
                let rt = rule.stream_tags();
                [purpose::POWER, design.tag(), n as u64, rt[0], rt[1]]
            };
            let counts: Vec<usize> = (0..reps as u64)
                .into_par_iter()
                .map(|rep| -> Result<Vec<usize>> {
                    let mut tags = tags_base.to_vec();
                    tags.push(rep);
                    let mut rng = substream(seed, &tags);
                    let data = simulate_design(design, n, &mut rng)?;
                    let x = data.covariates();
                    let t_n = truncation(*rule, n, x)?;
                    let mut row = vec![0usize; thetas.len()];
                    for (oi, theta) in thetas.iter().enumerate() {
                        let m = Model::Missing.moments(&data, theta)?;
                        let s = scan_statistic(x, &m, t_n, &config)?.s;
                        row[oi] = cv.rejects(s, n) as usize;
                    }
                    Ok(row)
                })
                .try_reduce(
                    || vec![0usize; thetas.len()],
                    |mut a, b| {
                        for (ai, bi) in a.iter_mut().zip(&b) {
                            *ai += bi;
                        }
                        Ok(a)
                    },
                )?;
            for (oi, &c) in counts.iter().enumerate() {
                hits[ri][oi][ni] = c;
            }
        }
    }

    let mut rows = Vec::with_capacity(rules.len() * offsets.len() * ns.len());
    for (ri, rule) in rules.iter().enumerate() {
        for (oi, &offset) in offsets.iter().enumerate() {
            for (ni, &n) in ns.iter().enumerate() {
                rows.push(McRow {
                    n,
                    rule: rule.clone(),
                    alpha,
                    offset,
                    estimate: hits[ri][oi][ni] as f64 / reps as f64,
                });
            }
        }
    }
    Ok(McTable {
        kind: TableKind::Power,
        design,
        ns: ns.to_vec(),
        rows,
        reps,
        seed,
        lf_b: Some(lf_b),
    })
}
