//! Critical values for the scan statistic.
//!
//! Four engines, trading accuracy for speed:
//!
//! * **Analytic**: the scan's null distribution has Gumbel-type extremes;
//!   with `ĉ = vol(support) / t_n^{d_X}` boxes per scale the level-α
//!   quantile on the `S_n` scale is
//!   `q = (ln d_Y - ln(-ln(1-α)) + b) / a` with norming constants
//!   `a = sqrt(2 n ln ĉ)` and
//!   `b = 2 ln ĉ + (2 d_X - 1/2) ln ln ĉ - ln(2√π)`.
//! * **Refined**: instead of the limiting Gumbel, solve the tail
//!   approximation `P(√n·S_n > q) ≈ 1 - exp(-h(q))` with
//!   `h(q) = K q^{4 d_X - 1} exp(-q²/2)`,
//!   `K = d_Y · vol · t_n^{-d_X} · π^{-1/2} · 2^{-2 d_X - 1/2}`,
//!   by bisection on the decreasing branch. More accurate at moderate `n`;
//!   unavailable when even the mode of `h` cannot reach the level.
//! * **Simulated**: Gaussian multiplier bootstrap — redraw the moments as
//!   `Y*_i ~ N(0, M̂(X_i))` at the observed covariates and rescan; take the
//!   `⌈B(1-α)⌉`-th order statistic of `B` replicated statistics.
//! * **Least-favorable**: simulate full datasets from the hardest null
//!   configuration and rescan (see the Monte Carlo module for the design
//!   variants, and [`least_favorable_critical_value_on_data`] for the
//!   data-conditional variant used on real samples).
//!
//! All thresholds record which scale they compare on: the refined engine
//! works on `√n·S_n`, the others on `S_n`. Use [`CriticalValue::rejects`]
//! rather than comparing raw numbers.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::Covariates;
use crate::error::{Error, Result};
use crate::geometry::{truncation, TruncationRule};
use crate::models::{Model, Theta};
use crate::montecarlo::{simulate_least_favorable, DesignSpec};
use crate::rng::{purpose, substream};
use crate::scan::{scan_statistic, MomentMatrix, ScanConfig};

/// Norming constants of the extreme-value approximation.
#[derive(Debug, Clone, Copy)]
pub struct GumbelConstants {
    /// Effective number of boxes at the truncation scale,
    /// `vol / t_n^{d_X}`.
    pub c_hat: f64,
    /// Scale norming `a = sqrt(2 n ln ĉ)`.
    pub a: f64,
    /// Location norming `b = 2 ln ĉ + (2 d_X - 1/2) ln ln ĉ - ln(2√π)`.
    pub b: f64,
}

impl GumbelConstants {
    /// Computes the norming constants, rejecting configurations where the
    /// approximation is meaningless (`ĉ <= 1`, i.e. at most one box).
    pub fn new(n: usize, d_x: usize, vol_hull: f64, t_n: f64) -> Result<Self> {
        if !(1..=2).contains(&d_x) {
            return Err(Error::UnsupportedDimension(d_x));
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "the extreme-value approximation needs n >= 2, got {n}"
            )));
        }
        if !(vol_hull.is_finite() && vol_hull > 0.0) {
            return Err(Error::InvalidInput(format!(
                "support volume must be a positive real, got {vol_hull}"
            )));
        }
        if !(t_n.is_finite() && t_n > 0.0) {
            return Err(Error::InvalidTruncation(format!(
                "t_n must be a positive real, got {t_n}"
            )));
        }
        let c_hat = vol_hull / t_n.powi(d_x as i32);
        if !(c_hat > 1.0) {
            return Err(Error::TruncationTooCoarse(format!(
                "vol / t_n^d = {c_hat:.6} boxes at the truncation scale; \
                 the extreme-value approximation needs more than one"
            )));
        }
        let ln_c = c_hat.ln();
        let a = (2.0 * n as f64 * ln_c).sqrt();
        let b = 2.0 * ln_c + (2.0 * d_x as f64 - 0.5) * ln_c.ln()
            - (2.0 * std::f64::consts::PI.sqrt()).ln();
        Ok(Self { c_hat, a, b })
    }
}

/// Which engine produced a critical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalValueMethod {
    Analytic,
    Refined,
    Simulated,
    LeastFavorable,
}

impl CriticalValueMethod {
    /// Stable identifier used in CLI flags and report output.
    pub fn id(&self) -> &'static str {
        match self {
            CriticalValueMethod::Analytic => "analytic",
            CriticalValueMethod::Refined => "refined",
            CriticalValueMethod::Simulated => "simulated",
            CriticalValueMethod::LeastFavorable => "lf",
        }
    }

    /// True when the threshold lives on the `√n·S_n` scale.
    pub fn root_n_scale(&self) -> bool {
        matches!(self, CriticalValueMethod::Refined)
    }
}

impl fmt::Display for CriticalValueMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for CriticalValueMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(CriticalValueMethod::Analytic),
            "refined" => Ok(CriticalValueMethod::Refined),
            "simulated" => Ok(CriticalValueMethod::Simulated),
            "lf" => Ok(CriticalValueMethod::LeastFavorable),
            other => Err(Error::InvalidInput(format!(
                "unknown critical value method {other:?}: expected \
                 \"analytic\", \"refined\", \"simulated\" or \"lf\""
            ))),
        }
    }
}

/// A level-α threshold together with the scale it compares on.
#[derive(Debug, Clone)]
pub struct CriticalValue {
    /// Test level.
    pub alpha: f64,
    /// Engine that produced the threshold.
    pub method: CriticalValueMethod,
    /// Threshold on the engine's own scale (see
    /// [`CriticalValueMethod::root_n_scale`]).
    pub threshold: f64,
    /// Replication count for the simulation engines.
    pub b: Option<usize>,
    /// Seed for the simulation engines.
    pub seed: Option<u64>,
}

impl CriticalValue {
    /// The statistic on this engine's comparison scale.
    pub fn scaled_statistic(&self, s_n: f64, n: usize) -> f64 {
        if self.method.root_n_scale() {
            (n as f64).sqrt() * s_n
        } else {
            s_n
        }
    }

    /// Does the observed statistic exceed the threshold?
    pub fn rejects(&self, s_n: f64, n: usize) -> bool {
        self.scaled_statistic(s_n, n) > self.threshold
    }

    /// Threshold converted to the `S_n` scale for reporting.
    pub fn threshold_for_s(&self, n: usize) -> f64 {
        if self.method.root_n_scale() {
            self.threshold / (n as f64).sqrt()
        } else {
            self.threshold
        }
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    Ok(())
}

/// Analytic Gumbel critical value on the `S_n` scale.
pub fn analytic_critical_value(
    n: usize,
    d_x: usize,
    d_y: usize,
    vol_hull: f64,
    t_n: f64,
    alpha: f64,
) -> Result<CriticalValue> {
    validate_alpha(alpha)?;
    if d_y == 0 {
        return Err(Error::InvalidInput("d_y must be at least 1".into()));
    }
    let gc = GumbelConstants::new(n, d_x, vol_hull, t_n)?;
    let tail = -(-alpha).ln_1p(); // -ln(1 - alpha)
    let threshold = ((d_y as f64).ln() - tail.ln() + gc.b) / gc.a;
    Ok(CriticalValue {
        alpha,
        method: CriticalValueMethod::Analytic,
        threshold,
        b: None,
        seed: None,
    })
}

/// Refined tail-approximation critical value on the `√n·S_n` scale.
///
/// Solves `exp(-h(q)) = 1 - α` on the decreasing branch of
/// `h(q) = K q^{4 d_X - 1} exp(-q²/2)`. Fails with
/// [`Error::RefinedUnavailable`] when even the mode of `h` lies below
/// `-ln(1-α)`, i.e. the approximation cannot reach the requested level.
pub fn refined_critical_value(
    n: usize,
    d_x: usize,
    d_y: usize,
    vol_hull: f64,
    t_n: f64,
    alpha: f64,
) -> Result<CriticalValue> {
    validate_alpha(alpha)?;
    if d_y == 0 {
        return Err(Error::InvalidInput("d_y must be at least 1".into()));
    }
    if !(1..=2).contains(&d_x) {
        return Err(Error::UnsupportedDimension(d_x));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "the refined approximation needs n >= 2, got {n}"
        )));
    }
    if !(vol_hull.is_finite() && vol_hull > 0.0) {
        return Err(Error::InvalidInput(format!(
            "support volume must be a positive real, got {vol_hull}"
        )));
    }
    if !(t_n.is_finite() && t_n > 0.0) {
        return Err(Error::InvalidTruncation(format!(
            "t_n must be a positive real, got {t_n}"
        )));
    }

    let k = d_y as f64 * vol_hull * t_n.powi(-(d_x as i32))
        / std::f64::consts::PI.sqrt()
        / 2f64.powf(2.0 * d_x as f64 + 0.5);
    let power = 4.0 * d_x as f64 - 1.0;
    let h = |q: f64| k * q.powf(power) * (-0.5 * q * q).exp();
    let target = -(-alpha).ln_1p();
    let cover = 1.0 - alpha;

    let q_mode = power.sqrt();
    if h(q_mode) < target {
        return Err(Error::RefinedUnavailable(format!(
            "the tail approximation peaks at {:.6}, below -ln(1-alpha) = {target:.6}; \
             no level-{alpha} threshold exists on the decreasing branch",
            h(q_mode)
        )));
    }
    if ((-h(q_mode)).exp() - cover).abs() <= 1e-12 {
        return Ok(CriticalValue {
            alpha,
            method: CriticalValueMethod::Refined,
            threshold: q_mode,
            b: None,
            seed: None,
        });
    }

    // Bracket the root: h decreases to 0 past the mode, so double the step
    // until the tail drops below the target.
    let mut lo = q_mode;
    let mut hi = q_mode + 1.0;
    while h(hi) >= target {
        hi += hi - q_mode;
        if !hi.is_finite() {
            return Err(Error::Internal("refined bracket diverged".into()));
        }
    }
    let mut threshold = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = (-h(mid)).exp();
        if (g - cover).abs() <= 1e-12 {
            threshold = Some(mid);
            break;
        }
        if g < cover {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let threshold = threshold.ok_or_else(|| {
        Error::Internal("refined bisection did not converge in 200 iterations".into())
    })?;
    Ok(CriticalValue {
        alpha,
        method: CriticalValueMethod::Refined,
        threshold,
        b: None,
        seed: None,
    })
}

/// Covariance of the Gaussian multiplier draws.
#[derive(Clone)]
pub enum MultiplierCovariance {
    /// Independent standard normals per moment. Sufficient whenever the
    /// moment covariance is a multiple of the identity, since the scan is
    /// scale-invariant per column.
    Identity,
    /// Pointwise estimate: the closure returns the `d_Y × d_Y` row-major
    /// covariance of the moments at one covariate row. Must be symmetric
    /// positive semidefinite.
    Pointwise(Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>),
}

impl fmt::Debug for MultiplierCovariance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MultiplierCovariance::Identity => f.write_str("Identity"),
            MultiplierCovariance::Pointwise(_) => f.write_str("Pointwise(..)"),
        }
    }
}

/// Lower-triangular Cholesky factor of a symmetric PSD matrix, tolerating
/// exactly singular directions (zero pivots).
fn cholesky(mat: &[f64], d: usize, index: usize) -> Result<Vec<f64>> {
    if mat.len() != d * d || mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCovariance { index });
    }
    let scale = (0..d).map(|i| mat[i * d + i].abs()).fold(0.0f64, f64::max).max(1.0);
    for r in 0..d {
        for c in 0..r {
            if (mat[r * d + c] - mat[c * d + r]).abs() > 1e-8 * scale {
                return Err(Error::InvalidCovariance { index });
            }
        }
    }
    let mut l = vec![0.0f64; d * d];
    for r in 0..d {
        for c in 0..=r {
            let mut sum = mat[r * d + c];
            for k in 0..c {
                sum -= l[r * d + k] * l[c * d + k];
            }
            if r == c {
                if sum < -1e-10 * scale {
                    return Err(Error::InvalidCovariance { index });
                }
                l[r * d + r] = sum.max(0.0).sqrt();
            } else if l[c * d + c] > 0.0 {
                l[r * d + c] = sum / l[c * d + c];
            } else if sum.abs() > 1e-8 * scale {
                // A zero pivot with mass below it: not PSD.
                return Err(Error::InvalidCovariance { index });
            }
        }
    }
    Ok(l)
}

/// One multiplier replication's statistics, drawn row-major (observation
/// outer, moment inner) from the replication's own substream.
fn multiplier_statistic(
    x: &Covariates,
    d_y: usize,
    t_n: f64,
    factors: Option<&[Vec<f64>]>,
    seed: u64,
    rep: u64,
    config: &ScanConfig,
) -> Result<f64> {
    let n = x.n();
    let mut rng = substream(seed, &[purpose::MULTIPLIER, rep]);
    let mut values = vec![0.0f64; n * d_y];
    match factors {
        None => {
            for v in values.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        Some(factors) => {
            let mut z = vec![0.0f64; d_y];
            for i in 0..n {
                for zj in z.iter_mut() {
                    *zj = rng.sample(StandardNormal);
                }
                let l = &factors[i];
                for r in 0..d_y {
                    let mut y = 0.0;
                    for c in 0..=r {
                        y += l[r * d_y + c] * z[c];
                    }
                    values[i * d_y + r] = y;
                }
            }
        }
    }
    let moments = MomentMatrix::new(values, d_y, vec![])?;
    Ok(scan_statistic(x, &moments, t_n, config)?.s)
}

/// Draws `b` multiplier replications of the scan statistic at fixed
/// covariates, one deterministic substream per replication (the result does
/// not depend on thread count). Returned in replication order, unsorted.
pub fn simulated_null_sample(
    x: &Covariates,
    d_y: usize,
    t_n: f64,
    b: usize,
    seed: u64,
    covariance: &MultiplierCovariance,
    config: &ScanConfig,
) -> Result<Vec<f64>> {
    if d_y == 0 {
        return Err(Error::InvalidInput("d_y must be at least 1".into()));
    }
    if b == 0 {
        return Err(Error::InvalidInput("replication count B must be at least 1".into()));
    }
    let factors: Option<Vec<Vec<f64>>> = match covariance {
        MultiplierCovariance::Identity => None,
        MultiplierCovariance::Pointwise(f) => Some(
            (0..x.n())
                .map(|i| cholesky(&f(x.row(i)), d_y, i))
                .collect::<Result<_>>()?,
        ),
    };
    (0..b as u64)
        .into_par_iter()
        .map(|rep| multiplier_statistic(x, d_y, t_n, factors.as_deref(), seed, rep, config))
        .collect()
}

/// The `⌈B(1-α)⌉`-th order statistic of the replicated statistics.
///
/// The rank is computed with a one-sided nudge so that an exactly-integer
/// `B(1-α)` is not pushed up a rank by floating-point round-off
/// (`2000 × 0.95` evaluates to slightly above `1900`).
fn order_statistic(mut draws: Vec<f64>, alpha: f64) -> f64 {
    let b = draws.len();
    let rank = ((b as f64) * (1.0 - alpha) - 1e-9).ceil() as usize;
    let rank = rank.clamp(1, b);
    draws.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    draws[rank - 1]
}

/// Gaussian-multiplier critical value at the observed covariates, on the
/// `S_n` scale.
pub fn simulated_critical_value(
    x: &Covariates,
    d_y: usize,
    t_n: f64,
    alpha: f64,
    b: usize,
    seed: u64,
    covariance: &MultiplierCovariance,
    config: &ScanConfig,
) -> Result<CriticalValue> {
    validate_alpha(alpha)?;
    let draws = simulated_null_sample(x, d_y, t_n, b, seed, covariance, config)?;
    Ok(CriticalValue {
        alpha,
        method: CriticalValueMethod::Simulated,
        threshold: order_statistic(draws, alpha),
        b: Some(b),
        seed: Some(seed),
    })
}

/// Least-favorable critical value conditional on the observed covariates,
/// on the `S_n` scale.
///
/// Holds `X` fixed and redraws the moment values from the hardest null:
/// for the missing-data model an independent fair `±1/2` coin per
/// observation; for the interval model the anti-correlated pair
/// `(+1/2, -1/2)` / `(-1/2, +1/2)` with equal probability, the tightest
/// configuration consistent with both inequalities binding.
pub fn least_favorable_critical_value_on_data(
    x: &Covariates,
    model: Model,
    t_n: f64,
    alpha: f64,
    b: usize,
    seed: u64,
    config: &ScanConfig,
) -> Result<CriticalValue> {
    validate_alpha(alpha)?;
    if b == 0 {
        return Err(Error::InvalidInput("replication count B must be at least 1".into()));
    }
    let n = x.n();
    let d_y = model.d_y();
    let draws: Vec<f64> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, &[purpose::LEAST_FAVORABLE, rep]);
            let mut values = Vec::with_capacity(n * d_y);
            for _ in 0..n {
                let up = rng.gen_bool(0.5);
                match model {
                    Model::Missing => values.push(if up { 0.5 } else { -0.5 }),
                    Model::Interval => {
                        values.push(if up { 0.5 } else { -0.5 });
                        values.push(if up { -0.5 } else { 0.5 });
                    }
                }
            }
            let moments = MomentMatrix::new(values, d_y, vec![])?;
            Ok(scan_statistic(x, &moments, t_n, config)?.s)
        })
        .collect::<Result<_>>()?;
    Ok(CriticalValue {
        alpha,
        method: CriticalValueMethod::LeastFavorable,
        threshold: order_statistic(draws, alpha),
        b: Some(b),
        seed: Some(seed),
    })
}

/// Least-favorable critical value for a Monte Carlo design at a fixed
/// truncation, on the `S_n` scale.
///
/// Unlike the multiplier bootstrap this redraws whole datasets — covariates
/// included — from the design's hardest null: missingness flattened to its
/// minimum probability `p*`, moments evaluated at the boundary intercept
/// `θ̄₁ = p*/(1 - p*)`, where every conditional moment binds exactly.
pub fn least_favorable_critical_value(
    design: DesignSpec,
    n: usize,
    t_n: f64,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<CriticalValue> {
    least_favorable_critical_value_with_rule(design, n, &TruncationRule::Fixed(t_n), alpha, b, seed)
}

/// [`least_favorable_critical_value`] with the truncation re-derived from
/// each replication's own covariate draw, as data-dependent rules require.
pub fn least_favorable_critical_value_with_rule(
    design: DesignSpec,
    n: usize,
    rule: &TruncationRule,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<CriticalValue> {
    validate_alpha(alpha)?;
    if b == 0 {
        return Err(Error::InvalidInput("replication count B must be at least 1".into()));
    }
    let theta_bar = Theta::new(vec![design.boundary_theta1(), 0.0])?;
    let config = ScanConfig::default();
    let rt = rule.stream_tags();
    let draws: Vec<f64> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(
                seed,
                &[purpose::LEAST_FAVORABLE, design.tag(), n as u64, rt[0], rt[1], rep],
            );
            let data = simulate_least_favorable(design, n, &mut rng)?;
            let x = data.covariates();
            let t_n = truncation(*rule, n, x)?;
            let m = Model::Missing.moments(&data, &theta_bar)?;
            Ok(scan_statistic(x, &m, t_n, &config)?.s)
        })
        .collect::<Result<_>>()?;
    Ok(CriticalValue {
        alpha,
        method: CriticalValueMethod::LeastFavorable,
        threshold: order_statistic(draws, alpha),
        b: Some(b),
        seed: Some(seed),
    })
}
