//! Support geometry: the convex hull of the covariates and truncation rules.
//!
//! The scan searches boxes inside the estimated support, and the analytic
//! critical values need the support's volume — in one dimension the observed
//! range, in two the area of the convex hull of the scatter. The truncation
//! rules produce the smallest admissible box side `t_n`, the knob that
//! controls the finest scale the statistic looks at.

use crate::data::Covariates;
use crate::error::{Error, Result};

/// Convex-hull estimate of the covariate support.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportHull {
    dim: usize,
    mins: Vec<f64>,
    maxs: Vec<f64>,
    /// Hull vertices in counter-clockwise order; empty when `dim == 1`.
    vertices: Vec<[f64; 2]>,
    volume: f64,
}

impl SupportHull {
    /// Covariate dimension (1 or 2).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length (d = 1) or area (d = 2) of the hull.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Per-coordinate minima.
    pub fn mins(&self) -> &[f64] {
        &self.mins
    }

    /// Per-coordinate maxima.
    pub fn maxs(&self) -> &[f64] {
        &self.maxs
    }

    /// Per-coordinate ranges max - min.
    pub fn ranges(&self) -> Vec<f64> {
        self.mins.iter().zip(&self.maxs).map(|(lo, hi)| hi - lo).collect()
    }

    /// Hull polygon vertices (counter-clockwise); empty for `dim == 1`.
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Whether `point` lies in the hull, boundary included, within an
    /// absolute cross-product tolerance.
    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        match self.dim {
            1 => point[0] >= self.mins[0] - tol && point[0] <= self.maxs[0] + tol,
            _ => {
                let m = self.vertices.len();
                (0..m).all(|k| {
                    let a = self.vertices[k];
                    let b = self.vertices[(k + 1) % m];
                    cross(a, b, [point[0], point[1]]) >= -tol
                })
            }
        }
    }
}

/// Cross product (b - a) x (p - a): positive when `p` is left of `a -> b`.
fn cross(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Builds the convex hull of the covariate points.
///
/// One dimension yields the observed range; two dimensions run a monotone
/// chain (lexicographic sort, counter-clockwise output, collinear boundary
/// points dropped). Dimensions above two are rejected, as is support with
/// zero volume (identical points; collinear scatter in d = 2).
pub fn build_hull(points: &Covariates) -> Result<SupportHull> {
    let n = points.n();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 points to estimate the support, got {n}"
        )));
    }
    let dim = points.dim();
    let bounds = points.bounds();
    let mins: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let maxs: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    match dim {
        1 => {
            let volume = maxs[0] - mins[0];
            if volume <= 0.0 {
                return Err(Error::DegenerateSupport(format!(
                    "all {n} covariate values equal {}",
                    mins[0]
                )));
            }
            Ok(SupportHull { dim, mins, maxs, vertices: Vec::new(), volume })
        }
        2 => {
            let mut pts: Vec<[f64; 2]> =
                (0..n).map(|i| [points.row(i)[0], points.row(i)[1]]).collect();
            pts.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
            pts.dedup();
            let hull = monotone_chain(&pts);
            let volume = polygon_area(&hull);
            if hull.len() < 3 || volume <= 0.0 {
                return Err(Error::DegenerateSupport(
                    "covariate scatter is collinear: the hull has no area".into(),
                ));
            }
            Ok(SupportHull { dim, mins, maxs, vertices: hull, volume })
        }
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Andrew's monotone chain on lexicographically sorted, deduplicated points.
/// Returns counter-clockwise vertices without the closing repeat.
fn monotone_chain(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    if pts.len() < 3 {
        return pts.to_vec();
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    // Lower hull, then upper hull over the reversed order.
    for pass in [true, false] {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop(); // endpoint re-enters as the other pass's start
    }
    hull
}

/// Shoelace area of a simple polygon given counter-clockwise.
fn polygon_area(vertices: &[[f64; 2]]) -> f64 {
    let m = vertices.len();
    if m < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for k in 0..m {
        let a = vertices[k];
        let b = vertices[(k + 1) % m];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    twice / 2.0
}

/// Rules for the smallest admissible box side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationRule {
    /// A fixed side length.
    Fixed(f64),
    /// `n^-delta`.
    Power(f64),
    /// `n^-delta` times the coordinate range (geometric mean across
    /// coordinates when d > 1).
    PowerScaled(f64),
}

impl TruncationRule {
    /// CLI spelling of this rule (`fixed:v`, `pow:d`, `pow-scaled:d`).
    pub fn label(&self) -> String {
        match self {
            TruncationRule::Fixed(v) => format!("fixed:{v}"),
            TruncationRule::Power(d) => format!("pow:{d}"),
            TruncationRule::PowerScaled(d) => format!("pow-scaled:{d}"),
        }
    }

    /// Stable tag for RNG stream derivation.
    pub(crate) fn stream_tags(&self) -> [u64; 2] {
        match self {
            TruncationRule::Fixed(v) => [0, v.to_bits()],
            TruncationRule::Power(d) => [1, d.to_bits()],
            TruncationRule::PowerScaled(d) => [2, d.to_bits()],
        }
    }
}

impl std::fmt::Display for TruncationRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for TruncationRule {
    type Err = Error;

    /// Parses the CLI spelling: `fixed:0.2`, `pow:0.3333`, `pow-scaled:0.3333`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s.split_once(':').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "truncation rule \"{s}\" must look like fixed:v, pow:d, or pow-scaled:d"
            ))
        })?;
        let value: f64 = value.parse().map_err(|_| {
            Error::InvalidConfig(format!("truncation rule \"{s}\" has a malformed number"))
        })?;
        match kind {
            "fixed" => Ok(TruncationRule::Fixed(value)),
            "pow" => Ok(TruncationRule::Power(value)),
            "pow-scaled" => Ok(TruncationRule::PowerScaled(value)),
            _ => Err(Error::InvalidConfig(format!(
                "unknown truncation rule kind \"{kind}\" (fixed, pow, pow-scaled)"
            ))),
        }
    }
}

/// Evaluates a truncation rule on a dataset's covariates.
///
/// The result must be positive and must not exceed every coordinate range
/// (a box of side `t_n` has to fit somewhere).
pub fn truncation(rule: TruncationRule, n: usize, points: &Covariates) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidTruncation(format!("need n >= 2 observations, got {n}")));
    }
    let ranges: Vec<f64> =
        points.bounds().iter().map(|(lo, hi)| hi - lo).collect();
    let t_n = match rule {
        TruncationRule::Fixed(v) => v,
        TruncationRule::Power(delta) => {
            check_delta(delta)?;
            (n as f64).powf(-delta)
        }
        TruncationRule::PowerScaled(delta) => {
            check_delta(delta)?;
            let scale = if ranges.len() == 1 {
                ranges[0]
            } else {
                // Geometric mean keeps vol / t_n^d dimensionless in d > 1.
                ranges.iter().map(|r| r.max(0.0)).product::<f64>().powf(1.0 / ranges.len() as f64)
            };
            (n as f64).powf(-delta) * scale
        }
    };
    if !t_n.is_finite() || t_n <= 0.0 {
        return Err(Error::InvalidTruncation(format!(
            "rule {rule} evaluates to t_n = {t_n}, which is not a positive real"
        )));
    }
    if ranges.iter().all(|&r| t_n > r) {
        return Err(Error::InvalidTruncation(format!(
            "t_n = {t_n} exceeds every coordinate range (max range {})",
            ranges.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        )));
    }
    Ok(t_n)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidTruncation(format!(
            "power rule exponent must satisfy 0 < delta < 1, got {delta}"
        )));
    }
    Ok(())
}
