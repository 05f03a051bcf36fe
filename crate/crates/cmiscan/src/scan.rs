//! Multiscale studentized scan statistics.
//!
//! For each moment column `j` the scan visits every data-realizable box with
//! all side lengths at least `t_n`, studentizes the box's moment sum, and
//! keeps the most negative value. Writing `s1 = Σ_cell m_ij` and
//! `s2 = Σ_cell m_ij²`, the studentized value of a box is
//!
//! ```text
//! s1 / sqrt(n * s2 - s1²)
//! ```
//!
//! which equals the empirical `E_n[m·1(cell)] / σ̂` with the variance taken
//! over the full sample (points outside the box count as zeros). The
//! per-moment statistic is the negative part of the minimum over boxes,
//!
//! ```text
//! T_j = max(0, -min_cells s1 / sqrt(n·s2 - s1²)),     S = max_j T_j ,
//! ```
//!
//! so `T_j > 0` flags a region where the moment is convincingly negative.
//! Boxes whose moment values have zero sample variance carry no sign
//! information and are skipped.
//!
//! One covariate dimension is exact: a closed interval picks out a
//! contiguous run of the sort order, so the O(n²) candidate runs are
//! evaluated in O(1) each from prefix sums. Two dimensions use candidate
//! edges coarsened to at most [`ScanConfig::max_edges_per_dim`]
//! quantile-spaced values per coordinate and summed-area tables; the result
//! is a lower bound on the exact statistic and coincides with it when no
//! coarsening occurs.

use crate::data::Covariates;
use crate::error::{Error, Result};

/// Tuning knobs for the scan.
#[derive(Debug, Clone)]
pub struct ScanConfig {
    /// Cap on candidate edges per coordinate for the d = 2 grid path.
    pub max_edges_per_dim: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        // 64 edges bound the 2-D cell count at a few million.
        Self { max_edges_per_dim: 64 }
    }
}

/// Moment values `m_j(W_i, θ)` at one parameter point, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    values: Vec<f64>,
    d_y: usize,
    theta: Vec<f64>,
}

impl MomentMatrix {
    /// Wraps an `n × d_y` row-major buffer of finite moment values.
    ///
    /// `theta` records the parameter the moments were evaluated at; it may
    /// be empty when the values are not tied to a parameter (multiplier
    /// draws, null-simulation coins).
    pub fn new(values: Vec<f64>, d_y: usize, theta: Vec<f64>) -> Result<Self> {
        if d_y == 0 {
            return Err(Error::InvalidInput("moment dimension d_y must be at least 1".into()));
        }
        if values.is_empty() || values.len() % d_y != 0 {
            return Err(Error::InvalidInput(format!(
                "moment buffer length {} is not a positive multiple of d_y = {d_y}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "moment ({}, {}) is not finite: {}",
                pos / d_y,
                pos % d_y,
                values[pos]
            )));
        }
        Ok(Self { values, d_y, theta })
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.values.len() / self.d_y
    }

    /// Number of moment functions d_Y.
    pub fn d_y(&self) -> usize {
        self.d_y
    }

    /// The parameter the moments were evaluated at (possibly empty).
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Moment value for observation `i`, column `j`.
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d_y + j]
    }
}

/// One scanned box: a canonical realizing interval and its member set.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Lower corner of the box.
    pub lower: Vec<f64>,
    /// Side lengths, each at least the `t_n` the scan ran with.
    pub side: Vec<f64>,
    /// Covered observations, ascending, in original data order.
    pub members: Vec<usize>,
}

/// Scan outcome: per-moment statistics plus bookkeeping.
#[derive(Debug, Clone)]
pub struct ScanResult {
    /// Per-moment statistics `T_j >= 0`.
    pub t: Vec<f64>,
    /// `max_j T_j`.
    pub s: f64,
    /// Minimizing cell per moment, present whenever `T_j > 0`.
    pub argmin: Vec<Option<Cell>>,
    /// (box, moment) pairs with positive studentization variance.
    pub cells_evaluated: u64,
    /// (box, moment) pairs skipped for zero variance.
    pub cells_skipped: u64,
}

/// Studentized value of one cell: `s1 / sqrt(n·s2 - s1²)` over the member
/// values, `None` when the denominator is not positive (empty cell or zero
/// sample variance).
///
/// `n` is the full sample size — the studentization treats observations
/// outside the cell as zero contributions, it does not renormalize to the
/// cell count.
pub fn cell_statistic(cell_values: &[f64], n: usize) -> Option<f64> {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &v in cell_values {
        s1 += v;
        s2 += v * v;
    }
    let denom = n as f64 * s2 - s1 * s1;
    if denom > 0.0 {
        Some(s1 / denom.sqrt())
    } else {
        None
    }
}

/// Is the contiguous sorted-order run `[i..=j]` realizable by a closed
/// interval of side `>= t_n` inside the support `[xs[0], xs[n-1]]`?
///
/// The interval must cover `xs[i..=j]` and exclude the flanking points, so
/// its side must stay strictly below the flank-to-flank gap — except for the
/// whole-support run, which may use the support itself (side exactly the
/// range). Runs whose boundary splits tied values are never realizable.
#[inline]
fn run_realizable(xs: &[f64], i: usize, j: usize, t_n: f64) -> bool {
    let n = xs.len();
    if i > 0 && xs[i - 1] == xs[i] {
        return false;
    }
    if j + 1 < n && xs[j] == xs[j + 1] {
        return false;
    }
    let lo = if i > 0 { xs[i - 1] } else { xs[0] };
    let hi = if j + 1 < n { xs[j + 1] } else { xs[n - 1] };
    let gap = hi - lo;
    gap > t_n || (gap == t_n && i == 0 && j + 1 == n)
}

/// Streams the contiguous sorted-index runs `(i, j)` (inclusive) realizable
/// at `t_n`. `xs` must be sorted ascending with finite entries.
pub fn enumerate_cells_1d(xs: &[f64], t_n: f64) -> Result<impl Iterator<Item = (usize, usize)> + '_> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("cannot enumerate cells of an empty sample".into()));
    }
    if xs.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidInput("covariate values must be sorted ascending".into()));
    }
    if !(t_n.is_finite() && t_n >= 0.0) {
        return Err(Error::InvalidTruncation(format!(
            "t_n must be a nonnegative real, got {t_n}"
        )));
    }
    let n = xs.len();
    Ok((0..n)
        .flat_map(move |i| (i..n).map(move |j| (i, j)))
        .filter(move |&(i, j)| run_realizable(xs, i, j, t_n)))
}

/// Computes the scan statistic, dispatching on the covariate dimension:
/// exact contiguous-run enumeration for d = 1, the coarsened grid of
/// [`scan_statistic_grid`] for d = 2.
pub fn scan_statistic(
    x: &Covariates,
    moments: &MomentMatrix,
    t_n: f64,
    config: &ScanConfig,
) -> Result<ScanResult> {
    validate_scan_inputs(x, moments, t_n)?;
    match x.dim() {
        1 => scan_1d(x, moments, t_n),
        2 => scan_2d(x, moments, t_n, config.max_edges_per_dim),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Two-dimensional grid scan with at most `max_edges_per_dim` candidate
/// edges per coordinate (quantiles of the observed values, extremes always
/// kept). Cells are all edge pairs with side `>= t_n` in both coordinates.
pub fn scan_statistic_grid(
    x: &Covariates,
    moments: &MomentMatrix,
    t_n: f64,
    max_edges_per_dim: usize,
) -> Result<ScanResult> {
    validate_scan_inputs(x, moments, t_n)?;
    if x.dim() != 2 {
        return Err(Error::InvalidInput(format!(
            "the grid scan handles exactly 2 covariate dimensions, got {}",
            x.dim()
        )));
    }
    scan_2d(x, moments, t_n, max_edges_per_dim)
}

fn validate_scan_inputs(x: &Covariates, moments: &MomentMatrix, t_n: f64) -> Result<()> {
    if moments.n() != x.n() {
        return Err(Error::InvalidInput(format!(
            "moment matrix has {} rows but there are {} observations",
            moments.n(),
            x.n()
        )));
    }
    if !(t_n.is_finite() && t_n >= 0.0) {
        return Err(Error::InvalidTruncation(format!(
            "t_n must be a nonnegative real, got {t_n}"
        )));
    }
    Ok(())
}

/// Exact 1-D path: prefix sums over the sort order; every realizable run is
/// evaluated in O(1).
fn scan_1d(x: &Covariates, moments: &MomentMatrix, t_n: f64) -> Result<ScanResult> {
    let n = x.n();
    let nf = n as f64;
    let col: Vec<f64> = x.column(0).collect();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        col[a as usize]
            .partial_cmp(&col[b as usize])
            .expect("covariates are finite")
            .then(a.cmp(&b))
    });
    let xs: Vec<f64> = order.iter().map(|&i| col[i as usize]).collect();
    if xs[n - 1] - xs[0] < t_n {
        return Err(Error::InvalidTruncation(format!(
            "t_n = {t_n} exceeds the covariate range {}: no admissible cell",
            xs[n - 1] - xs[0]
        )));
    }

    let d_y = moments.d_y();
    let mut t = vec![0.0; d_y];
    let mut argmin: Vec<Option<Cell>> = vec![None; d_y];
    let mut evaluated = 0u64;
    let mut skipped = 0u64;
    let mut p1 = vec![0.0f64; n + 1];
    let mut p2 = vec![0.0f64; n + 1];

    for m in 0..d_y {
        for (k, &idx) in order.iter().enumerate() {
            let v = moments.value(idx as usize, m);
            p1[k + 1] = p1[k] + v;
            p2[k + 1] = p2[k] + v * v;
        }
        // Minimizing s1/sqrt(d) over cells with s1 < 0 is maximizing s1²/d,
        // tracked by cross-multiplication to keep sqrt and division out of
        // the O(n²) loop. Strict improvement only, so the first minimizer in
        // lexicographic (i, j) order wins ties.
        let mut best_num2 = 0.0f64;
        let mut best_den = 1.0f64;
        let mut best_s1 = 0.0f64;
        let mut best_run = (0usize, 0usize);

        for i in 0..n {
            if i > 0 && xs[i - 1] == xs[i] {
                continue;
            }
            let lo = if i > 0 { xs[i - 1] } else { xs[0] };
            for j in i..n {
                // Realizability, inlined from run_realizable with the
                // branch on the right flank hoisted.
                if j + 1 < n {
                    if xs[j] == xs[j + 1] {
                        continue;
                    }
                    if !(xs[j + 1] - lo > t_n) {
                        continue;
                    }
                } else {
                    let gap = xs[n - 1] - lo;
                    if !(gap > t_n || (gap == t_n && i == 0)) {
                        continue;
                    }
                }
                let s1 = p1[j + 1] - p1[i];
                let s2 = p2[j + 1] - p2[i];
                let d = nf * s2 - s1 * s1;
                if d > 0.0 {
                    evaluated += 1;
                    if s1 < 0.0 {
                        let num2 = s1 * s1;
                        if num2 * best_den > best_num2 * d {
                            best_num2 = num2;
                            best_den = d;
                            best_s1 = s1;
                            best_run = (i, j);
                        }
                    }
                } else {
                    skipped += 1;
                }
            }
        }
        if best_num2 > 0.0 {
            t[m] = -best_s1 / best_den.sqrt();
            argmin[m] = Some(cell_from_run(&xs, &order, best_run.0, best_run.1, t_n));
        }
    }
    let s = t.iter().copied().fold(0.0, f64::max);
    Ok(ScanResult { t, s, argmin, cells_evaluated: evaluated, cells_skipped: skipped })
}

/// Canonical realizing interval for the run `[i..=j]`: side
/// `max(t_n, data width)`, lower corner at the midpoint of the feasible
/// corner interval, nudged off the flanking points if rounding lands on one.
fn cell_from_run(xs: &[f64], order: &[u32], i: usize, j: usize, t_n: f64) -> Cell {
    let n = xs.len();
    let side = t_n.max(xs[j] - xs[i]);
    let mut lo = (xs[j] - side).max(xs[0]);
    let mut hi = xs[i].min(xs[n - 1] - side);
    if i > 0 {
        lo = lo.max(xs[i - 1]);
    }
    if j + 1 < n {
        hi = hi.min(xs[j + 1] - side);
    }
    let mut corner = 0.5 * (lo + hi);
    corner = corner.clamp(lo.min(hi), hi.max(lo));
    if i > 0 && corner <= xs[i - 1] {
        corner = xs[i - 1].next_up();
    }
    if j + 1 < n && corner + side >= xs[j + 1] {
        corner = corner.next_down();
    }
    let mut members: Vec<usize> = order[i..=j].iter().map(|&k| k as usize).collect();
    members.sort_unstable();
    Cell { lower: vec![corner], side: vec![side], members }
}

/// Candidate edges for one coordinate: the distinct observed values, or at
/// most `max_edges` unique quantiles of the observed values (extremes kept).
fn candidate_edges(col: &[f64], max_edges: usize) -> Vec<f64> {
    let mut sorted = col.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite covariates"));
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= max_edges {
        return distinct;
    }
    let n = sorted.len();
    let mut edges: Vec<f64> = (0..max_edges)
        .map(|k| {
            let pos = (k as f64 * (n - 1) as f64 / (max_edges - 1) as f64).round() as usize;
            sorted[pos]
        })
        .collect();
    edges.dedup();
    edges
}

/// Refined bin index of `v` against sorted distinct `edges`: `2k` when `v`
/// equals edge `k`, `2k + 1` when `v` lies strictly between edges `k` and
/// `k + 1`. Then `v` is in the closed span `[edges[a], edges[b]]` exactly
/// when the bin index is in `[2a, 2b]`, which makes closed-box membership an
/// inclusive rectangle query on the bin grid.
fn refined_bin(edges: &[f64], v: f64) -> usize {
    let k = edges.partition_point(|e| *e <= v);
    if k == 0 {
        // Below the smallest edge (possible only after coarsening dropped
        // nothing below the minimum — keep the point in the first gap).
        return 0;
    }
    let k = k - 1;
    if edges[k] == v {
        2 * k
    } else {
        2 * k + 1
    }
}

/// Two-dimensional scan over edge pairs via summed-area tables.
fn scan_2d(
    x: &Covariates,
    moments: &MomentMatrix,
    t_n: f64,
    max_edges: usize,
) -> Result<ScanResult> {
    if max_edges < 2 {
        return Err(Error::InvalidConfig(format!(
            "max_edges_per_dim must be at least 2, got {max_edges}"
        )));
    }
    let n = x.n();
    let nf = n as f64;
    let c0: Vec<f64> = x.column(0).collect();
    let c1: Vec<f64> = x.column(1).collect();
    let e0 = candidate_edges(&c0, max_edges);
    let e1 = candidate_edges(&c1, max_edges);
    let span0 = e0[e0.len() - 1] - e0[0];
    let span1 = e1[e1.len() - 1] - e1[0];
    if span0 < t_n || span1 < t_n {
        return Err(Error::InvalidTruncation(format!(
            "t_n = {t_n} exceeds a coordinate span ({span0}, {span1}): no admissible cell"
        )));
    }

    let b0: Vec<usize> = c0.iter().map(|&v| refined_bin(&e0, v)).collect();
    let b1: Vec<usize> = c1.iter().map(|&v| refined_bin(&e1, v)).collect();
    let (g0, g1) = (e0.len(), e1.len());
    let (r0, r1) = (2 * g0 - 1, 2 * g1 - 1);
    let stride = r1 + 1;

    let d_y = moments.d_y();
    let mut t = vec![0.0; d_y];
    let mut argmin: Vec<Option<Cell>> = vec![None; d_y];
    let mut evaluated = 0u64;
    let mut skipped = 0u64;
    let mut sat1 = vec![0.0f64; (r0 + 1) * stride];
    let mut sat2 = vec![0.0f64; (r0 + 1) * stride];

    for m in 0..d_y {
        sat1.iter_mut().for_each(|v| *v = 0.0);
        sat2.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let v = moments.value(i, m);
            let slot = (b0[i] + 1) * stride + b1[i] + 1;
            sat1[slot] += v;
            sat2[slot] += v * v;
        }
        for u in 1..=r0 {
            for w in 1..=r1 {
                let slot = u * stride + w;
                sat1[slot] += sat1[slot - 1] + sat1[slot - stride] - sat1[slot - stride - 1];
                sat2[slot] += sat2[slot - 1] + sat2[slot - stride] - sat2[slot - stride - 1];
            }
        }

        let mut best_num2 = 0.0f64;
        let mut best_den = 1.0f64;
        let mut best_s1 = 0.0f64;
        let mut best_box = (0usize, 0usize, 0usize, 0usize);

        for a in 0..g0 {
            for b in a..g0 {
                if e0[b] - e0[a] < t_n {
                    continue;
                }
                let (top, bot) = (2 * b + 1, 2 * a);
                for c in 0..g1 {
                    for d in c..g1 {
                        if e1[d] - e1[c] < t_n {
                            continue;
                        }
                        let (rgt, lft) = (2 * d + 1, 2 * c);
                        let s1 = sat1[top * stride + rgt] - sat1[bot * stride + rgt]
                            - sat1[top * stride + lft]
                            + sat1[bot * stride + lft];
                        let s2 = sat2[top * stride + rgt] - sat2[bot * stride + rgt]
                            - sat2[top * stride + lft]
                            + sat2[bot * stride + lft];
                        let den = nf * s2 - s1 * s1;
                        if den > 0.0 {
                            evaluated += 1;
                            if s1 < 0.0 {
                                let num2 = s1 * s1;
                                if num2 * best_den > best_num2 * den {
                                    best_num2 = num2;
                                    best_den = den;
                                    best_s1 = s1;
                                    best_box = (a, b, c, d);
                                }
                            }
                        } else {
                            skipped += 1;
                        }
                    }
                }
            }
        }
        if best_num2 > 0.0 {
            t[m] = -best_s1 / best_den.sqrt();
            let (a, b, c, d) = best_box;
            let members: Vec<usize> = (0..n)
                .filter(|&i| {
                    c0[i] >= e0[a] && c0[i] <= e0[b] && c1[i] >= e1[c] && c1[i] <= e1[d]
                })
                .collect();
            argmin[m] = Some(Cell {
                lower: vec![e0[a], e1[c]],
                side: vec![e0[b] - e0[a], e1[d] - e1[c]],
                members,
            });
        }
    }
    let s = t.iter().copied().fold(0.0, f64::max);
    Ok(ScanResult { t, s, argmin, cells_evaluated: evaluated, cells_skipped: skipped })
}
