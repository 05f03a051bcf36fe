//! Confidence regions by test inversion.
//!
//! A level-α test inverted over a parameter grid yields a confidence region
//! of coverage `1 - α`: the region collects every grid point the test fails
//! to reject. The critical value is computed once — none of the engines
//! depend on the evaluation point `θ`, only on the covariates, truncation
//! and moment count — so inverting costs one scan per grid point.

use rayon::prelude::*;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::critval::{
    analytic_critical_value, least_favorable_critical_value_on_data, refined_critical_value,
    simulated_critical_value, CriticalValue, CriticalValueMethod, MultiplierCovariance,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{build_hull, truncation, TruncationRule};
use crate::models::{Model, Theta};
use crate::scan::{scan_statistic, ScanConfig};

/// One grid dimension: `steps` evenly spaced values from `min` to `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "grid endpoints must be finite, got {min}:{max}"
            )));
        }
        if min > max {
            return Err(Error::InvalidConfig(format!(
                "grid minimum {min} exceeds maximum {max}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidConfig("a grid axis needs at least one step".into()));
        }
        if steps == 1 && min != max {
            return Err(Error::InvalidConfig(format!(
                "a single-step axis must have min = max, got {min}:{max}"
            )));
        }
        Ok(Self { min, max, steps })
    }

    /// The `i`-th value on the axis.
    fn value(&self, i: usize) -> f64 {
        if self.steps == 1 {
            self.min
        } else {
            self.min + i as f64 * (self.max - self.min) / (self.steps - 1) as f64
        }
    }
}

impl fmt::Display for GridAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.min, self.max, self.steps)
    }
}

impl FromStr for GridAxis {
    type Err = Error;

    /// Parses `min:max:steps`, e.g. `-0.5:0.5:21`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "grid axis {s:?} must look like min:max:steps"
            )));
        }
        let min = parts[0].trim().parse::<f64>().map_err(|_| {
            Error::InvalidConfig(format!("cannot parse grid minimum {:?}", parts[0]))
        })?;
        let max = parts[1].trim().parse::<f64>().map_err(|_| {
            Error::InvalidConfig(format!("cannot parse grid maximum {:?}", parts[1]))
        })?;
        let steps = parts[2].trim().parse::<usize>().map_err(|_| {
            Error::InvalidConfig(format!("cannot parse grid step count {:?}", parts[2]))
        })?;
        GridAxis::new(min, max, steps)
    }
}

/// A dense rectangular grid over parameter space, one axis per coordinate
/// of `θ`, flattened row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    axes: Vec<GridAxis>,
}

impl ThetaGrid {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidConfig("the parameter grid needs at least one axis".into()));
        }
        let len: usize = axes.iter().map(|a| a.steps).product();
        if len == 0 {
            return Err(Error::InvalidConfig("the parameter grid is empty".into()));
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    /// Number of parameter coordinates.
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.steps).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The parameter at flat index `i`.
    pub fn point(&self, mut i: usize) -> Theta {
        let mut coords = vec![0.0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            coords[k] = axis.value(i % axis.steps);
            i /= axis.steps;
        }
        Theta::new(coords).expect("grid coordinates are finite")
    }

    /// All parameters in flat-index order.
    pub fn iter(&self) -> impl Iterator<Item = Theta> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

impl fmt::Display for ThetaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for axis in &self.axes {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{axis}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for ThetaGrid {
    type Err = Error;

    /// Parses comma-separated axis specs, e.g. `0:0.5:26,-1:1:21`.
    fn from_str(s: &str) -> Result<Self> {
        let axes = s
            .split(',')
            .map(|part| part.parse::<GridAxis>())
            .collect::<Result<Vec<_>>>()?;
        ThetaGrid::new(axes)
    }
}

/// The outcome of inverting the test over a grid.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    /// Test level; the region's coverage target is `1 - alpha`.
    pub alpha: f64,
    /// The grid that was scanned.
    pub grid: ThetaGrid,
    /// Scan statistic `S_n` at each grid point, flat-index order.
    pub statistics: Vec<f64>,
    /// Acceptance flag at each grid point, flat-index order.
    pub accepted: Vec<bool>,
    /// The shared critical value.
    pub critical_value: CriticalValue,
    /// Threshold converted to the `S_n` scale.
    pub threshold: f64,
    /// Per-axis `(min, max)` over accepted points; `None` when the region
    /// is empty.
    pub projections: Vec<Option<(f64, f64)>>,
}

impl ConfidenceRegion {
    /// Number of accepted grid points.
    pub fn accepted_count(&self) -> usize {
        self.accepted.iter().filter(|&&a| a).count()
    }

    /// Writes one CSV row per grid point: the parameter coordinates, the
    /// statistic, the (constant) threshold, and the acceptance flag.
    pub fn to_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        let dim = self.grid.dim();
        let mut header: Vec<String> = (1..=dim).map(|k| format!("theta{k}")).collect();
        header.extend(["statistic".into(), "threshold".into(), "accepted".into()]);
        writer.write_record(&header)?;
        for (i, theta) in self.grid.iter().enumerate() {
            let mut record: Vec<String> =
                theta.values().iter().map(|v| v.to_string()).collect();
            record.push(self.statistics[i].to_string());
            record.push(self.threshold.to_string());
            record.push(self.accepted[i].to_string());
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Inverts the test over `grid`, producing a `1 - alpha` confidence region.
///
/// The critical value is computed once (no engine depends on `θ`); then
/// every grid point is scanned and kept when the test does not reject.
/// `b` and `seed` feed the simulation engines and are ignored by the
/// analytic and refined ones.
#[allow(clippy::too_many_arguments)]
pub fn invert_test(
    data: &Dataset,
    model: Model,
    grid: &ThetaGrid,
    rule: TruncationRule,
    method: CriticalValueMethod,
    alpha: f64,
    b: usize,
    seed: u64,
    config: &ScanConfig,
) -> Result<ConfidenceRegion> {
    let x = data.covariates();
    let n = x.n();
    let d_x = x.dim();
    let d_y = model.d_y();
    if grid.dim() != d_x + 1 {
        return Err(Error::InvalidConfig(format!(
            "the grid has {} axes but theta needs {} (intercept + {} slopes)",
            grid.dim(),
            d_x + 1,
            d_x
        )));
    }
    let t_n = truncation(rule, n, x)?;
    let critical_value = match method {
        CriticalValueMethod::Analytic => {
            let vol = build_hull(x)?.volume();
            analytic_critical_value(n, d_x, d_y, vol, t_n, alpha)?
        }
        CriticalValueMethod::Refined => {
            let vol = build_hull(x)?.volume();
            refined_critical_value(n, d_x, d_y, vol, t_n, alpha)?
        }
        CriticalValueMethod::Simulated => simulated_critical_value(
            x,
            d_y,
            t_n,
            alpha,
            b,
            seed,
            &MultiplierCovariance::Identity,
            config,
        )?,
        CriticalValueMethod::LeastFavorable => {
            least_favorable_critical_value_on_data(x, model, t_n, alpha, b, seed, config)?
        }
    };
    let threshold = critical_value.threshold_for_s(n);

    let outcomes: Vec<(f64, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|i| -> Result<(f64, bool)> {
            let theta = grid.point(i);
            let moments = model.moments(data, &theta)?;
            let s = scan_statistic(x, &moments, t_n, config)?.s;
            Ok((s, !critical_value.rejects(s, n)))
        })
        .collect::<Result<_>>()?;
    let statistics: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let accepted: Vec<bool> = outcomes.iter().map(|o| o.1).collect();

    let mut projections = vec![None; grid.dim()];
    for (i, theta) in grid.iter().enumerate() {
        if !accepted[i] {
            continue;
        }
        for (k, &v) in theta.values().iter().enumerate() {
            projections[k] = Some(match projections[k] {
                None => (v, v),
                Some((lo, hi)) => (v.min(lo), v.max(hi)),
            });
        }
    }

    Ok(ConfidenceRegion {
        alpha,
        grid: grid.clone(),
        statistics,
        accepted,
        critical_value,
        threshold,
        projections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Covariates;
    use crate::rng::{purpose, substream};
    use rand::Rng;

    /// A clean interval dataset around the line w = 0.2 + 0.5 x, with
    /// bounds wide enough that a neighborhood of the line is accepted.
    fn easy_data(n: usize, seed: u64) -> Dataset {
        let mut rng = substream(seed, &[purpose::DATA, 100]);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let lo: Vec<f64> = xs.iter().map(|x| 0.2 + 0.5 * x - 0.3).collect();
        let hi: Vec<f64> = xs.iter().map(|x| 0.2 + 0.5 * x + 0.3).collect();
        Dataset::new(Covariates::new(xs, 1).unwrap(), Some(lo), Some(hi)).unwrap()
    }

    #[test]
    fn grid_points_are_row_major_last_axis_fastest() {
        let grid: ThetaGrid = "0:1:2,10:30:3".parse().unwrap();
        assert_eq!(grid.len(), 6);
        assert_eq!(grid.dim(), 2);
        let pts: Vec<Vec<f64>> = grid.iter().map(|t| t.values().to_vec()).collect();
        assert_eq!(
            pts,
            vec![
                vec![0.0, 10.0],
                vec![0.0, 20.0],
                vec![0.0, 30.0],
                vec![1.0, 10.0],
                vec![1.0, 20.0],
                vec![1.0, 30.0],
            ]
        );
        assert_eq!(grid.to_string(), "0:1:2,10:30:3");
    }

    #[test]
    fn single_step_axes_pin_a_coordinate() {
        let grid: ThetaGrid = "0.25:0.25:1,-1:1:5".parse().unwrap();
        assert_eq!(grid.len(), 5);
        for theta in grid.iter() {
            assert_eq!(theta.values()[0], 0.25);
        }
    }

    #[test]
    fn bad_axes_are_rejected() {
        assert!("1:0:5".parse::<GridAxis>().is_err());
        assert!("0:1:0".parse::<GridAxis>().is_err());
        assert!("0:1".parse::<GridAxis>().is_err());
        assert!("0:1:2:3".parse::<GridAxis>().is_err());
        assert!("a:1:2".parse::<GridAxis>().is_err());
        assert!("0:1:5".parse::<GridAxis>().is_ok());
        // steps = 1 must pin, not span.
        assert!("0:1:1".parse::<GridAxis>().is_err());
        assert!(ThetaGrid::new(vec![]).is_err());
    }

    #[test]
    fn region_contains_the_generating_parameter() {
        let data = easy_data(150, 1);
        let grid: ThetaGrid = "-0.2:0.6:9,0.5:0.5:1".parse().unwrap();
        let region = invert_test(
            &data,
            Model::Interval,
            &grid,
            TruncationRule::Power(1.0 / 3.0),
            CriticalValueMethod::Analytic,
            0.05,
            0,
            0,
            &ScanConfig::default(),
        )
        .unwrap();
        // theta = (0.2, 0.5) generates the data; its grid point must be in.
        let idx = grid
            .iter()
            .position(|t| (t.values()[0] - 0.2).abs() < 1e-12)
            .unwrap();
        assert!(region.accepted[idx]);
        assert!(region.accepted_count() < grid.len(), "nothing rejected");
        let (lo, hi) = region.projections[0].unwrap();
        assert!(lo <= 0.2 && 0.2 <= hi);
        assert_eq!(region.projections[1], Some((0.5, 0.5)));
        assert_eq!(region.statistics.len(), grid.len());
        assert!((region.threshold - region.critical_value.threshold).abs() < 1e-15);
    }

    #[test]
    fn regions_nest_across_levels() {
        let data = easy_data(80, 2);
        let grid: ThetaGrid = "-0.4:0.8:13,0.5:0.5:1".parse().unwrap();
        let run = |alpha: f64, method: CriticalValueMethod| {
            invert_test(
                &data,
                Model::Interval,
                &grid,
                TruncationRule::Power(1.0 / 3.0),
                method,
                alpha,
                60,
                9,
                &ScanConfig::default(),
            )
            .unwrap()
        };
        for method in [CriticalValueMethod::Analytic, CriticalValueMethod::Simulated] {
            let wide = run(0.05, method);
            let narrow = run(0.10, method);
            for i in 0..grid.len() {
                assert!(
                    !narrow.accepted[i] || wide.accepted[i],
                    "{method}: point {i} in the 90% region but not the 95%"
                );
            }
        }
    }

    #[test]
    fn grid_dimension_must_match_the_model() {
        let data = easy_data(40, 3);
        let grid: ThetaGrid = "0:1:3".parse().unwrap();
        let err = invert_test(
            &data,
            Model::Interval,
            &grid,
            TruncationRule::Power(0.5),
            CriticalValueMethod::Analytic,
            0.05,
            0,
            0,
            &ScanConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let data = easy_data(60, 4);
        let grid: ThetaGrid = "0:0.4:5,0.5:0.5:1".parse().unwrap();
        let region = invert_test(
            &data,
            Model::Interval,
            &grid,
            TruncationRule::Power(1.0 / 3.0),
            CriticalValueMethod::Analytic,
            0.05,
            0,
            0,
            &ScanConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        region.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "theta1,theta2,statistic,threshold,accepted");
        assert_eq!(lines.len(), 1 + grid.len());
        assert!(lines[1].starts_with("0,0.5,"));
        assert!(lines[1].ends_with("true") || lines[1].ends_with("false"));
    }

    #[test]
    fn empty_region_has_no_projections() {
        // Bounds force w = x exactly; an intercept-only grid far from
        // feasible leaves nothing accepted.
        let n = 120;
        let mut rng = substream(5, &[purpose::DATA, 101]);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let w: Vec<f64> = xs.clone();
        let data = Dataset::new(
            Covariates::new(xs, 1).unwrap(),
            Some(w.clone()),
            Some(w),
        )
        .unwrap();
        let grid: ThetaGrid = "5:6:3,0:0:1".parse().unwrap();
        let region = invert_test(
            &data,
            Model::Interval,
            &grid,
            TruncationRule::Power(1.0 / 3.0),
            CriticalValueMethod::Analytic,
            0.05,
            0,
            0,
            &ScanConfig::default(),
        )
        .unwrap();
        assert_eq!(region.accepted_count(), 0);
        assert!(region.projections.iter().all(|p| p.is_none()));
    }
}
