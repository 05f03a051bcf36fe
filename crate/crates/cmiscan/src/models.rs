//! Moment functions for the two built-in incomplete-data models.
//!
//! Both models test a linear predictor `θ₁ + θ₂ᵀx` against observed outcome
//! bounds `[w_lo, w_hi]`, producing moments with values in `{-1/2, +1/2}`:
//!
//! * **Interval regression** (`d_Y = 2`): the outcome is only known to lie
//!   in `[w_lo, w_hi]`. The moments
//!   `m₁ = 1(pred <= w_hi) - 1/2` and `m₂ = 1/2 - 1(pred <= w_lo)`
//!   both have nonnegative conditional means exactly when the predictor is
//!   a conditional median of some outcome consistent with the bounds.
//! * **Missing data** (`d_Y = 1`): the outcome is either observed
//!   (`w_lo = w_hi`) or missing entirely (`w_lo = -inf`, `w_hi = +inf`).
//!   The single moment `m = 1(pred <= w_hi) - 1/2` asks the predictor to be
//!   at or below a conditional median under the worst-case fill-in of the
//!   missing values.
//!
//! Infinite bounds are ordinary IEEE infinities, so `pred <= w_hi` with
//! `w_hi = +inf` is always true and no special-casing is needed.

use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scan::MomentMatrix;

/// Parameter of the linear predictor: intercept followed by one slope per
/// covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    values: Vec<f64>,
}

impl Theta {
    /// Wraps a finite, non-empty coefficient vector `(θ₁, θ₂, …)`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("theta must have at least one coordinate".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("theta coordinates must be finite, got {v}")));
        }
        Ok(Self { values })
    }

    /// Coefficients, intercept first.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of coefficients (1 + covariate dimension).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True only for the impossible empty parameter; kept for idiom.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Linear predictor `θ₁ + θ₂ᵀx` at one covariate row.
    pub fn predict(&self, x_row: &[f64]) -> f64 {
        debug_assert_eq!(x_row.len() + 1, self.values.len());
        let mut p = self.values[0];
        for (c, v) in self.values[1..].iter().zip(x_row) {
            p += c * v;
        }
        p
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for v in &self.values {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for Theta {
    type Err = Error;

    /// Parses a comma-separated coefficient list, e.g. `0.1,-0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|part| {
                part.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("cannot parse theta coordinate {part:?}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Theta::new(values)
    }
}

/// The built-in moment models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Interval-censored outcome, two moments.
    Interval,
    /// Missing-at-random-or-not outcome, one moment.
    Missing,
}

impl Model {
    /// Number of moment functions.
    pub fn d_y(&self) -> usize {
        match self {
            Model::Interval => 2,
            Model::Missing => 1,
        }
    }

    /// Stable identifier used in CLI flags and report output.
    pub fn id(&self) -> &'static str {
        match self {
            Model::Interval => "interval",
            Model::Missing => "missing",
        }
    }

    /// Evaluates the model's moments at `theta` for every observation.
    pub fn moments(&self, data: &Dataset, theta: &Theta) -> Result<MomentMatrix> {
        if theta.len() != data.covariates().dim() + 1 {
            return Err(Error::InvalidInput(format!(
                "theta has {} coordinates but the model needs {} (intercept + {} slopes)",
                theta.len(),
                data.covariates().dim() + 1,
                data.covariates().dim()
            )));
        }
        match self {
            Model::Interval => interval_regression_moments(data, theta),
            Model::Missing => missing_data_moment(data, theta),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interval" => Ok(Model::Interval),
            "missing" => Ok(Model::Missing),
            other => Err(Error::InvalidInput(format!(
                "unknown model {other:?}: expected \"interval\" or \"missing\""
            ))),
        }
    }
}

/// Interval regression moments, `d_Y = 2`, both bound columns required.
pub fn interval_regression_moments(data: &Dataset, theta: &Theta) -> Result<MomentMatrix> {
    let (w_lo, w_hi) = match (data.w_lo(), data.w_hi()) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            return Err(Error::InvalidInput(
                "the interval model needs both wl and wh outcome columns".into(),
            ))
        }
    };
    let x = data.covariates();
    let n = x.n();
    let mut values = Vec::with_capacity(2 * n);
    for i in 0..n {
        let pred = theta.predict(x.row(i));
        values.push(if pred <= w_hi[i] { 0.5 } else { -0.5 });
        values.push(if pred <= w_lo[i] { -0.5 } else { 0.5 });
    }
    MomentMatrix::new(values, 2, theta.values().to_vec())
}

/// Missing-data moment, `d_Y = 1`, upper bound column required.
pub fn missing_data_moment(data: &Dataset, theta: &Theta) -> Result<MomentMatrix> {
    let w_hi = data.w_hi().ok_or_else(|| {
        Error::InvalidInput("the missing-data model needs the wh outcome column".into())
    })?;
    let x = data.covariates();
    let n = x.n();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let pred = theta.predict(x.row(i));
        values.push(if pred <= w_hi[i] { 0.5 } else { -0.5 });
    }
    MomentMatrix::new(values, 1, theta.values().to_vec())
}
