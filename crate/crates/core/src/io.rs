//! Scenario files and the density discretizer.
//!
//! Scenarios are JSON documents whose keys mirror [`Scenario`]; unknown keys
//! are rejected so a misspelt cost field cannot slip through silently.

use std::fmt;

use statrs::distribution::{ContinuousCDF, Exp, LogNormal, Normal, Uniform};

use crate::scenario::{InflowDistribution, ParametricDensity, Scenario};

/// Where and why a scenario document failed to parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset of the offending character.
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {} (byte {}): {}",
            self.line, self.column, self.offset, self.message
        )
    }
}

impl std::error::Error for ParseError {}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    serde_json::from_str(text).map_err(|e| ParseError {
        offset: byte_offset(text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn scenario_to_json(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario serializes")
}

/// Rounds to 12 significant digits and prints the shortest form that reads
/// back to the rounded value.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("valid float");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded:?}")
}

pub(crate) fn density_check(d: &ParametricDensity) -> Result<(), String> {
    let ok = match *d {
        ParametricDensity::Uniform { low, high } => low.is_finite() && high > low,
        ParametricDensity::Normal { mean, std_dev } => mean.is_finite() && std_dev > 0.0,
        ParametricDensity::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
        ParametricDensity::Exponential { rate } => rate > 0.0 && rate.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("invalid parameters for {d:?}"))
    }
}

fn quantile(d: &ParametricDensity, p: f64) -> f64 {
    match *d {
        ParametricDensity::Uniform { low, high } => Uniform::new(low, high).unwrap().inverse_cdf(p),
        ParametricDensity::Normal { mean, std_dev } => Normal::new(mean, std_dev).unwrap().inverse_cdf(p),
        ParametricDensity::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).unwrap().inverse_cdf(p),
        ParametricDensity::Exponential { rate } => Exp::new(rate).unwrap().inverse_cdf(p),
    }
}

/// Equal-probability binning: `bins` atoms of weight `1 / bins`, each placed
/// at the median of its probability slice. Negative atoms are clipped to
/// zero and coinciding atoms merged.
pub fn discretize(density: &ParametricDensity, bins: usize) -> InflowDistribution {
    let bins = bins.max(1);
    let mut out = InflowDistribution {
        support: Vec::with_capacity(bins),
        weights: Vec::with_capacity(bins),
    };
    for k in 0..bins {
        let x = quantile(density, (k as f64 + 0.5) / bins as f64).max(0.0);
        match out.support.last() {
            Some(&last) if x <= last => *out.weights.last_mut().unwrap() += 1.0 / bins as f64,
            _ => {
                out.support.push(x);
                out.weights.push(1.0 / bins as f64);
            }
        }
    }
    out
}
