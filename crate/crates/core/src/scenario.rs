//! Problem-instance data model shared by every solver.
//!
//! All quantities a solver sees are energy-equivalent units. A reservoir may
//! carry a [`HeadCurve`], in which case its capacity, initial store and
//! inflows are read as water volumes and converted once by
//! [`Scenario::prepare`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::energy::{self, HeadCurve};
use crate::error::{Error, Result};

/// Tolerance on probability sums.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Default confidence level used for the release cap under random inflows.
pub const DEFAULT_CONFIDENCE_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Price of one unit of thermal energy (`c`).
    #[serde(rename = "c")]
    pub thermal_price: f64,
    /// Penalty per unit of unserved demand (`p`), must exceed `c`.
    #[serde(rename = "p")]
    pub deficit_penalty: f64,
    /// Thermal energy available per period (`K`).
    #[serde(rename = "K")]
    pub thermal_cap: f64,
    /// Per-period sale price of surplus hydro energy (`a_i`).
    #[serde(rename = "a")]
    pub sale_prices: Vec<f64>,
    /// Surplus penalty used by the relaxed multi-reservoir model (`gamma`).
    #[serde(rename = "gamma", default, skip_serializing_if = "Option::is_none")]
    pub demand_penalty: Option<f64>,
}

impl CostParams {
    pub fn sale_price(&self, period: usize) -> f64 {
        self.sale_prices.get(period).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reservoir {
    #[serde(rename = "capacity")]
    pub capacity: f64,
    #[serde(rename = "initial")]
    pub initial_store: f64,
    /// Number of evenly spaced storage levels, endpoints included.
    #[serde(rename = "levels")]
    pub level_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_curve: Option<HeadCurve>,
}

impl Reservoir {
    pub fn new(capacity: f64, initial_store: f64, level_count: usize) -> Self {
        Reservoir {
            capacity,
            initial_store,
            level_count,
            head_curve: None,
        }
    }

    /// Grid step `capacity / (levels - 1)`.
    pub fn step(&self) -> f64 {
        self.capacity / (self.level_count.saturating_sub(1).max(1)) as f64
    }
}

/// A run-of-river station downstream of the head reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeStation {
    #[serde(rename = "pass_capacity")]
    pub pass_capacity: f64,
    /// Lateral inflow joining the river just above this station, per period.
    #[serde(rename = "lateral_inflows")]
    pub lateral_inflows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflowDistribution {
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
}

impl InflowDistribution {
    pub fn point(value: f64) -> Self {
        InflowDistribution {
            support: vec![value],
            weights: vec![1.0],
        }
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeterministicFlow {
    /// `inflows[j][i]`: inflow to reservoir `j` during period `i`.
    pub inflows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndependentFlow {
    /// One distribution per period.
    pub distributions: Vec<InflowDistribution>,
    #[serde(default = "default_confidence")]
    pub confidence_level: f64,
}

/// A named continuous density, turned into an [`InflowDistribution`] by
/// equal-probability binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ParametricDensity {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std_dev: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametricFlow {
    pub densities: Vec<ParametricDensity>,
    pub bins: usize,
    #[serde(default = "default_confidence")]
    pub confidence_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovInflowModel {
    /// Inflow value of each chain state, ascending.
    pub bins: Vec<f64>,
    /// `transitions[i][prev][next]`: probability of inflow bin `next` in
    /// period `i` given bin `prev` in the period before.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// Distribution of the inflow bin observed just before period 1.
    pub initial: Vec<f64>,
    #[serde(default = "default_confidence")]
    pub confidence_level: f64,
}

impl MarkovInflowModel {
    pub fn row(&self, period: usize, prev: usize) -> InflowDistribution {
        InflowDistribution {
            support: self.bins.clone(),
            weights: self.transitions[period][prev].clone(),
        }
    }

    /// Index of the bin closest to `value`.
    pub fn nearest_bin(&self, value: f64) -> usize {
        let mut best = 0;
        for (k, b) in self.bins.iter().enumerate() {
            if (b - value).abs() < (self.bins[best] - value).abs() {
                best = k;
            }
        }
        best
    }
}

fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE_LEVEL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowModel {
    Deterministic(DeterministicFlow),
    Independent(IndependentFlow),
    IndependentParametric(ParametricFlow),
    Markov(MarkovInflowModel),
}

impl FlowModel {
    pub fn kind(&self) -> &'static str {
        match self {
            FlowModel::Deterministic(_) => "deterministic",
            FlowModel::Independent(_) => "independent",
            FlowModel::IndependentParametric(_) => "independent_parametric",
            FlowModel::Markov(_) => "markov",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n_periods: usize,
    #[serde(rename = "demands")]
    pub demands: Vec<f64>,
    pub costs: CostParams,
    #[serde(rename = "tau_days", default = "default_tau")]
    pub days_per_period: usize,
    pub reservoirs: Vec<Reservoir>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cascade_stations: Vec<CascadeStation>,
    pub flow: FlowModel,
}

fn default_tau() -> usize {
    1
}

/// One invariant violation, anchored at the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn fail(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.out.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }

    fn check(&mut self, ok: bool, field: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.fail(field, message);
        }
    }

    fn series(&mut self, field: &str, values: &[f64], n: usize) {
        if values.len() != n {
            self.fail(field, format!("length {} but n_periods is {}", values.len(), n));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                self.fail(format!("{field}[{i}]"), format!("{v} must be finite and >= 0"));
            }
        }
    }

    fn distribution(&mut self, field: &str, support: &[f64], weights: &[f64]) {
        if support.len() != weights.len() {
            self.fail(
                field,
                format!("{} support values but {} weights", support.len(), weights.len()),
            );
        }
        self.support(&format!("{field}.support"), support);
        self.probabilities(&format!("{field}.weights"), weights);
    }

    fn support(&mut self, field: &str, support: &[f64]) {
        if support.is_empty() {
            self.fail(field, "empty support");
        }
        for (k, x) in support.iter().enumerate() {
            if !x.is_finite() || *x < 0.0 {
                self.fail(format!("{field}[{k}]"), format!("{x} must be >= 0"));
            }
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            self.fail(field, "must be strictly ascending");
        }
    }

    fn probabilities(&mut self, field: &str, weights: &[f64]) {
        for (k, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w < 0.0 {
                self.fail(format!("{field}[{k}]"), format!("weight {w} must be >= 0"));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            self.fail(field, format!("sums to {sum}, expected 1"));
        }
    }

    fn confidence(&mut self, field: &str, level: f64) {
        self.check(
            level > 0.0 && level < 1.0,
            field,
            format!("confidence level {level} must lie in (0, 1)"),
        );
    }
}

/// Every invariant violation in `scenario`; empty means valid.
pub fn validate(scenario: &Scenario) -> Vec<Violation> {
    let mut ck = Checker { out: Vec::new() };
    let n = scenario.n_periods;
    ck.check(n >= 1, "n_periods", "must be at least 1");
    ck.check(scenario.days_per_period >= 1, "tau_days", "must be at least 1");
    ck.series("demands", &scenario.demands, n);

    let costs = &scenario.costs;
    let c = costs.thermal_price;
    let p = costs.deficit_penalty;
    ck.check(
        c.is_finite() && c >= 0.0,
        "costs.c",
        format!("thermal price {c} must be >= 0"),
    );
    ck.check(
        p.is_finite() && p > c,
        "costs.p",
        format!("deficit penalty p ({p}) must exceed thermal price c ({c})"),
    );
    ck.check(
        costs.thermal_cap.is_finite() && costs.thermal_cap >= 0.0,
        "costs.K",
        format!("thermal capacity {} must be >= 0", costs.thermal_cap),
    );
    if costs.sale_prices.len() != n {
        ck.fail(
            "costs.a",
            format!("length {} but n_periods is {}", costs.sale_prices.len(), n),
        );
    }
    for (i, a) in costs.sale_prices.iter().enumerate() {
        ck.check(
            a.is_finite() && *a >= 0.0 && *a < p,
            format!("costs.a[{i}]"),
            format!("sale price {a} must satisfy 0 <= a < p ({p})"),
        );
    }
    if let Some(g) = costs.demand_penalty {
        ck.check(
            g.is_finite() && g > 0.0,
            "costs.gamma",
            format!("gamma {g} must be > 0"),
        );
    }

    ck.check(
        !scenario.reservoirs.is_empty(),
        "reservoirs",
        "at least one reservoir is required",
    );
    for (j, r) in scenario.reservoirs.iter().enumerate() {
        let f = format!("reservoirs[{j}]");
        ck.check(
            r.capacity.is_finite() && r.capacity > 0.0,
            format!("{f}.capacity"),
            format!("capacity {} must be > 0", r.capacity),
        );
        ck.check(
            r.initial_store >= 0.0 && r.initial_store <= r.capacity,
            format!("{f}.initial"),
            format!(
                "initial store {} must lie in [0, {}]",
                r.initial_store, r.capacity
            ),
        );
        ck.check(
            r.level_count >= 2,
            format!("{f}.levels"),
            format!("level count {} must be at least 2", r.level_count),
        );
        if let Some(curve) = &r.head_curve {
            for msg in curve.violations() {
                ck.fail(format!("{f}.head_curve"), msg);
            }
        }
    }

    for (j, s) in scenario.cascade_stations.iter().enumerate() {
        let f = format!("cascade_stations[{j}]");
        ck.check(
            s.pass_capacity.is_finite() && s.pass_capacity > 0.0,
            format!("{f}.pass_capacity"),
            format!("pass capacity {} must be > 0", s.pass_capacity),
        );
        ck.series(&format!("{f}.lateral_inflows"), &s.lateral_inflows, n);
    }

    match &scenario.flow {
        FlowModel::Deterministic(flow) => {
            if flow.inflows.len() != scenario.reservoirs.len() {
                ck.fail(
                    "flow.inflows",
                    format!(
                        "{} inflow series for {} reservoirs",
                        flow.inflows.len(),
                        scenario.reservoirs.len()
                    ),
                );
            }
            for (j, series) in flow.inflows.iter().enumerate() {
                ck.series(&format!("flow.inflows[{j}]"), series, n);
            }
        }
        FlowModel::Independent(flow) => {
            if flow.distributions.len() != n {
                ck.fail(
                    "flow.distributions",
                    format!("length {} but n_periods is {}", flow.distributions.len(), n),
                );
            }
            for (i, d) in flow.distributions.iter().enumerate() {
                ck.distribution(&format!("flow.distributions[{i}]"), &d.support, &d.weights);
            }
            ck.confidence("flow.confidence_level", flow.confidence_level);
        }
        FlowModel::IndependentParametric(flow) => {
            if flow.densities.len() != n {
                ck.fail(
                    "flow.densities",
                    format!("length {} but n_periods is {}", flow.densities.len(), n),
                );
            }
            ck.check(flow.bins >= 1, "flow.bins", "at least one bin is required");
            for (i, d) in flow.densities.iter().enumerate() {
                if let Err(msg) = crate::io::density_check(d) {
                    ck.fail(format!("flow.densities[{i}]"), msg);
                }
            }
            ck.confidence("flow.confidence_level", flow.confidence_level);
        }
        FlowModel::Markov(chain) => {
            let b = chain.bins.len();
            ck.support("flow.bins", &chain.bins);
            if chain.initial.len() != b {
                ck.fail(
                    "flow.initial",
                    format!("length {} but {} bins", chain.initial.len(), b),
                );
            }
            ck.probabilities("flow.initial", &chain.initial);
            if chain.transitions.len() != n {
                ck.fail(
                    "flow.transitions",
                    format!("{} matrices but n_periods is {}", chain.transitions.len(), n),
                );
            }
            for (i, m) in chain.transitions.iter().enumerate() {
                if m.len() != b {
                    ck.fail(
                        format!("flow.transitions[{i}]"),
                        format!("{} rows for {} bins", m.len(), b),
                    );
                }
                for (k, row) in m.iter().enumerate() {
                    let f = format!("flow.transitions[{i}][{k}]");
                    if row.len() != b {
                        ck.fail(&f, format!("{} columns for {} bins", row.len(), b));
                    }
                    ck.probabilities(&f, row);
                }
            }
            ck.confidence("flow.confidence_level", chain.confidence_level);
        }
    }
    ck.out
}

impl Scenario {
    /// Validated, energy-unit copy of the scenario: head curves are applied
    /// to reservoir volumes and parametric densities are binned.
    pub fn prepare(&self) -> Result<Scenario> {
        let violations = validate(self);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        let mut out = self.clone();
        let tau = self.days_per_period;
        if let FlowModel::IndependentParametric(flow) = &self.flow {
            out.flow = FlowModel::Independent(IndependentFlow {
                distributions: flow
                    .densities
                    .iter()
                    .map(|d| crate::io::discretize(d, flow.bins))
                    .collect(),
                confidence_level: flow.confidence_level,
            });
        }
        for j in 0..self.reservoirs.len() {
            let Some(curve) = self.reservoirs[j].head_curve.clone() else {
                continue;
            };
            let cap = self.reservoirs[j].capacity;
            let conv = |v: f64| energy::energy_content(&curve, v, cap, tau);
            let res = &mut out.reservoirs[j];
            res.capacity = conv(cap)?;
            res.initial_store = conv(res.initial_store)?;
            res.head_curve = None;
            match &mut out.flow {
                FlowModel::Deterministic(flow) => {
                    for x in flow.inflows[j].iter_mut() {
                        *x = conv(*x)?;
                    }
                }
                FlowModel::Independent(flow) => {
                    for d in flow.distributions.iter_mut() {
                        for x in d.support.iter_mut() {
                            *x = conv(*x)?;
                        }
                    }
                }
                FlowModel::Markov(chain) => {
                    for x in chain.bins.iter_mut() {
                        *x = conv(*x)?;
                    }
                }
                FlowModel::IndependentParametric(_) => unreachable!("binned above"),
            }
            if res.capacity <= 0.0 {
                return Err(Error::Validation(vec![Violation {
                    field: format!("reservoirs[{j}].head_curve"),
                    message: "converted capacity is zero energy".into(),
                }]));
            }
        }
        Ok(out)
    }

    /// Deterministic inflow to reservoir `j` in `period`.
    pub fn inflow(&self, reservoir: usize, period: usize) -> f64 {
        match &self.flow {
            FlowModel::Deterministic(flow) => flow.inflows[reservoir][period],
            _ => panic!("inflow() requires a deterministic flow model"),
        }
    }

    pub fn initial_stores(&self) -> Vec<f64> {
        self.reservoirs.iter().map(|r| r.initial_store).collect()
    }
}
