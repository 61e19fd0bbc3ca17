//! Model selection, solver options and the shared backward-induction sweep.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{self, Grid, PolicyTable, ValueTable};
use crate::scenario::{FlowModel, Scenario};
use crate::{aggregate, deterministic, stochastic};

/// Largest reservoir count the exact multi-reservoir solver accepts by default.
pub const MAX_EXACT_RESERVOIRS: usize = 3;

/// Two candidate objective values closer than this are treated as tied.
pub(crate) fn improves(candidate: f64, best: f64) -> bool {
    if best.is_infinite() {
        return candidate < best;
    }
    candidate < best - 1e-12 * (1.0 + best.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// One reservoir, deterministic inflows.
    Single,
    /// Head reservoir feeding a chain of run-of-river stations.
    Cascade,
    /// Reservoirs in series, demand coupling as a hard constraint.
    Multi,
    /// Reservoirs in series, surplus priced instead of forbidden.
    MultiPenalty,
    /// One scalar release shared across reservoirs in proportion to potential.
    Aggregate,
    /// One reservoir, independent random inflows.
    Independent,
    /// One reservoir, Markov-chain inflows.
    Markov,
}

impl Model {
    pub const ALL: [Model; 7] = [
        Model::Single,
        Model::Cascade,
        Model::Multi,
        Model::MultiPenalty,
        Model::Aggregate,
        Model::Independent,
        Model::Markov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::Single => "single",
            Model::Cascade => "cascade",
            Model::Multi => "multi",
            Model::MultiPenalty => "multi-penalty",
            Model::Aggregate => "aggregate",
            Model::Independent => "independent",
            Model::Markov => "markov",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Model::Independent | Model::Markov)
    }

    /// Default control refinement factor.
    pub fn default_refinement(self) -> usize {
        match self {
            Model::Aggregate => 4,
            _ => 1,
        }
    }

    /// Checks that the scenario's shape fits this model.
    pub fn check_applicable(self, scenario: &Scenario, options: &SolveOptions) -> Result<()> {
        let m = scenario.reservoirs.len();
        let stations = scenario.cascade_stations.len();
        let deterministic = matches!(scenario.flow, FlowModel::Deterministic(_));
        let fail = |rule: &str| Err(Error::Applicability(format!("model {} {rule}", self.name())));
        match self {
            Model::Single | Model::Independent | Model::Markov if m != 1 || stations != 0 => {
                fail("requires exactly one reservoir and no cascade stations")
            }
            Model::Cascade if m != 1 || stations == 0 => {
                fail("requires exactly one reservoir and at least one cascade station")
            }
            Model::Multi | Model::MultiPenalty | Model::Aggregate if stations != 0 => {
                fail("takes reservoirs only; fold run-of-river stations into the demands")
            }
            Model::Single | Model::Cascade | Model::Multi | Model::MultiPenalty | Model::Aggregate
                if !deterministic =>
            {
                fail("requires a deterministic flow model")
            }
            Model::Independent
                if !matches!(
                    scenario.flow,
                    FlowModel::Independent(_) | FlowModel::IndependentParametric(_)
                ) =>
            {
                fail("requires an independent inflow distribution per period")
            }
            Model::Markov if !matches!(scenario.flow, FlowModel::Markov(_)) => {
                fail("requires a Markov-chain flow model")
            }
            Model::Multi | Model::MultiPenalty
                if m > MAX_EXACT_RESERVOIRS && !options.allow_high_dimension =>
            {
                Err(Error::Dimensionality { reservoirs: m })
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model '{s}'"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Controls are swept on the storage step divided by this factor;
    /// `None` takes the model default.
    pub refinement: Option<usize>,
    /// Lets the exact multi-reservoir solver run beyond three reservoirs.
    pub allow_high_dimension: bool,
}

impl SolveOptions {
    pub fn with_refinement(refinement: usize) -> Self {
        SolveOptions {
            refinement: Some(refinement),
            ..Default::default()
        }
    }

    pub(crate) fn refinement_for(&self, model: Model) -> usize {
        self.refinement.unwrap_or(model.default_refinement()).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageStats {
    /// One-dimensional (or vector) minimizations performed in the stage.
    pub minimizations: usize,
    /// Continuation lookups that needed interpolation.
    pub off_grid_lookups: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub model: Model,
    pub grid: Grid,
    /// `values[i]` is `f_{i+1}`: stage index 0 is the first period.
    pub values: Vec<ValueTable>,
    pub policies: Vec<PolicyTable>,
    pub stats: Vec<StageStats>,
    pub warnings: Vec<String>,
    /// Initial stores in energy units.
    pub initial_stores: Vec<f64>,
    /// Distribution of the inflow bin preceding period 1 (Markov only).
    pub initial_bins: Option<Vec<f64>>,
    pub wall_ms: f64,
}

impl Solution {
    pub fn n_periods(&self) -> usize {
        self.values.len()
    }

    /// `f_{stage+1}` at `stores` given the previous inflow bin.
    pub fn value(&self, stage: usize, stores: &[f64], bin: usize) -> Result<f64> {
        grid::value_at(self.values[stage].layer(bin), &self.grid, stores)
    }

    /// Optimal expected cost from the scenario's initial stores; Markov
    /// values are averaged over the initial bin distribution.
    pub fn initial_value(&self) -> Result<f64> {
        match &self.initial_bins {
            None => self.value(0, &self.initial_stores, 0),
            Some(weights) => {
                let mut total = 0.0;
                for (b, w) in weights.iter().enumerate() {
                    if *w > 0.0 {
                        total += w * self.value(0, &self.initial_stores, b)?;
                    }
                }
                Ok(total)
            }
        }
    }

    /// Minimizations per stage, if every stage performed the same number.
    pub fn minimizations_per_stage(&self) -> Option<usize> {
        let first = self.stats.first()?.minimizations;
        self.stats
            .iter()
            .all(|s| s.minimizations == first)
            .then_some(first)
    }

    pub fn off_grid_lookups(&self) -> usize {
        self.stats.iter().map(|s| s.off_grid_lookups).sum()
    }
}

/// Solves `scenario` with `model`.
pub fn solve(scenario: &Scenario, model: Model, options: &SolveOptions) -> Result<Solution> {
    let started = Instant::now();
    model.check_applicable(scenario, options)?;
    let prepared = scenario.prepare()?;
    let mut solution = match model {
        Model::Single => deterministic::solve_single_prepared(&prepared, options),
        Model::Cascade => deterministic::solve_cascade_prepared(&prepared, options),
        Model::Multi => deterministic::solve_multi_prepared(&prepared, false, options),
        Model::MultiPenalty => deterministic::solve_multi_prepared(&prepared, true, options),
        Model::Aggregate => aggregate::solve_aggregate_prepared(&prepared, options),
        Model::Independent => stochastic::solve_independent_prepared(&prepared, options),
        Model::Markov => stochastic::solve_markov_prepared(&prepared, options),
    }?;
    solution.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(solution)
}

/// What one state's minimization produced.
pub(crate) struct Decision {
    pub value: f64,
    pub controls: Vec<f64>,
}

/// Context handed to a per-state minimization.
pub(crate) struct StageView<'a> {
    pub stage: usize,
    pub grid: &'a Grid,
    /// `f_{i+1}`, absent in the last period.
    pub next: Option<&'a ValueTable>,
    off_grid: &'a AtomicUsize,
}

impl StageView<'_> {
    /// Continuation value at `stores` in layer `bin`; zero past the horizon.
    pub fn continuation(&self, stores: &[f64], bin: usize) -> Result<f64> {
        match self.next {
            None => Ok(0.0),
            Some(table) => grid::value_at_counted(table.layer(bin), self.grid, stores, self.off_grid),
        }
    }
}

pub(crate) struct Sweep {
    pub values: Vec<ValueTable>,
    pub policies: Vec<PolicyTable>,
    pub stats: Vec<StageStats>,
}

/// Backward induction over `n` stages. Stage `i + 1` is frozen while every
/// `(bin, state)` entry of stage `i` is minimized in parallel.
pub(crate) fn backward_sweep<F>(
    grid: &Grid,
    n: usize,
    bins: usize,
    width: usize,
    minimize: F,
) -> Result<Sweep>
where
    F: Fn(&StageView<'_>, usize, usize) -> Result<Decision> + Sync,
{
    let d = grid.state_count();
    let mut values: Vec<ValueTable> = Vec::with_capacity(n);
    let mut policies = Vec::with_capacity(n);
    let mut stats = Vec::with_capacity(n);
    for stage in (0..n).rev() {
        let off_grid = AtomicUsize::new(0);
        let view = StageView {
            stage,
            grid,
            next: values.last(),
            off_grid: &off_grid,
        };
        let decisions: Vec<Decision> = (0..bins * d)
            .into_par_iter()
            .map(|entry| minimize(&view, entry / d, entry % d))
            .collect::<Result<_>>()?;
        let mut table = ValueTable {
            stage,
            bins,
            values: Vec::with_capacity(bins * d),
        };
        let mut policy = PolicyTable {
            stage,
            bins,
            width,
            controls: Vec::with_capacity(bins * d * width),
        };
        for dec in decisions {
            debug_assert!(dec.value.is_finite());
            debug_assert_eq!(dec.controls.len(), width);
            table.values.push(dec.value);
            policy.controls.extend(dec.controls);
        }
        stats.push(StageStats {
            minimizations: bins * d,
            off_grid_lookups: off_grid.load(Ordering::Relaxed),
        });
        values.push(table);
        policies.push(policy);
    }
    values.reverse();
    policies.reverse();
    stats.reverse();
    Ok(Sweep {
        values,
        policies,
        stats,
    })
}

impl Sweep {
    pub(crate) fn into_solution(self, model: Model, grid: Grid, scenario: &Scenario) -> Solution {
        Solution {
            model,
            grid,
            values: self.values,
            policies: self.policies,
            stats: self.stats,
            warnings: Vec::new(),
            initial_stores: scenario.initial_stores(),
            initial_bins: None,
            wall_ms: 0.0,
        }
    }
}
