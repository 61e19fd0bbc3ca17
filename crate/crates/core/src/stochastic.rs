//! One reservoir under random inflows, either independent across periods or
//! driven by a first-order Markov chain over inflow bins.
//!
//! The release is chosen before the period's inflow is known and is capped
//! at `min(r_i, Q_i + bound)`, where `bound` is an upper quantile of the
//! inflow distribution. When a realized inflow is too small to cover the
//! release, the store empties and the shortfall is charged as deficit at
//! the penalty price `p`.

use crate::deterministic::period_cost;
use crate::error::Result;
use crate::grid::{control_lattice, Grid};
use crate::scenario::{FlowModel, InflowDistribution, Scenario};
use crate::solve::{backward_sweep, improves, solve, Decision, Model, Solution, SolveOptions, StageView};

/// Smallest support value whose cumulative weight reaches `confidence_level`.
pub fn fidelity_bound(dist: &InflowDistribution, confidence_level: f64) -> f64 {
    let mut cumulative = 0.0;
    for (x, w) in dist.support.iter().zip(&dist.weights) {
        cumulative += w;
        if cumulative >= confidence_level - 1e-12 {
            return *x;
        }
    }
    *dist.support.last().expect("distribution has support")
}

/// Expected cost of committing to `release` at store `store`:
/// immediate cost (with shortfall recourse) plus expected continuation.
/// `next_layer(k)` names the value-table layer reached after atom `k`.
fn expected_cost(
    view: &StageView<'_>,
    sc: &Scenario,
    dist: &InflowDistribution,
    store: f64,
    release: f64,
    cap: f64,
    next_layer: impl Fn(usize) -> usize,
) -> Result<f64> {
    let i = view.stage;
    let r = sc.demands[i];
    let base = period_cost(&sc.costs, i, r, release);
    let mut total = 0.0;
    for (k, (x, w)) in dist.support.iter().zip(&dist.weights).enumerate() {
        if *w == 0.0 {
            continue;
        }
        let water = store + x - release;
        let shortfall = (-water).max(0.0);
        let next = water.clamp(0.0, cap);
        let branch =
            base + sc.costs.deficit_penalty * shortfall + view.continuation(&[next], next_layer(k))?;
        total += w * branch;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn best_release(
    view: &StageView<'_>,
    sc: &Scenario,
    dist: &InflowDistribution,
    confidence_level: f64,
    store: f64,
    step: f64,
    cap: f64,
    next_layer: impl Fn(usize) -> usize + Copy,
) -> Result<Decision> {
    let r = sc.demands[view.stage];
    let upper = r.min(store + fidelity_bound(dist, confidence_level));
    let mut best = Decision {
        value: f64::INFINITY,
        controls: vec![0.0],
    };
    for u in control_lattice(upper, step) {
        let v = expected_cost(view, sc, dist, store, u, cap, next_layer)?;
        if improves(v, best.value) {
            best = Decision {
                value: v,
                controls: vec![u],
            };
        }
    }
    Ok(best)
}

pub fn solve_independent(scenario: &Scenario) -> Result<Solution> {
    solve(scenario, Model::Independent, &SolveOptions::default())
}

pub fn solve_markov(scenario: &Scenario) -> Result<Solution> {
    solve(scenario, Model::Markov, &SolveOptions::default())
}

pub(crate) fn solve_independent_prepared(sc: &Scenario, opts: &SolveOptions) -> Result<Solution> {
    let FlowModel::Independent(flow) = &sc.flow else {
        unreachable!("applicability checked by solve")
    };
    let grid = Grid::for_reservoirs(&sc.reservoirs)?;
    let cap = grid.capacities()[0];
    let step = grid.steps()[0] / opts.refinement_for(Model::Independent) as f64;
    let sweep = backward_sweep(&grid, sc.n_periods, 1, 1, |view, _, state| {
        let dist = &flow.distributions[view.stage];
        let q = grid.level_store(0, state);
        best_release(view, sc, dist, flow.confidence_level, q, step, cap, |_| 0)
    })?;
    Ok(sweep.into_solution(Model::Independent, grid, sc))
}

pub(crate) fn solve_markov_prepared(sc: &Scenario, opts: &SolveOptions) -> Result<Solution> {
    let FlowModel::Markov(chain) = &sc.flow else {
        unreachable!("applicability checked by solve")
    };
    let grid = Grid::for_reservoirs(&sc.reservoirs)?;
    let cap = grid.capacities()[0];
    let step = grid.steps()[0] / opts.refinement_for(Model::Markov) as f64;
    let bins = chain.bins.len();
    let sweep = backward_sweep(&grid, sc.n_periods, bins, 1, |view, prev, state| {
        let row = chain.row(view.stage, prev);
        let q = grid.level_store(0, state);
        best_release(view, sc, &row, chain.confidence_level, q, step, cap, |k| k)
    })?;
    let mut solution = sweep.into_solution(Model::Markov, grid, sc);
    solution.initial_bins = Some(chain.initial.clone());
    Ok(solution)
}
