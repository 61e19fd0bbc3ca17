//! Single-control heuristic for many reservoirs.
//!
//! Each period picks one total release `u` in `[0, M]`, `M = sum_j (Q_j + x_j)`,
//! and draws it from the reservoirs in proportion to their potential
//! `Q_j + x_j`. Every grid state costs exactly one one-dimensional
//! minimization per stage, so a stage performs `d_1 * d_2 * ... * d_m` of them.

use crate::deterministic::period_cost;
use crate::error::{Error, Result};
use crate::grid::{control_lattice, Grid};
use crate::scenario::Scenario;
use crate::solve::{backward_sweep, improves, solve, Decision, Model, Solution, SolveOptions};

/// Stores and potential of one aggregate state.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateState {
    pub stores: Vec<f64>,
    pub potential: f64,
}

impl AggregateState {
    pub fn new(stores: &[f64], inflows: &[f64]) -> Self {
        AggregateState {
            stores: stores.to_vec(),
            potential: stores.iter().zip(inflows).map(|(q, x)| q + x).sum(),
        }
    }
}

/// Successor stores `min(Qbar_j, (1 - u / M) (Q_j + x_j))`.
pub fn allocate(state: &AggregateState, release: f64, inflows: &[f64], caps: &[f64]) -> Result<Vec<f64>> {
    let m = state.potential;
    if release < 0.0 || release > m * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::Domain(format!("release {release} outside [0, {m}]")));
    }
    let keep = if m > 0.0 {
        (1.0 - release / m).max(0.0)
    } else {
        1.0
    };
    Ok(state
        .stores
        .iter()
        .zip(inflows)
        .zip(caps)
        .map(|((q, x), cap)| (keep * (q + x)).min(*cap))
        .collect())
}

/// Release drawn from each reservoir under the proportional rule.
pub fn allocated_releases(state: &AggregateState, release: f64, inflows: &[f64]) -> Vec<f64> {
    let m = state.potential;
    state
        .stores
        .iter()
        .zip(inflows)
        .map(|(q, x)| if m > 0.0 { release * (q + x) / m } else { 0.0 })
        .collect()
}

/// Step of the release sweep: the finest storage step over the refinement.
pub(crate) fn release_step(grid: &Grid, refinement: usize) -> f64 {
    grid.steps().iter().cloned().fold(f64::INFINITY, f64::min) / refinement as f64
}

pub fn solve_aggregate(scenario: &Scenario) -> Result<Solution> {
    solve(scenario, Model::Aggregate, &SolveOptions::default())
}

pub(crate) fn solve_aggregate_prepared(sc: &Scenario, opts: &SolveOptions) -> Result<Solution> {
    let grid = Grid::for_reservoirs(&sc.reservoirs)?;
    let m = grid.dims();
    let step = release_step(&grid, opts.refinement_for(Model::Aggregate));
    let caps = grid.capacities().to_vec();
    let sweep = backward_sweep(&grid, sc.n_periods, 1, 1, |view, _, state| {
        let i = view.stage;
        let x: Vec<f64> = (0..m).map(|j| sc.inflow(j, i)).collect();
        let agg = AggregateState::new(&grid.stores(state), &x);
        let r = sc.demands[i];
        let mut best = Decision {
            value: f64::INFINITY,
            controls: vec![0.0],
        };
        for u in control_lattice(agg.potential, step) {
            let next = allocate(&agg, u, &x, &caps)?;
            let v = period_cost(&sc.costs, i, r, u) + view.continuation(&next, 0)?;
            if improves(v, best.value) {
                best = Decision {
                    value: v,
                    controls: vec![u],
                };
            }
        }
        Ok(best)
    })?;
    Ok(sweep.into_solution(Model::Aggregate, grid, sc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::single;
    use crate::scenario::{DeterministicFlow, FlowModel, Reservoir};
    use proptest::prelude::*;

    #[test]
    fn proportional_examples() {
        let caps = [10.0, 10.0];
        let s = AggregateState::new(&[2.0, 2.0], &[1.0, 1.0]);
        assert_eq!(s.potential, 6.0);
        assert_eq!(allocate(&s, 3.0, &[1.0, 1.0], &caps).unwrap(), vec![1.5, 1.5]);
        assert_eq!(
            allocate(&s, 0.0, &[1.0, 1.0], &[2.5, 10.0]).unwrap(),
            vec![2.5, 3.0]
        );
        assert_eq!(allocate(&s, 6.0, &[1.0, 1.0], &caps).unwrap(), vec![0.0, 0.0]);
        assert!(allocate(&s, 6.5, &[1.0, 1.0], &caps).is_err());
    }

    #[test]
    fn empty_system_only_holds() {
        let s = AggregateState::new(&[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(
            allocate(&s, 0.0, &[0.0, 0.0], &[1.0, 1.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(control_lattice(s.potential, 0.5), vec![0.0]);
    }

    fn three_reservoirs() -> Scenario {
        let mut s = single(
            4.0,
            5,
            2.0,
            vec![1.0, 0.5, 1.0],
            vec![4.0, 3.0, 5.0],
            1.0,
            6.0,
            1.0,
        );
        s.reservoirs.push(Reservoir::new(2.0, 1.0, 3));
        s.reservoirs.push(Reservoir::new(3.0, 0.0, 4));
        s.flow = FlowModel::Deterministic(DeterministicFlow {
            inflows: vec![vec![1.0, 0.5, 1.0], vec![0.5, 0.5, 0.0], vec![1.0, 0.0, 1.0]],
        });
        s
    }

    #[test]
    fn one_minimization_per_grid_state() {
        let sol = solve_aggregate(&three_reservoirs()).unwrap();
        assert_eq!(sol.minimizations_per_stage(), Some(60));
    }

    #[test]
    fn symmetric_reservoirs_stay_symmetric() {
        let mut s = single(
            4.0,
            5,
            2.0,
            vec![1.0, 1.0, 2.0],
            vec![3.0, 4.0, 2.0],
            1.0,
            6.0,
            1.0,
        );
        s.reservoirs.push(s.reservoirs[0].clone());
        s.flow = FlowModel::Deterministic(DeterministicFlow {
            inflows: vec![vec![1.0, 1.0, 2.0]; 2],
        });
        let sol = solve_aggregate(&s).unwrap();
        let mut q = sol.initial_stores.clone();
        for i in 0..3 {
            let x = [s.inflow(0, i), s.inflow(1, i)];
            let stencil = sol.grid.stencil(&q).unwrap();
            let u: f64 = stencil
                .iter()
                .map(|(k, w)| w * sol.policies[i].control(*k)[0])
                .sum();
            let agg = AggregateState::new(&q, &x);
            q = allocate(&agg, u.min(agg.potential), &x, &[4.0, 4.0]).unwrap();
            assert_eq!(q[0], q[1]);
        }
    }

    proptest! {
        #[test]
        fn water_is_conserved_without_spill(
            q in proptest::collection::vec(0.0..5.0f64, 3),
            x in proptest::collection::vec(0.0..2.0f64, 3),
            frac in 0.0..=1.0f64,
        ) {
            let s = AggregateState::new(&q, &x);
            let u = frac * s.potential;
            let next = allocate(&s, u, &x, &[1e9; 3]).unwrap();
            let total: f64 = next.iter().sum();
            prop_assert!((total - (s.potential - u)).abs() < 1e-9 * (1.0 + s.potential));
        }
    }
}
