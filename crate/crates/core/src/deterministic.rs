//! Backward induction for the deterministic models: one reservoir, a head
//! reservoir feeding a run-of-river cascade, and reservoirs in series.

use crate::error::Result;
use crate::grid::{control_lattice, Grid};
use crate::scenario::{CascadeStation, CostParams, Scenario};
use crate::solve::{backward_sweep, improves, solve, Decision, Model, Solution, SolveOptions, StageView};

/// Inputs of one period's operating cost.
#[derive(Debug, Clone, Copy)]
pub struct StageCostInputs<'a> {
    pub demand: f64,
    pub hydro: f64,
    pub costs: &'a CostParams,
    pub period: usize,
}

/// How a period's demand was covered.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub thermal: f64,
    pub deficit: f64,
    pub surplus: f64,
    pub cost: f64,
}

/// `c * clamp(r - h, 0, K) + p * max(0, r - h - K) - a_i * max(0, h - r)`.
///
/// Thermal output is clamped at zero, so a hydro surplus never earns a
/// negative thermal bill; it earns the sale price instead.
pub fn stage_cost(inputs: &StageCostInputs<'_>) -> f64 {
    breakdown(inputs.costs, inputs.period, inputs.demand, inputs.hydro).cost
}

pub fn breakdown(costs: &CostParams, period: usize, demand: f64, hydro: f64) -> CostBreakdown {
    let gap = demand - hydro;
    let thermal = gap.clamp(0.0, costs.thermal_cap);
    let deficit = (gap - costs.thermal_cap).max(0.0);
    let surplus = (-gap).max(0.0);
    let cost =
        costs.thermal_price * thermal + costs.deficit_penalty * deficit - costs.sale_price(period) * surplus;
    CostBreakdown {
        thermal,
        deficit,
        surplus,
        cost,
    }
}

pub(crate) fn period_cost(costs: &CostParams, period: usize, demand: f64, hydro: f64) -> f64 {
    breakdown(costs, period, demand, hydro).cost
}

/// Closed-form last period: release `min(r_n, Q_n + x_n)`.
///
/// Returns `(cost, release)`. The scenario must be a one-reservoir
/// deterministic scenario in energy units.
pub fn terminal_stage(scenario: &Scenario, store: f64) -> (f64, f64) {
    let last = scenario.n_periods - 1;
    let release = scenario.demands[last].min(store + scenario.inflow(0, last));
    let cost = period_cost(&scenario.costs, last, scenario.demands[last], release);
    (cost, release)
}

pub fn solve_single(scenario: &Scenario) -> Result<Solution> {
    solve(scenario, Model::Single, &SolveOptions::default())
}

pub fn solve_cascade(scenario: &Scenario) -> Result<Solution> {
    solve(scenario, Model::Cascade, &SolveOptions::default())
}

/// Exact product-grid solve; `penalty` swaps the hard demand coupling for a
/// priced surplus.
pub fn solve_multi(scenario: &Scenario, penalty: bool) -> Result<Solution> {
    let model = if penalty {
        Model::MultiPenalty
    } else {
        Model::Multi
    };
    solve(scenario, model, &SolveOptions::default())
}

pub(crate) fn solve_single_prepared(sc: &Scenario, opts: &SolveOptions) -> Result<Solution> {
    let grid = Grid::for_reservoirs(&sc.reservoirs)?;
    let cap = grid.capacities()[0];
    let step = grid.steps()[0] / opts.refinement_for(Model::Single) as f64;
    let n = sc.n_periods;
    let sweep = backward_sweep(&grid, n, 1, 1, |view: &StageView<'_>, _, state| {
        let i = view.stage;
        let q = grid.level_store(0, state);
        if i + 1 == n {
            let (value, u) = terminal_stage(sc, q);
            return Ok(Decision {
                value,
                controls: vec![u],
            });
        }
        let x = sc.inflow(0, i);
        let r = sc.demands[i];
        let mut best = Decision {
            value: f64::INFINITY,
            controls: vec![0.0],
        };
        for u in control_lattice(r.min(q + x), step) {
            let next = (q + x - u).clamp(0.0, cap);
            let v = period_cost(&sc.costs, i, r, u) + view.continuation(&[next], 0)?;
            if improves(v, best.value) {
                best = Decision {
                    value: v,
                    controls: vec![u],
                };
            }
        }
        Ok(best)
    })?;
    let mut solution = sweep.into_solution(Model::Single, grid, sc);
    let last = n - 1;
    let x = sc.inflow(0, last);
    if (0..sc.reservoirs[0].level_count)
        .any(|k| cap < sc.demands[last].min(solution.grid.level_store(0, k) + x))
    {
        solution.warnings.push(format!(
            "capacity {cap} is below the closed-form last-period release at some levels; \
             the release is not capped by capacity"
        ));
    }
    Ok(solution)
}

/// Water reaching each station when the head reservoir releases `release`:
/// `min(I_j, u + xi_1 + ... + xi_j)`.
pub fn station_flows(stations: &[CascadeStation], period: usize, release: f64) -> Vec<f64> {
    let mut lateral = 0.0;
    stations
        .iter()
        .map(|s| {
            lateral += s.lateral_inflows[period];
            s.pass_capacity.min(release + lateral)
        })
        .collect()
}

/// Total energy produced along the cascade.
pub fn cascade_hydro(stations: &[CascadeStation], period: usize, release: f64) -> f64 {
    station_flows(stations, period, release).iter().sum()
}

/// Largest release in `[0, upper]` keeping cascade output within `demand`,
/// or `None` when even a zero release overshoots it.
pub fn max_feasible_release(
    stations: &[CascadeStation],
    period: usize,
    demand: f64,
    upper: f64,
) -> Option<f64> {
    let tol = 1e-9 * (1.0 + demand);
    let output = |u: f64| cascade_hydro(stations, period, u);
    if output(upper) <= demand + tol {
        return Some(upper);
    }
    if output(0.0) > demand + tol {
        return None;
    }
    // output is piecewise linear in u, kinking where a station saturates
    let mut knots = vec![0.0, upper];
    let mut lateral = 0.0;
    for s in stations {
        lateral += s.lateral_inflows[period];
        let k = s.pass_capacity - lateral;
        if k > 0.0 && k < upper {
            knots.push(k);
        }
    }
    knots.sort_by(f64::total_cmp);
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (a, b) = (output(lo), output(hi));
        if b > demand + tol {
            if b - a <= 0.0 {
                return Some(lo);
            }
            return Some((lo + (demand - a) * (hi - lo) / (b - a)).clamp(lo, hi));
        }
    }
    Some(upper)
}

pub(crate) fn solve_cascade_prepared(sc: &Scenario, opts: &SolveOptions) -> Result<Solution> {
    let grid = Grid::for_reservoirs(&sc.reservoirs)?;
    let cap = grid.capacities()[0];
    let step = grid.steps()[0] / opts.refinement_for(Model::Cascade) as f64;
    let stations = &sc.cascade_stations;
    let sweep = backward_sweep(&grid, sc.n_periods, 1, 1, |view, _, state| {
        let i = view.stage;
        let q = grid.level_store(0, state);
        let x = sc.inflow(0, i);
        let r = sc.demands[i];
        let Some(top) = max_feasible_release(stations, i, r, q + x) else {
            // lateral inflows alone exceed demand: hold water back, curtail the rest
            let next = (q + x).min(cap);
            let value = period_cost(&sc.costs, i, r, r) + view.continuation(&[next], 0)?;
            return Ok(Decision {
                value,
                controls: vec![0.0],
            });
        };
        let mut best = Decision {
            value: f64::INFINITY,
            controls: vec![0.0],
        };
        for u in control_lattice(top, step) {
            let hydro = cascade_hydro(stations, i, u).min(r);
            let next = (q + x - u).clamp(0.0, cap);
            let v = period_cost(&sc.costs, i, r, hydro) + view.continuation(&[next], 0)?;
            if improves(v, best.value) {
                best = Decision {
                    value: v,
                    controls: vec![u],
                };
            }
        }
        Ok(best)
    })?;
    Ok(sweep.into_solution(Model::Cascade, grid, sc))
}

/// Successor stores of reservoirs in series: release `u_{j-1}` enters
/// reservoir `j` in the same period.
pub fn series_transition(stores: &[f64], inflows: &[f64], releases: &[f64], caps: &[f64]) -> Vec<f64> {
    (0..stores.len())
        .map(|j| {
            let upstream = if j == 0 { 0.0 } else { releases[j - 1] };
            (stores[j] + upstream - releases[j] + inflows[j]).clamp(0.0, caps[j])
        })
        .collect()
}

/// Extra cost of a multi-reservoir period under the relaxed coupling.
pub(crate) fn surplus_penalty(costs: &CostParams, demand: f64, hydro: f64) -> f64 {
    costs.demand_penalty.unwrap_or(0.0) * (hydro - demand).max(0.0)
}

pub(crate) fn solve_multi_prepared(sc: &Scenario, penalty: bool, opts: &SolveOptions) -> Result<Solution> {
    let model = if penalty {
        Model::MultiPenalty
    } else {
        Model::Multi
    };
    let grid = Grid::for_reservoirs(&sc.reservoirs)?;
    let m = grid.dims();
    let refine = opts.refinement_for(model) as f64;
    let steps: Vec<f64> = grid.steps().iter().map(|s| s / refine).collect();
    let caps = grid.capacities().to_vec();
    let sweep = backward_sweep(&grid, sc.n_periods, 1, m, |view, _, state| {
        let i = view.stage;
        let q = grid.stores(state);
        let x: Vec<f64> = (0..m).map(|j| sc.inflow(j, i)).collect();
        let r = sc.demands[i];
        let mut best = Decision {
            value: f64::INFINITY,
            controls: vec![0.0; m],
        };
        let mut releases = vec![0.0; m];
        let mut failure = None;
        let mut visit = |u: &[f64]| {
            let hydro: f64 = u.iter().sum();
            let mut v = period_cost(&sc.costs, i, r, hydro);
            if penalty {
                v += surplus_penalty(&sc.costs, r, hydro);
            }
            let next = series_transition(&q, &x, u, &caps);
            match view.continuation(&next, 0) {
                Ok(f) => v += f,
                Err(e) => {
                    failure.get_or_insert(e);
                    return;
                }
            }
            if improves(v, best.value) {
                best = Decision {
                    value: v,
                    controls: u.to_vec(),
                };
            }
        };
        let demand_cap = if penalty { None } else { Some(r) };
        enumerate_series(0, &q, &x, &steps, demand_cap, 0.0, &mut releases, &mut visit);
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(best)
    })?;
    Ok(sweep.into_solution(model, grid, sc))
}

/// Visits every release vector in lexicographic order. Reservoir `j` may
/// release up to `Q_j + x_j + u_{j-1}`; with `demand_cap` the running total
/// may not exceed the demand.
#[allow(clippy::too_many_arguments)]
fn enumerate_series(
    j: usize,
    stores: &[f64],
    inflows: &[f64],
    steps: &[f64],
    demand_cap: Option<f64>,
    used: f64,
    releases: &mut [f64],
    visit: &mut dyn FnMut(&[f64]),
) {
    if j == stores.len() {
        visit(releases);
        return;
    }
    let upstream = if j == 0 { 0.0 } else { releases[j - 1] };
    let mut upper = stores[j] + inflows[j] + upstream;
    if let Some(r) = demand_cap {
        upper = upper.min((r - used).max(0.0));
    }
    for u in control_lattice(upper, steps[j]) {
        releases[j] = u;
        enumerate_series(
            j + 1,
            stores,
            inflows,
            steps,
            demand_cap,
            used + u,
            releases,
            visit,
        );
    }
    releases[j] = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::{single, two_period};
    use crate::scenario::{DeterministicFlow, FlowModel, Reservoir};

    fn costs(c: f64, p: f64, k: f64, a: f64) -> CostParams {
        CostParams {
            thermal_price: c,
            deficit_penalty: p,
            thermal_cap: k,
            sale_prices: vec![a],
            demand_penalty: None,
        }
    }

    #[test]
    fn stage_cost_examples() {
        let eval = |c: &CostParams, r, h| {
            stage_cost(&StageCostInputs {
                demand: r,
                hydro: h,
                costs: c,
                period: 0,
            })
        };
        assert_eq!(eval(&costs(1.0, 2.0, 10.0, 0.0), 15.0, 5.0), 10.0);
        assert_eq!(eval(&costs(1.0, 10.0, 1.0, 0.0), 2.0, 0.0), 11.0);
        assert_eq!(eval(&costs(1.0, 10.0, 1.0, 0.5), 2.0, 3.0), -0.5);
    }

    #[test]
    fn two_period_hand_enumeration() {
        // u_1 in {0, 1, 2}: 11 + f_2(2), 1 + f_2(1), 0 + f_2(0) = 11, 1, 1
        let s = two_period().prepare().unwrap();
        assert_eq!(terminal_stage(&s, 2.0), (0.0, 2.0));
        assert_eq!(terminal_stage(&s, 1.0), (0.0, 2.0));
        assert_eq!(terminal_stage(&s, 0.0), (1.0, 1.0));
        let sol = solve_single(&two_period()).unwrap();
        assert_eq!(sol.initial_value().unwrap(), 1.0);
        assert_eq!(sol.policies[0].control(1), &[1.0]);
        assert_eq!(sol.off_grid_lookups(), 0);
    }

    #[test]
    fn terminal_release_examples() {
        let mut s = single(100.0, 3, 0.0, vec![3.0], vec![5.0], 1.0, 10.0, 0.0);
        assert_eq!(terminal_stage(&s, 0.0).1, 3.0);
        s.demands = vec![0.0];
        assert_eq!(terminal_stage(&s, 0.0), (0.0, 0.0));
        s.demands = vec![2.0];
        assert_eq!(terminal_stage(&s, 7.0), (0.0, 2.0));
    }

    #[test]
    fn inflow_covering_demand_costs_nothing() {
        let s = single(
            4.0,
            5,
            1.0,
            vec![3.0, 2.0, 5.0],
            vec![3.0, 1.0, 4.0],
            2.0,
            9.0,
            1.0,
        );
        let sol = solve_single(&s).unwrap();
        assert_eq!(sol.initial_value().unwrap(), 0.0);
        for (i, p) in sol.policies.iter().enumerate() {
            assert_eq!(p.control(1)[0], s.demands[i]);
        }
    }

    #[test]
    fn no_demand_no_cost_no_release() {
        let s = single(4.0, 5, 2.0, vec![1.0, 2.0], vec![0.0, 0.0], 2.0, 9.0, 1.0);
        let sol = solve_single(&s).unwrap();
        for (v, p) in sol.values.iter().zip(&sol.policies) {
            assert!(v.values.iter().all(|&f| f == 0.0));
            assert!(p.controls.iter().all(|&u| u == 0.0));
        }
    }

    fn with_stations(mut s: Scenario, stations: Vec<CascadeStation>) -> Scenario {
        s.cascade_stations = stations;
        s
    }

    #[test]
    fn cumulative_station_flows() {
        let stations = vec![
            CascadeStation {
                pass_capacity: 2.0,
                lateral_inflows: vec![0.0],
            },
            CascadeStation {
                pass_capacity: 2.0,
                lateral_inflows: vec![1.0],
            },
        ];
        // straight loop over stations as the reference
        let mut reference = 0.0;
        let mut acc = 1.0;
        for s in &stations {
            acc += s.lateral_inflows[0];
            reference += f64::min(s.pass_capacity, acc);
        }
        assert_eq!(station_flows(&stations, 0, 1.0), vec![1.0, 2.0]);
        assert_eq!(cascade_hydro(&stations, 0, 1.0), reference);
        assert_eq!(reference, 3.0);
    }

    #[test]
    fn closed_station_contributes_nothing() {
        let stations = vec![
            CascadeStation {
                pass_capacity: 5.0,
                lateral_inflows: vec![0.0],
            },
            CascadeStation {
                pass_capacity: 0.0,
                lateral_inflows: vec![3.0],
            },
        ];
        assert_eq!(station_flows(&stations, 0, 2.0), vec![2.0, 0.0]);
    }

    #[test]
    fn feasible_release_solves_piecewise_output() {
        let stations = vec![
            CascadeStation {
                pass_capacity: 3.0,
                lateral_inflows: vec![0.0],
            },
            CascadeStation {
                pass_capacity: 4.0,
                lateral_inflows: vec![0.5],
            },
        ];
        // output(u) = min(3, u) + min(4, u + 0.5)
        let u = max_feasible_release(&stations, 0, 5.0, 10.0).unwrap();
        assert!((cascade_hydro(&stations, 0, u) - 5.0).abs() < 1e-12);
        assert!((u - 2.25).abs() < 1e-12);
        assert_eq!(max_feasible_release(&stations, 0, 0.2, 10.0), None);
        assert_eq!(max_feasible_release(&stations, 0, 100.0, 10.0), Some(10.0));
    }

    #[test]
    fn unconstrained_single_station_matches_single() {
        let s = single(
            4.0,
            5,
            2.0,
            vec![1.0, 0.0, 2.0, 1.0],
            vec![3.0, 2.0, 4.0, 1.0],
            1.0,
            5.0,
            1.0,
        );
        let c = with_stations(
            s.clone(),
            vec![CascadeStation {
                pass_capacity: 100.0,
                lateral_inflows: vec![0.0; 4],
            }],
        );
        let a = solve_single(&s).unwrap();
        let b = solve_cascade(&c).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.values, y.values);
        }
    }

    #[test]
    fn multi_with_one_reservoir_matches_single() {
        let s = single(
            3.0,
            4,
            1.0,
            vec![1.0, 2.0, 0.0],
            vec![2.0, 3.0, 2.0],
            1.0,
            4.0,
            1.0,
        );
        let a = solve_single(&s).unwrap();
        for penalty in [false, true] {
            let b = solve_multi(&s, penalty).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.values, y.values);
            }
        }
    }

    #[test]
    fn hard_mode_without_demand_releases_nothing() {
        let mut s = single(2.0, 3, 1.0, vec![1.0, 1.0], vec![0.0, 0.0], 1.0, 4.0, 1.0);
        s.reservoirs.push(Reservoir::new(2.0, 0.0, 3));
        s.flow = FlowModel::Deterministic(DeterministicFlow {
            inflows: vec![vec![1.0, 1.0], vec![0.0, 1.0]],
        });
        let sol = solve_multi(&s, false).unwrap();
        assert!(sol.policies.iter().all(|p| p.controls.iter().all(|&u| u == 0.0)));
        assert_eq!(sol.initial_value().unwrap(), 0.0);
    }

    #[test]
    fn series_routing_feeds_downstream() {
        let next = series_transition(&[1.0, 0.0], &[1.0, 0.0], &[2.0, 1.0], &[3.0, 3.0]);
        assert_eq!(next, vec![0.0, 1.0]);
    }
}
