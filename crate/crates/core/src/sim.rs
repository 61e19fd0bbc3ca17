//! Forward execution of a tabulated policy along an inflow path.

use rand::Rng;

use crate::aggregate::{allocate, allocated_releases, AggregateState};
use crate::deterministic::{breakdown, cascade_hydro, max_feasible_release, surplus_penalty, CostBreakdown};
use crate::error::{Error, Result};
use crate::scenario::{FlowModel, InflowDistribution, Scenario};
use crate::solve::{Model, Solution};
use crate::stochastic::fidelity_bound;

/// Realized inflows, energy units: `inflows[i][j]` reaches reservoir `j` in
/// period `i`. Markov policies also need the inflow seen before period 1.
#[derive(Debug, Clone, PartialEq)]
pub struct InflowPath {
    pub prior: Option<f64>,
    pub inflows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub period: usize,
    pub stores_before: Vec<f64>,
    pub inflows: Vec<f64>,
    /// Water actually released from each reservoir.
    pub releases: Vec<f64>,
    pub spills: Vec<f64>,
    pub stores_after: Vec<f64>,
    pub hydro: f64,
    pub thermal: f64,
    pub deficit: f64,
    pub surplus: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    pub periods: Vec<PeriodRecord>,
    pub total_cost: f64,
}

impl RolloutTrace {
    pub fn total_spill(&self) -> f64 {
        self.periods.iter().flat_map(|p| &p.spills).sum()
    }

    pub fn total_deficit(&self) -> f64 {
        self.periods.iter().map(|p| p.deficit).sum()
    }
}

/// The deterministic inflows the scenario's solvers assume.
pub fn assumed_inflows(scenario: &Scenario) -> Result<InflowPath> {
    let sc = scenario.prepare()?;
    match &sc.flow {
        FlowModel::Deterministic(flow) => Ok(InflowPath {
            prior: None,
            inflows: (0..sc.n_periods)
                .map(|i| flow.inflows.iter().map(|s| s[i]).collect())
                .collect(),
        }),
        other => Err(Error::Applicability(format!(
            "{} inflows have no single assumed path",
            other.kind()
        ))),
    }
}

fn draw(dist: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in dist.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    dist.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Samples one inflow path from the scenario's flow model.
pub fn sample_path(scenario: &Scenario, rng: &mut impl Rng) -> Result<InflowPath> {
    let sc = scenario.prepare()?;
    match &sc.flow {
        FlowModel::Deterministic(_) => assumed_inflows(&sc),
        FlowModel::Independent(flow) => Ok(InflowPath {
            prior: None,
            inflows: flow
                .distributions
                .iter()
                .map(|d| vec![d.support[draw(&d.weights, rng)]])
                .collect(),
        }),
        FlowModel::Markov(chain) => {
            let mut bin = draw(&chain.initial, rng);
            let prior = chain.bins[bin];
            let mut inflows = Vec::with_capacity(sc.n_periods);
            for i in 0..sc.n_periods {
                bin = draw(&chain.transitions[i][bin], rng);
                inflows.push(vec![chain.bins[bin]]);
            }
            Ok(InflowPath {
                prior: Some(prior),
                inflows,
            })
        }
        FlowModel::IndependentParametric(_) => unreachable!("binned by prepare"),
    }
}

/// Interpolated policy controls at `stores` for one previous-inflow layer.
fn lookup(solution: &Solution, stage: usize, stores: &[f64], bin: usize) -> Result<Vec<f64>> {
    let policy = &solution.policies[stage];
    let d = solution.grid.state_count();
    let mut out = vec![0.0; policy.width];
    for (idx, w) in solution.grid.stencil(stores)? {
        for (o, u) in out.iter_mut().zip(policy.control(bin * d + idx)) {
            *o += w * u;
        }
    }
    Ok(out)
}

/// Runs `solution`'s policy forward along `path`.
///
/// Off-grid stores read a linearly interpolated control, which is then
/// clamped back into the model's admissible set.
pub fn rollout(scenario: &Scenario, solution: &Solution, path: &InflowPath) -> Result<RolloutTrace> {
    let sc = scenario.prepare()?;
    let n = sc.n_periods;
    let m = sc.reservoirs.len();
    if solution.n_periods() != n || path.inflows.len() != n {
        return Err(Error::Domain(format!(
            "policy has {} stages and path {} periods, scenario has {n}",
            solution.n_periods(),
            path.inflows.len()
        )));
    }
    if solution.grid.dims() != m || path.inflows.iter().any(|x| x.len() != m) {
        return Err(Error::Domain(format!(
            "policy or inflow path does not match {m} reservoirs"
        )));
    }
    let caps: Vec<f64> = sc.reservoirs.iter().map(|r| r.capacity).collect();
    let costs = &sc.costs;
    let model = solution.model;

    let mut prev_bin = match (&sc.flow, model) {
        (FlowModel::Markov(chain), Model::Markov) => {
            let prior = path
                .prior
                .ok_or_else(|| Error::Domain("Markov rollout needs the inflow preceding period 1".into()))?;
            chain.nearest_bin(prior)
        }
        _ => 0,
    };

    let mut stores = sc.initial_stores();
    let mut periods = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        let x = &path.inflows[i];
        let r = sc.demands[i];
        let raw = lookup(solution, i, &stores, prev_bin)?;
        let mut spills = vec![0.0; m];
        let mut next = vec![0.0; m];
        let releases: Vec<f64>;
        let hydro: f64;
        let mut extra = 0.0;
        let mut shortfall = 0.0;
        let bd: CostBreakdown;
        match model {
            Model::Single | Model::Cascade => {
                let available = stores[0] + x[0];
                let mut u = raw[0].clamp(0.0, available);
                if model == Model::Single {
                    u = u.min(r);
                    hydro = u;
                } else {
                    match max_feasible_release(&sc.cascade_stations, i, r, available) {
                        Some(top) => u = u.min(top),
                        None => u = 0.0,
                    }
                    hydro = cascade_hydro(&sc.cascade_stations, i, u).min(r);
                }
                let water = available - u;
                spills[0] = (water - caps[0]).max(0.0);
                next[0] = water.clamp(0.0, caps[0]);
                releases = vec![u];
                bd = breakdown(costs, i, r, hydro);
            }
            Model::Multi | Model::MultiPenalty => {
                let mut u = vec![0.0; m];
                let mut used = 0.0;
                for j in 0..m {
                    let upstream = if j == 0 { 0.0 } else { u[j - 1] };
                    let mut upper = stores[j] + x[j] + upstream;
                    if model == Model::Multi {
                        upper = upper.min((r - used).max(0.0));
                    }
                    u[j] = raw[j].clamp(0.0, upper);
                    used += u[j];
                    let water = stores[j] + x[j] + upstream - u[j];
                    spills[j] = (water - caps[j]).max(0.0);
                    next[j] = water.clamp(0.0, caps[j]);
                }
                hydro = used;
                if model == Model::MultiPenalty {
                    extra = surplus_penalty(costs, r, hydro);
                }
                releases = u;
                bd = breakdown(costs, i, r, hydro);
            }
            Model::Aggregate => {
                let agg = AggregateState::new(&stores, x);
                let u = raw[0].clamp(0.0, agg.potential);
                let kept = allocate(&agg, u, x, &vec![f64::INFINITY; m])?;
                for j in 0..m {
                    spills[j] = (kept[j] - caps[j]).max(0.0);
                    next[j] = kept[j].min(caps[j]);
                }
                releases = allocated_releases(&agg, u, x);
                hydro = u;
                bd = breakdown(costs, i, r, hydro);
            }
            Model::Independent | Model::Markov => {
                let (dist, level): (InflowDistribution, f64) = match &sc.flow {
                    FlowModel::Independent(f) => (f.distributions[i].clone(), f.confidence_level),
                    FlowModel::Markov(c) => (c.row(i, prev_bin), c.confidence_level),
                    _ => return Err(Error::Applicability("policy needs random inflows".into())),
                };
                let u = raw[0].clamp(0.0, r.min(stores[0] + fidelity_bound(&dist, level)));
                let water = stores[0] + x[0] - u;
                shortfall = (-water).max(0.0);
                spills[0] = (water - caps[0]).max(0.0);
                next[0] = water.clamp(0.0, caps[0]);
                releases = vec![u - shortfall];
                hydro = u - shortfall;
                bd = breakdown(costs, i, r, u);
                extra = costs.deficit_penalty * shortfall;
                if let FlowModel::Markov(c) = &sc.flow {
                    prev_bin = c.nearest_bin(x[0]);
                }
            }
        }
        let cost = bd.cost + extra;
        total += cost;
        periods.push(PeriodRecord {
            period: i + 1,
            stores_before: stores.clone(),
            inflows: x.clone(),
            releases,
            spills,
            stores_after: next.clone(),
            hydro,
            thermal: bd.thermal,
            deficit: bd.deficit + shortfall,
            surplus: bd.surplus,
            cost,
        });
        stores = next;
    }
    Ok(RolloutTrace {
        periods,
        total_cost: total,
    })
}
