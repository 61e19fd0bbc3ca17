//! Random scenario generators shared by the integration tests.
//!
//! Deterministic instances are grid-aligned: every store, inflow, demand,
//! thermal cap and every lattice control is an integer multiple of the grid
//! step, so DP interpolation is never needed on the optimal path.
#![allow(dead_code)]

use hydrodp::scenario::{
    CascadeStation, CostParams, DeterministicFlow, FlowModel, IndependentFlow, InflowDistribution,
    MarkovInflowModel, Reservoir,
};
use hydrodp::Scenario;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Rng8 = ChaCha8Rng;

fn ints(rng: &mut Rng8, n: usize, hi: u32, step: f64) -> Vec<f64> {
    (0..n)
        .map(|_| f64::from(rng.random_range(0..=hi)) * step)
        .collect()
}

fn costs(rng: &mut Rng8, n: usize, step: f64) -> CostParams {
    let c = rng.random_range(0.5..2.0);
    let sales = if rng.random_bool(0.5) {
        vec![0.0; n]
    } else {
        (0..n).map(|_| rng.random_range(0.0..c)).collect()
    };
    CostParams {
        thermal_price: c,
        deficit_penalty: c + rng.random_range(0.5..5.0),
        thermal_cap: f64::from(rng.random_range(0..=3u32)) * step,
        sale_prices: sales,
        demand_penalty: None,
    }
}

fn reservoir(rng: &mut Rng8, max_levels: usize, step: f64) -> Reservoir {
    let d = rng.random_range(2..=max_levels);
    let cap = (d - 1) as f64 * step;
    let initial = rng.random_range(0..d) as f64 * step;
    Reservoir::new(cap, initial, d)
}

pub fn deterministic(
    n: usize,
    demands: Vec<f64>,
    costs: CostParams,
    reservoirs: Vec<Reservoir>,
    inflows: Vec<Vec<f64>>,
) -> Scenario {
    Scenario {
        n_periods: n,
        demands,
        costs,
        days_per_period: 1,
        reservoirs,
        cascade_stations: Vec::new(),
        flow: FlowModel::Deterministic(DeterministicFlow { inflows }),
    }
}

/// One reservoir, unit step, n ≤ 4, d ≤ 6.
pub fn single(rng: &mut Rng8) -> Scenario {
    let n = rng.random_range(1..=4);
    let res = reservoir(rng, 6, 1.0);
    let demands = ints(rng, n, 4, 1.0);
    let inflows = vec![ints(rng, n, 2, 1.0)];
    let costs = costs(rng, n, 1.0);
    deterministic(n, demands, costs, vec![res], inflows)
}

/// One reservoir feeding one or two run-of-river stations.
///
/// Station data are integers and the grid step is 1/2, so the largest
/// demand-feasible release (slope 1 or 2 between breakpoints) stays on the
/// grid.
pub fn cascade(rng: &mut Rng8) -> Scenario {
    let n = rng.random_range(1..=4);
    let res = reservoir(rng, 6, 0.5);
    let demands = ints(rng, n, 4, 1.0);
    let inflows = vec![ints(rng, n, 2, 0.5)];
    let costs = costs(rng, n, 1.0);
    let mut s = deterministic(n, demands, costs, vec![res], inflows);
    s.cascade_stations = (0..rng.random_range(1..=2))
        .map(|k| CascadeStation {
            pass_capacity: f64::from(rng.random_range(1..=4u32)),
            lateral_inflows: if k == 0 {
                vec![0.0; n]
            } else {
                ints(rng, n, 1, 1.0)
            },
        })
        .collect();
    s
}

/// One or two reservoirs in series. Two-reservoir instances are kept small
/// enough for exhaustive enumeration.
pub fn multi(rng: &mut Rng8, penalty: bool) -> Scenario {
    let m = rng.random_range(1..=2);
    let (n, levels) = if m == 1 {
        (rng.random_range(1..=4), 6)
    } else {
        (rng.random_range(1..=3), 3)
    };
    let reservoirs = (0..m).map(|_| reservoir(rng, levels, 1.0)).collect();
    let demands = ints(rng, n, 3, 1.0);
    let inflows = (0..m).map(|_| ints(rng, n, 1, 1.0)).collect();
    let mut costs = costs(rng, n, 1.0);
    if penalty && rng.random_bool(0.5) {
        costs.demand_penalty = Some(rng.random_range(0.0..2.0 * costs.deficit_penalty));
    }
    deterministic(n, demands, costs, reservoirs, inflows)
}

/// Two reservoirs in the regimes where relaxed routing can only help:
/// no sales with an explicit surplus penalty, or sales with none.
pub fn pair(rng: &mut Rng8) -> Scenario {
    let n = rng.random_range(1..=4);
    let reservoirs = (0..2).map(|_| reservoir(rng, 5, 1.0)).collect();
    let demands = ints(rng, n, 4, 1.0);
    let inflows = (0..2).map(|_| ints(rng, n, 2, 1.0)).collect();
    let mut costs = costs(rng, n, 1.0);
    if rng.random_bool(0.5) {
        costs.sale_prices = vec![0.0; n];
        costs.demand_penalty = Some(rng.random_range(0.0..costs.deficit_penalty));
    }
    deterministic(n, demands, costs, reservoirs, inflows)
}

pub fn distribution(rng: &mut Rng8, atoms: usize) -> InflowDistribution {
    let mut support: Vec<f64> = Vec::new();
    while support.len() < atoms {
        let x = f64::from(rng.random_range(0..=3u32));
        if !support.contains(&x) {
            support.push(x);
        }
    }
    support.sort_by(f64::total_cmp);
    InflowDistribution {
        support,
        weights: weights(rng, atoms),
    }
}

fn weights(rng: &mut Rng8, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = w[..k - 1].iter().sum();
    w[k - 1] = 1.0 - head;
    w
}

fn level(rng: &mut Rng8) -> f64 {
    [0.5, 0.8, 0.95, 0.99][rng.random_range(0..4)]
}

/// Single reservoir with serially independent inflows, n ≤ 3, ≤ 3 atoms.
pub fn independent(rng: &mut Rng8) -> Scenario {
    let n = rng.random_range(1..=3);
    let res = reservoir(rng, 5, 1.0);
    let demands = ints(rng, n, 4, 1.0);
    let costs = costs(rng, n, 1.0);
    let distributions = (0..n)
        .map(|_| {
            let atoms = rng.random_range(1..=3);
            distribution(rng, atoms)
        })
        .collect();
    let mut s = deterministic(n, demands, costs, vec![res], Vec::new());
    s.flow = FlowModel::Independent(IndependentFlow {
        distributions,
        confidence_level: level(rng),
    });
    s
}

/// Single reservoir with a first-order chain over ≤ 3 inflow bins.
pub fn markov(rng: &mut Rng8) -> Scenario {
    let n = rng.random_range(1..=3);
    let res = reservoir(rng, 5, 1.0);
    let demands = ints(rng, n, 4, 1.0);
    let costs = costs(rng, n, 1.0);
    let k = rng.random_range(1..=3);
    let bins = distribution(rng, k).support;
    let transitions = (0..n)
        .map(|_| (0..k).map(|_| weights(rng, k)).collect())
        .collect();
    let mut s = deterministic(n, demands, costs, vec![res], Vec::new());
    s.flow = FlowModel::Markov(MarkovInflowModel {
        bins,
        transitions,
        initial: weights(rng, k),
        confidence_level: level(rng),
    });
    s
}

/// The three-reservoir scenario with level counts (5, 3, 4).
pub fn three_reservoirs(n: usize) -> Scenario {
    let caps = [4.0, 6.0, 3.0];
    let levels = [5, 3, 4];
    let reservoirs = caps
        .iter()
        .zip(levels)
        .map(|(&cap, d)| Reservoir::new(cap, cap / 2.0, d))
        .collect();
    let demands = (0..n).map(|i| 6.0 + (i % 3) as f64).collect();
    let inflows = vec![vec![1.0; n], vec![1.5; n], vec![0.5; n]];
    let costs = CostParams {
        thermal_price: 1.0,
        deficit_penalty: 10.0,
        thermal_cap: 3.0,
        sale_prices: vec![0.0; n],
        demand_penalty: Some(2.0),
    };
    deterministic(n, demands, costs, reservoirs, inflows)
}
