mod common;

use common::Rng8;
use hydrodp::oracle::{brute_force_optimum, brute_force_stochastic, OracleOptions};
use hydrodp::scenario::{FlowModel, IndependentFlow, InflowDistribution};
use hydrodp::sim::{assumed_inflows, rollout, sample_path};
use hydrodp::{solve, validate, Model, Scenario, Solution, SolveOptions};
use proptest::prelude::*;
use rand::SeedableRng;

fn solved(s: &Scenario, model: Model) -> Solution {
    solve(s, model, &SolveOptions::default()).unwrap()
}

fn never_release_bound(s: &Scenario, from: usize) -> f64 {
    let c = &s.costs;
    s.demands[from..]
        .iter()
        .map(|r| c.thermal_price * c.thermal_cap.min(*r) + c.deficit_penalty * (r - c.thermal_cap).max(0.0))
        .sum()
}

fn deterministic_case(seed: u64) -> (Scenario, Model) {
    let mut rng = Rng8::seed_from_u64(seed);
    match seed % 4 {
        0 => (common::single(&mut rng), Model::Single),
        1 => (common::cascade(&mut rng), Model::Cascade),
        2 => (common::multi(&mut rng, false), Model::Multi),
        _ => (common::multi(&mut rng, true), Model::MultiPenalty),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn values_lie_between_zero_and_never_release(seed in any::<u64>()) {
        let (mut s, model) = deterministic_case(seed);
        s.costs.sale_prices = vec![0.0; s.n_periods];
        let sol = solved(&s, model);
        for (i, table) in sol.values.iter().enumerate() {
            let hi = never_release_bound(&s, i);
            for v in &table.values {
                prop_assert!(*v >= -1e-12 && *v <= hi + 1e-9, "stage {i}: {v} outside [0, {hi}]");
            }
        }
    }

    #[test]
    fn aligned_instances_never_interpolate(seed in any::<u64>()) {
        let (s, model) = deterministic_case(seed);
        prop_assert_eq!(solved(&s, model).off_grid_lookups(), 0);
    }

    #[test]
    fn more_water_never_costs_more(seed in any::<u64>()) {
        let (s, model) = deterministic_case(seed);
        let sol = solved(&s, model);
        let grid = &sol.grid;
        for table in &sol.values {
            for idx in 0..grid.state_count() {
                let coords = grid.coords(idx);
                for j in 0..grid.dims() {
                    if coords[j] + 1 < grid.levels()[j] {
                        let mut up = coords.clone();
                        up[j] += 1;
                        prop_assert!(table.values[grid.index(&up)] <= table.values[idx] + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn dp_matches_enumeration(seed in any::<u64>()) {
        let (s, model) = deterministic_case(seed);
        let dp = solved(&s, model).initial_value().unwrap();
        let oracle = brute_force_optimum(&s, model, &OracleOptions::default()).unwrap();
        prop_assert!((dp - oracle.cost).abs() <= 1e-9, "dp {dp} oracle {}", oracle.cost);
    }

    #[test]
    fn stochastic_dp_matches_tree(seed in any::<u64>()) {
        let mut rng = Rng8::seed_from_u64(seed);
        let (s, model) = if seed % 2 == 0 {
            (common::independent(&mut rng), Model::Independent)
        } else {
            (common::markov(&mut rng), Model::Markov)
        };
        let dp = solved(&s, model).initial_value().unwrap();
        let tree = brute_force_stochastic(&s, &OracleOptions::default()).unwrap();
        prop_assert!((dp - tree).abs() <= 1e-9, "dp {dp} tree {tree}");
    }

    #[test]
    fn rollout_keeps_water_balance(seed in any::<u64>()) {
        let (s, model) = deterministic_case(seed);
        let sol = solved(&s, model);
        let trace = rollout(&s, &sol, &assumed_inflows(&s).unwrap()).unwrap();
        prop_assert!((trace.total_cost - sol.initial_value().unwrap()).abs() <= 1e-9);
        for p in &trace.periods {
            for j in 0..p.stores_before.len() {
                let routed = if j > 0 && model != Model::Aggregate { p.releases[j - 1] } else { 0.0 };
                let balance = p.stores_before[j] + p.inflows[j] + routed - p.releases[j] - p.spills[j];
                prop_assert!((balance - p.stores_after[j]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn valid_random_scenarios_solve(seed in any::<u64>()) {
        let mut rng = Rng8::seed_from_u64(seed);
        let s = match seed % 3 {
            0 => common::pair(&mut rng),
            1 => common::independent(&mut rng),
            _ => common::markov(&mut rng),
        };
        prop_assert!(validate(&s).is_empty());
        for model in Model::ALL {
            if model.check_applicable(&s, &SolveOptions::default()).is_ok() {
                let sol = solved(&s, model);
                prop_assert!(sol.initial_value().unwrap().is_finite());
            }
        }
    }
}

/// Sample mean of rolled-out costs against the DP expectation.
fn monte_carlo(s: &Scenario, model: Model, paths: usize, seed: u64) -> (f64, f64, f64) {
    let sol = solved(s, model);
    let mut rng = Rng8::seed_from_u64(seed);
    let costs: Vec<f64> = (0..paths)
        .map(|_| {
            let path = sample_path(s, &mut rng).unwrap();
            rollout(s, &sol, &path).unwrap().total_cost
        })
        .collect();
    let mean = costs.iter().sum::<f64>() / paths as f64;
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
    (sol.initial_value().unwrap(), mean, (var / paths as f64).sqrt())
}

#[test]
fn sampled_rollouts_agree_with_expected_value() {
    let mut rng = Rng8::seed_from_u64(5);
    for k in 0..6 {
        let (s, model) = if k % 2 == 0 {
            (common::independent(&mut rng), Model::Independent)
        } else {
            (common::markov(&mut rng), Model::Markov)
        };
        let (f1, mean, se) = monte_carlo(&s, model, 4000, k);
        assert!(
            (mean - f1).abs() <= 3.0 * se + 1e-9,
            "{model}: f1 {f1}, mean {mean} ± {se}"
        );
    }
}

#[test]
fn mean_inflow_understates_expected_cost() {
    let mut s = common::deterministic(
        2,
        vec![3.0, 3.0],
        hydrodp::scenario::CostParams {
            thermal_price: 1.0,
            deficit_penalty: 5.0,
            thermal_cap: 1.0,
            sale_prices: vec![0.0; 2],
            demand_penalty: None,
        },
        vec![hydrodp::scenario::Reservoir::new(8.0, 1.0, 9)],
        vec![vec![2.0, 2.0]],
    );
    let mean_value = solved(&s, Model::Single).initial_value().unwrap();
    let spread = InflowDistribution {
        support: vec![0.0, 4.0],
        weights: vec![0.5, 0.5],
    };
    s.flow = FlowModel::Independent(IndependentFlow {
        distributions: vec![spread.clone(), spread],
        confidence_level: 0.5,
    });
    let stochastic = solved(&s, Model::Independent).initial_value().unwrap();
    let tree = brute_force_stochastic(&s, &OracleOptions::default()).unwrap();
    assert!((stochastic - tree).abs() <= 1e-9);
    assert!(mean_value <= stochastic, "{mean_value} > {stochastic}");
}
