//! Exhaustive reference solutions for small instances.
//!
//! Nothing here calls into the DP solvers: costs, control sets and
//! transitions are re-derived in straight-line code and every control
//! sequence (or every node of the inflow scenario tree) is visited without
//! memoization. Agreement with the solvers is therefore evidence, not a
//! tautology.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenario::{FlowModel, InflowDistribution, Scenario};
use crate::solve::Model;

pub const DEFAULT_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone)]
pub struct OracleOptions {
    /// Same meaning as [`crate::SolveOptions::refinement`].
    pub refinement: Option<usize>,
    /// Refuse instances whose enumeration size exceeds this.
    pub budget: u128,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            refinement: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub cost: f64,
    /// Lexicographically smallest optimal control sequence, one control
    /// vector per period.
    pub controls: Vec<Vec<f64>>,
}

const EPS: f64 = 1e-9;

fn thermal_bill(sc: &Scenario, i: usize, hydro: f64) -> f64 {
    let c = &sc.costs;
    let r = sc.demands[i];
    let mut bill = 0.0;
    if hydro < r {
        let missing = r - hydro;
        let thermal = if missing < c.thermal_cap {
            missing
        } else {
            c.thermal_cap
        };
        bill += c.thermal_price * thermal;
        if missing > c.thermal_cap {
            bill += c.deficit_penalty * (missing - c.thermal_cap);
        }
    } else {
        bill -= c.sale_prices[i] * (hydro - r);
    }
    bill
}

fn candidates(upper: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if upper <= 0.0 {
        out.push(0.0);
        return out;
    }
    let mut k = 0usize;
    loop {
        let u = k as f64 * step;
        if u > upper + EPS * step {
            break;
        }
        out.push(if u > upper { upper } else { u });
        k += 1;
    }
    let last = out[out.len() - 1];
    if (upper - last).abs() <= EPS * step {
        let n = out.len();
        out[n - 1] = upper;
    } else {
        out.push(upper);
    }
    out
}

fn count_upper(upper: f64, step: f64) -> u128 {
    if upper <= 0.0 {
        1
    } else {
        (upper / step).floor() as u128 + 2
    }
}

/// Everything the enumeration needs about one period, precomputed.
struct Period<'a> {
    sc: &'a Scenario,
    model: Model,
    steps: Vec<f64>,
    caps: Vec<f64>,
}

impl Period<'_> {
    /// Control vectors admissible at `stores` in period `i`, lexicographic.
    fn controls(&self, i: usize, stores: &[f64]) -> Vec<Vec<f64>> {
        let sc = self.sc;
        let r = sc.demands[i];
        match self.model {
            Model::Single => candidates(r.min(stores[0] + sc.inflow(0, i)), self.steps[0])
                .into_iter()
                .map(|u| vec![u])
                .collect(),
            Model::Cascade => {
                let upper = stores[0] + sc.inflow(0, i);
                if self.cascade_output(i, 0.0) > r + EPS {
                    return vec![vec![0.0]];
                }
                let top = if self.cascade_output(i, upper) <= r + EPS {
                    upper
                } else {
                    let (mut lo, mut hi) = (0.0, upper);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if self.cascade_output(i, mid) <= r {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    lo
                };
                candidates(top, self.steps[0])
                    .into_iter()
                    .map(|u| vec![u])
                    .collect()
            }
            Model::Multi | Model::MultiPenalty => {
                let mut out = Vec::new();
                let mut partial = Vec::new();
                self.series_controls(i, stores, &mut partial, &mut out);
                out
            }
            Model::Aggregate => {
                let potential: f64 = (0..stores.len()).map(|j| stores[j] + sc.inflow(j, i)).sum();
                candidates(potential, self.steps[0])
                    .into_iter()
                    .map(|u| vec![u])
                    .collect()
            }
            Model::Independent | Model::Markov => unreachable!(),
        }
    }

    fn series_controls(&self, i: usize, stores: &[f64], partial: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        let j = partial.len();
        if j == stores.len() {
            out.push(partial.clone());
            return;
        }
        let mut upper = stores[j] + self.sc.inflow(j, i) + if j > 0 { partial[j - 1] } else { 0.0 };
        if self.model == Model::Multi {
            let used: f64 = partial.iter().sum();
            let room = self.sc.demands[i] - used;
            upper = upper.min(if room > 0.0 { room } else { 0.0 });
        }
        for u in candidates(upper, self.steps[j]) {
            partial.push(u);
            self.series_controls(i, stores, partial, out);
            partial.pop();
        }
    }

    fn cascade_output(&self, i: usize, release: f64) -> f64 {
        let mut total = 0.0;
        for (j, st) in self.sc.cascade_stations.iter().enumerate() {
            let mut water = release;
            for k in 0..=j {
                water += self.sc.cascade_stations[k].lateral_inflows[i];
            }
            total += if water < st.pass_capacity {
                water
            } else {
                st.pass_capacity
            };
        }
        total
    }

    /// Cost of applying `u` in period `i` and the stores it leads to.
    fn step(&self, i: usize, stores: &[f64], u: &[f64]) -> (f64, Vec<f64>) {
        let sc = self.sc;
        let r = sc.demands[i];
        let clamp = |v: f64, cap: f64| {
            if v < 0.0 {
                0.0
            } else if v > cap {
                cap
            } else {
                v
            }
        };
        match self.model {
            Model::Single => {
                let next = clamp(stores[0] + sc.inflow(0, i) - u[0], self.caps[0]);
                (thermal_bill(sc, i, u[0]), vec![next])
            }
            Model::Cascade => {
                let out = self.cascade_output(i, u[0]);
                let hydro = if out > r { r } else { out };
                let next = clamp(stores[0] + sc.inflow(0, i) - u[0], self.caps[0]);
                (thermal_bill(sc, i, hydro), vec![next])
            }
            Model::Multi | Model::MultiPenalty => {
                let hydro: f64 = u.iter().sum();
                let mut cost = thermal_bill(sc, i, hydro);
                if self.model == Model::MultiPenalty && hydro > r {
                    cost += sc.costs.demand_penalty.unwrap_or(0.0) * (hydro - r);
                }
                let mut next = Vec::with_capacity(stores.len());
                for j in 0..stores.len() {
                    let inflow = sc.inflow(j, i) + if j > 0 { u[j - 1] } else { 0.0 };
                    next.push(clamp(stores[j] + inflow - u[j], self.caps[j]));
                }
                (cost, next)
            }
            Model::Aggregate => {
                let potential: f64 = (0..stores.len()).map(|j| stores[j] + sc.inflow(j, i)).sum();
                let mut next = Vec::with_capacity(stores.len());
                for (j, q) in stores.iter().enumerate() {
                    let own = q + sc.inflow(j, i);
                    let kept = if potential > 0.0 {
                        own - u[0] * own / potential
                    } else {
                        own
                    };
                    next.push(clamp(kept, self.caps[j]));
                }
                (thermal_bill(sc, i, u[0]), next)
            }
            Model::Independent | Model::Markov => unreachable!(),
        }
    }

    fn size_bound(&self) -> u128 {
        let sc = self.sc;
        let m = sc.reservoirs.len();
        let mut size: u128 = 1;
        for i in 0..sc.n_periods {
            let r = sc.demands[i];
            let per = match self.model {
                Model::Single => count_upper(r.min(self.caps[0] + sc.inflow(0, i)), self.steps[0]),
                Model::Cascade => count_upper(self.caps[0] + sc.inflow(0, i), self.steps[0]),
                Model::Multi | Model::MultiPenalty => {
                    let mut prod: u128 = 1;
                    let mut upstream = 0.0;
                    for j in 0..m {
                        let mut upper = self.caps[j] + sc.inflow(j, i) + upstream;
                        if self.model == Model::Multi {
                            upper = upper.min(r);
                        }
                        prod = prod.saturating_mul(count_upper(upper, self.steps[j]));
                        upstream = upper;
                    }
                    prod
                }
                Model::Aggregate => {
                    let total: f64 = (0..m).map(|j| self.caps[j] + sc.inflow(j, i)).sum();
                    count_upper(total, self.steps[0])
                }
                Model::Independent | Model::Markov => unreachable!(),
            };
            size = size.saturating_mul(per);
        }
        size
    }
}

/// Visits every control sequence from period `i` on, keeping the first
/// (lexicographically smallest) strict improvement.
fn search(
    ctx: &Period<'_>,
    i: usize,
    stores: &[f64],
    spent: f64,
    prefix: &mut Vec<Vec<f64>>,
    best: &mut Option<(f64, Vec<Vec<f64>>)>,
) {
    if i == ctx.sc.n_periods {
        let better = match best {
            None => true,
            Some((b, _)) => spent < *b - 1e-12 * (1.0 + b.abs()),
        };
        if better {
            *best = Some((spent, prefix.clone()));
        }
        return;
    }
    for u in ctx.controls(i, stores) {
        let (cost, next) = ctx.step(i, stores, &u);
        prefix.push(u);
        search(ctx, i + 1, &next, spent + cost, prefix, best);
        prefix.pop();
    }
}

/// Optimal cost over every lattice control sequence of a deterministic model.
pub fn brute_force_optimum(
    scenario: &Scenario,
    model: Model,
    options: &OracleOptions,
) -> Result<OracleResult> {
    if model.is_stochastic() {
        return Err(Error::Applicability(
            "use brute_force_stochastic for random inflows".into(),
        ));
    }
    model.check_applicable(
        scenario,
        &crate::SolveOptions {
            allow_high_dimension: true,
            ..Default::default()
        },
    )?;
    let sc = scenario.prepare()?;
    let refine = options.refinement.unwrap_or(model.default_refinement()).max(1) as f64;
    let caps: Vec<f64> = sc.reservoirs.iter().map(|r| r.capacity).collect();
    let mut steps: Vec<f64> = sc
        .reservoirs
        .iter()
        .map(|r| r.capacity / (r.level_count - 1) as f64 / refine)
        .collect();
    if model == Model::Aggregate {
        let finest = steps.iter().cloned().fold(f64::INFINITY, f64::min);
        steps = vec![finest; steps.len()];
    }
    let ctx = Period {
        sc: &sc,
        model,
        steps,
        caps,
    };
    let size = ctx.size_bound();
    if size > options.budget {
        return Err(Error::BudgetExceeded {
            size,
            budget: options.budget,
        });
    }
    let start = sc.initial_stores();
    let first = ctx.controls(0, &start);
    let branches: Vec<Option<(f64, Vec<Vec<f64>>)>> = first
        .into_par_iter()
        .map(|u| {
            let (cost, next) = ctx.step(0, &start, &u);
            let mut prefix = vec![u];
            let mut best = None;
            search(&ctx, 1, &next, cost, &mut prefix, &mut best);
            best
        })
        .collect();
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for (cost, seq) in branches.into_iter().flatten() {
        let better = match &best {
            None => true,
            Some((b, _)) => cost < *b - 1e-12 * (1.0 + b.abs()),
        };
        if better {
            best = Some((cost, seq));
        }
    }
    let (cost, controls) = best.expect("at least one control sequence");
    Ok(OracleResult { cost, controls })
}

fn upper_quantile(dist: &InflowDistribution, level: f64) -> f64 {
    let mut acc = 0.0;
    let mut k = 0;
    while k + 1 < dist.support.len() {
        acc += dist.weights[k];
        if acc + 1e-12 >= level {
            break;
        }
        k += 1;
    }
    dist.support[k]
}

struct Tree<'a> {
    sc: &'a Scenario,
    step: f64,
    cap: f64,
    level: f64,
    /// Per-period distribution given the previous bin (`None` for
    /// independent inflows).
    dist: Box<dyn Fn(usize, Option<usize>) -> InflowDistribution + 'a>,
    markov: bool,
}

impl Tree<'_> {
    /// Minimal expected cost from node (period `i`, store `q`, last bin).
    fn node(&self, i: usize, q: f64, prev: Option<usize>) -> f64 {
        if i == self.sc.n_periods {
            return 0.0;
        }
        let dist = (self.dist)(i, prev);
        let r = self.sc.demands[i];
        let p = self.sc.costs.deficit_penalty;
        let bound = upper_quantile(&dist, self.level);
        let mut best = f64::INFINITY;
        for u in candidates(r.min(q + bound), self.step) {
            let mut expected = 0.0;
            for (k, (&x, &w)) in dist.support.iter().zip(&dist.weights).enumerate() {
                if w == 0.0 {
                    continue;
                }
                let water = q + x - u;
                let mut cost = thermal_bill(self.sc, i, u);
                let next = if water < 0.0 {
                    cost += p * -water;
                    0.0
                } else if water > self.cap {
                    self.cap
                } else {
                    water
                };
                let child = if self.markov { Some(k) } else { None };
                expected += w * (cost + self.node(i + 1, next, child));
            }
            if best.is_infinite() || expected < best - 1e-12 * (1.0 + best.abs()) {
                best = expected;
            }
        }
        best
    }

    fn size_bound(&self) -> u128 {
        let mut size: u128 = 1;
        for i in 0..self.sc.n_periods {
            let d = (self.dist)(i, Some(0));
            let ctrl = count_upper(self.sc.demands[i], self.step);
            size = size.saturating_mul(ctrl * d.support.len() as u128);
        }
        size
    }
}

/// Inflow distribution for a period, given the previous bin under a chain.
type RowFn = Box<dyn Fn(usize, Option<usize>) -> InflowDistribution>;

/// Optimal expected cost over nonanticipative policies on the inflow tree.
///
/// Each period's release is fixed before that period's inflow is drawn.
pub fn brute_force_stochastic(scenario: &Scenario, options: &OracleOptions) -> Result<f64> {
    let model = match scenario.flow {
        FlowModel::Markov(_) => Model::Markov,
        FlowModel::Independent(_) | FlowModel::IndependentParametric(_) => Model::Independent,
        FlowModel::Deterministic(_) => Model::Single,
    };
    model.check_applicable(scenario, &crate::SolveOptions::default())?;
    let sc = scenario.prepare()?;
    let res = &sc.reservoirs[0];
    let step = res.capacity / (res.level_count - 1) as f64 / options.refinement.unwrap_or(1).max(1) as f64;
    let (dist, level, markov, initial): (RowFn, f64, bool, Vec<f64>) = match &sc.flow {
        FlowModel::Independent(flow) => {
            let f = flow.clone();
            (
                Box::new(move |i, _| f.distributions[i].clone()),
                flow.confidence_level,
                false,
                vec![1.0],
            )
        }
        FlowModel::Markov(chain) => {
            let c = chain.clone();
            (
                Box::new(move |i, prev| InflowDistribution {
                    support: c.bins.clone(),
                    weights: c.transitions[i][prev.expect("markov node has a previous bin")].clone(),
                }),
                chain.confidence_level,
                true,
                chain.initial.clone(),
            )
        }
        FlowModel::Deterministic(flow) => {
            let f = flow.clone();
            (
                Box::new(move |i, _| InflowDistribution::point(f.inflows[0][i])),
                0.5,
                false,
                vec![1.0],
            )
        }
        FlowModel::IndependentParametric(_) => unreachable!("binned by prepare"),
    };
    let tree = Tree {
        sc: &sc,
        step,
        cap: res.capacity,
        level,
        dist,
        markov,
    };
    let size = tree.size_bound();
    if size > options.budget {
        return Err(Error::BudgetExceeded {
            size,
            budget: options.budget,
        });
    }
    let q0 = res.initial_store;
    if markov {
        let mut total = 0.0;
        for (b, w) in initial.iter().enumerate() {
            if *w > 0.0 {
                total += w * tree.node(0, q0, Some(b));
            }
        }
        Ok(total)
    } else {
        Ok(tree.node(0, q0, None))
    }
}
