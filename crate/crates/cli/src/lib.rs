//! Command implementations behind the `hydrodp` binary.
//!
//! Every command returns a [`CliError`] carrying the process exit code on
//! failure: 0 success, 1 validation, 2 parse, 3 budget or applicability,
//! 4 oracle mismatch.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use hydrodp::grid::{Grid, PolicyTable, ValueTable};
use hydrodp::io::{format_number, parse_scenario};
use hydrodp::oracle::{brute_force_optimum, brute_force_stochastic, OracleOptions};
use hydrodp::scenario::FlowModel;
use hydrodp::sim::{assumed_inflows, rollout, sample_path, InflowPath, RolloutTrace};
use hydrodp::{solve, Error, Model, Scenario, Solution, SolveOptions, StageStats};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

/// Oracle and solver must agree to this absolute tolerance.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Validation(_) | Error::Domain(_) => EXIT_VALIDATION,
            Error::Applicability(_) | Error::Dimensionality { .. } | Error::BudgetExceeded { .. } => {
                EXIT_BUDGET
            }
        };
        CliError::new(code, e.to_string())
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::new(EXIT_VALIDATION, format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::new(EXIT_PARSE, format!("{}: {e}", path.display()))
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let scenario =
        parse_scenario(&text).map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    let violations = hydrodp::validate(&scenario);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(CliError::new(
            EXIT_VALIDATION,
            format!("{}: invalid scenario\n{}", path.display(), lines.join("\n")),
        ));
    }
    Ok(scenario)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub model: String,
    pub n_periods: usize,
    pub states: usize,
    pub bins: usize,
    pub width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    pub files: Vec<ManifestEntry>,
}

struct Bundle {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Bundle {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for row in rows {
            w.write_record(row).expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        self.write(name, &bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.files.push(ManifestEntry {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn finish(self, mut manifest: Manifest) -> Result<(), CliError> {
        manifest.files = self.files;
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

fn state_columns(solution: &Solution) -> Vec<String> {
    let mut cols: Vec<String> = (1..=solution.grid.dims()).map(|j| format!("q{j}")).collect();
    if solution.initial_bins.is_some() {
        cols.push("prev_inflow".into());
    }
    cols
}

fn state_cells(solution: &Solution, bins: &[f64], entry: usize) -> Vec<String> {
    let d = solution.grid.state_count();
    let mut cells: Vec<String> = solution
        .grid
        .stores(entry % d)
        .into_iter()
        .map(format_number)
        .collect();
    if solution.initial_bins.is_some() {
        cells.push(format_number(bins[entry / d]));
    }
    cells
}

fn markov_bins(scenario: &Scenario) -> Result<Vec<f64>, CliError> {
    let prepared = scenario.prepare()?;
    Ok(match &prepared.flow {
        FlowModel::Markov(chain) => chain.bins.clone(),
        _ => Vec::new(),
    })
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub f1: f64,
    pub solution: Solution,
}

fn metrics_rows(solution: &Solution, f1: f64) -> Vec<Vec<String>> {
    let mut rows = vec![
        vec!["model".to_string(), solution.model.name().to_string()],
        vec!["f1".into(), format_number(f1)],
    ];
    if let Some(per) = solution.minimizations_per_stage() {
        rows.push(vec!["minimizations_per_stage".into(), per.to_string()]);
    }
    let total: usize = solution.stats.iter().map(|s| s.minimizations).sum();
    rows.push(vec!["minimizations_total".into(), total.to_string()]);
    rows.push(vec![
        "off_grid_lookups".into(),
        solution.off_grid_lookups().to_string(),
    ]);
    rows.push(vec!["wall_ms".into(), format_number(solution.wall_ms)]);
    for (i, StageStats { minimizations, .. }) in solution.stats.iter().enumerate() {
        rows.push(vec![
            format!("minimizations_stage_{:03}", i + 1),
            minimizations.to_string(),
        ]);
    }
    rows
}

/// Solves and writes value, policy and metrics tables plus a manifest.
pub fn cmd_solve(
    scenario_path: &Path,
    model: Model,
    out_dir: &Path,
    options: &SolveOptions,
) -> Result<SolveReport, CliError> {
    let scenario = load_scenario(scenario_path)?;
    let solution = solve(&scenario, model, options)?;
    let f1 = solution.initial_value()?;
    write_solution(&scenario, &solution, f1, out_dir)?;
    Ok(SolveReport { f1, solution })
}

fn write_solution(scenario: &Scenario, solution: &Solution, f1: f64, out_dir: &Path) -> Result<(), CliError> {
    let bins = markov_bins(scenario)?;
    let mut bundle = Bundle::create(out_dir)?;
    let cols = state_columns(solution);
    for (i, (values, policy)) in solution.values.iter().zip(&solution.policies).enumerate() {
        let mut header = cols.clone();
        header.push("value".into());
        let rows: Vec<Vec<String>> = values
            .values
            .iter()
            .enumerate()
            .map(|(e, v)| {
                let mut r = state_cells(solution, &bins, e);
                r.push(format_number(*v));
                r
            })
            .collect();
        bundle.write_csv(&format!("value_{:03}.csv", i + 1), &header, &rows)?;

        let mut header = cols.clone();
        header.extend((1..=policy.width).map(|k| format!("u{k}")));
        let rows: Vec<Vec<String>> = (0..policy.entries())
            .map(|e| {
                let mut r = state_cells(solution, &bins, e);
                r.extend(policy.control(e).iter().map(|u| format_number(*u)));
                r
            })
            .collect();
        bundle.write_csv(&format!("policy_{:03}.csv", i + 1), &header, &rows)?;
    }
    bundle.write_csv(
        "metrics.csv",
        &["metric".into(), "value".into()],
        &metrics_rows(solution, f1),
    )?;
    bundle.finish(Manifest {
        kind: "solution".into(),
        model: solution.model.name().into(),
        n_periods: solution.n_periods(),
        states: solution.grid.state_count(),
        bins: solution.values[0].bins,
        width: solution.policies[0].width,
        f1: Some(f1),
        files: Vec::new(),
    })
}

fn read_table(path: &Path, skip: usize, width: usize, rows: usize) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::with_capacity(rows * width);
    let mut count = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != skip + width {
            return Err(CliError::new(
                EXIT_BUDGET,
                format!(
                    "{}: expected {} columns, found {}",
                    path.display(),
                    skip + width,
                    record.len()
                ),
            ));
        }
        for cell in record.iter().skip(skip) {
            out.push(cell.trim().parse::<f64>().map_err(|e| {
                CliError::new(
                    EXIT_PARSE,
                    format!("{}: bad number '{cell}': {e}", path.display()),
                )
            })?);
        }
        count += 1;
    }
    if count != rows {
        return Err(CliError::new(
            EXIT_BUDGET,
            format!(
                "{}: {count} rows but the scenario has {rows} states",
                path.display()
            ),
        ));
    }
    Ok(out)
}

/// Loads a bundle written by [`cmd_solve`] and checks it against `scenario`.
pub fn load_solution(scenario: &Scenario, dir: &Path) -> Result<Solution, CliError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    let model: Model = manifest
        .model
        .parse()
        .map_err(|e: String| CliError::new(EXIT_PARSE, e))?;
    let prepared = scenario.prepare()?;
    let grid = Grid::for_reservoirs(&prepared.reservoirs)?;
    let bins = match &prepared.flow {
        FlowModel::Markov(chain) if model == Model::Markov => Some(chain.bins.len()),
        _ => None,
    };
    let layers = bins.unwrap_or(1);
    let mismatch = manifest.n_periods != prepared.n_periods
        || manifest.states != grid.state_count()
        || manifest.bins != layers;
    if mismatch {
        return Err(CliError::new(
            EXIT_BUDGET,
            format!(
                "policy bundle ({} periods, {} states, {} bins) does not match scenario ({} periods, {} states, {} bins)",
                manifest.n_periods,
                manifest.states,
                manifest.bins,
                prepared.n_periods,
                grid.state_count(),
                layers
            ),
        ));
    }
    let skip = grid.dims() + usize::from(bins.is_some());
    let entries = layers * grid.state_count();
    let mut values = Vec::new();
    let mut policies = Vec::new();
    for stage in 0..prepared.n_periods {
        let v = read_table(&dir.join(format!("value_{:03}.csv", stage + 1)), skip, 1, entries)?;
        let p = read_table(
            &dir.join(format!("policy_{:03}.csv", stage + 1)),
            skip,
            manifest.width,
            entries,
        )?;
        values.push(ValueTable {
            stage,
            bins: layers,
            values: v,
        });
        policies.push(PolicyTable {
            stage,
            bins: layers,
            width: manifest.width,
            controls: p,
        });
    }
    let initial_bins = match &prepared.flow {
        FlowModel::Markov(chain) if bins.is_some() => Some(chain.initial.clone()),
        _ => None,
    };
    Ok(Solution {
        model,
        stats: vec![StageStats::default(); prepared.n_periods],
        grid,
        values,
        policies,
        warnings: Vec::new(),
        initial_stores: prepared.initial_stores(),
        initial_bins,
        wall_ms: 0.0,
    })
}

/// Where simulated inflows come from.
#[derive(Debug, Clone)]
pub enum InflowSource {
    /// The scenario's own deterministic inflows.
    Assumed,
    /// A CSV of `path,period,x1..xm` rows; period 0 carries the prior inflow.
    File(PathBuf),
    Sample {
        count: usize,
        seed: u64,
    },
}

/// Reads an inflow CSV into paths, in order of first appearance.
pub fn read_inflow_csv(path: &Path, reservoirs: usize) -> Result<Vec<InflowPath>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut paths: Vec<(String, InflowPath)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != 2 + reservoirs {
            return Err(CliError::new(
                EXIT_BUDGET,
                format!(
                    "{}: expected {} columns, found {}",
                    path.display(),
                    2 + reservoirs,
                    record.len()
                ),
            ));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::new(EXIT_PARSE, format!("{}: bad number '{s}': {e}", path.display())))
        };
        let id = record[0].to_string();
        let period = parse(&record[1])? as usize;
        let xs: Vec<f64> = record.iter().skip(2).map(parse).collect::<Result<_, _>>()?;
        let idx = match paths.iter().position(|(p, _)| *p == id) {
            Some(i) => i,
            None => {
                paths.push((
                    id,
                    InflowPath {
                        prior: None,
                        inflows: Vec::new(),
                    },
                ));
                paths.len() - 1
            }
        };
        let entry = &mut paths[idx].1;
        if period == 0 {
            entry.prior = Some(xs[0]);
        } else {
            entry.inflows.push(xs);
        }
    }
    Ok(paths.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub paths: usize,
    pub mean_cost: f64,
    pub min_cost: f64,
    pub max_cost: f64,
    pub total_spill: f64,
    pub total_deficit: f64,
}

fn trace_rows(trace: &RolloutTrace) -> (Vec<String>, Vec<Vec<String>>) {
    let first = &trace.periods[0];
    let m = first.stores_before.len();
    let k = first.releases.len();
    let mut header = vec!["period".to_string()];
    header.extend((1..=m).map(|j| format!("store_before_{j}")));
    header.extend((1..=m).map(|j| format!("inflow_{j}")));
    header.extend((1..=k).map(|j| format!("release_{j}")));
    header.extend((1..=m).map(|j| format!("spill_{j}")));
    header.extend((1..=m).map(|j| format!("store_after_{j}")));
    for h in ["hydro", "thermal", "deficit", "surplus", "stage_cost"] {
        header.push(h.into());
    }
    let rows = trace
        .periods
        .iter()
        .map(|p| {
            let mut r = vec![p.period.to_string()];
            for series in [
                &p.stores_before,
                &p.inflows,
                &p.releases,
                &p.spills,
                &p.stores_after,
            ] {
                r.extend(series.iter().map(|v| format_number(*v)));
            }
            for v in [p.hydro, p.thermal, p.deficit, p.surplus, p.cost] {
                r.push(format_number(v));
            }
            r
        })
        .collect();
    (header, rows)
}

/// Plays a stored policy along realized or sampled inflow paths.
pub fn cmd_simulate(
    scenario_path: &Path,
    policy_dir: &Path,
    source: &InflowSource,
    out_dir: &Path,
) -> Result<Option<SimulationSummary>, CliError> {
    let scenario = load_scenario(scenario_path)?;
    let solution = load_solution(&scenario, policy_dir)?;
    let paths = match source {
        InflowSource::Assumed => vec![assumed_inflows(&scenario)?],
        InflowSource::File(p) => read_inflow_csv(p, scenario.reservoirs.len())?,
        InflowSource::Sample { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..*count)
                .map(|_| sample_path(&scenario, &mut rng))
                .collect::<Result<_, _>>()?
        }
    };
    let mut bundle = Bundle::create(out_dir)?;
    let mut costs = Vec::with_capacity(paths.len());
    let (mut spill, mut deficit) = (0.0, 0.0);
    for (n, path) in paths.iter().enumerate() {
        let trace = rollout(&scenario, &solution, path)?;
        let (header, rows) = trace_rows(&trace);
        bundle.write_csv(&format!("trace_{:05}.csv", n + 1), &header, &rows)?;
        costs.push(trace.total_cost);
        spill += trace.total_spill();
        deficit += trace.total_deficit();
    }
    let header: Vec<String> = [
        "paths",
        "mean_cost",
        "min_cost",
        "max_cost",
        "total_spill",
        "total_deficit",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let summary = (!costs.is_empty()).then(|| SimulationSummary {
        paths: costs.len(),
        mean_cost: costs.iter().sum::<f64>() / costs.len() as f64,
        min_cost: costs.iter().cloned().fold(f64::INFINITY, f64::min),
        max_cost: costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        total_spill: spill,
        total_deficit: deficit,
    });
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.paths.to_string(),
                format_number(s.mean_cost),
                format_number(s.min_cost),
                format_number(s.max_cost),
                format_number(s.total_spill),
                format_number(s.total_deficit),
            ]
        })
        .collect();
    bundle.write_csv("summary.csv", &header, &rows)?;
    bundle.finish(Manifest {
        kind: "simulation".into(),
        model: solution.model.name().into(),
        n_periods: solution.n_periods(),
        states: solution.grid.state_count(),
        bins: solution.values[0].bins,
        width: solution.policies[0].width,
        f1: None,
        files: Vec::new(),
    })?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompareRow {
    Solved {
        model: Model,
        f1: f64,
        minimizations_per_stage: usize,
        wall_ms: f64,
    },
    Skipped {
        model: Model,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub exact: CompareRow,
    pub aggregate: CompareRow,
    /// `(aggregate - exact) / exact`, when the exact model ran.
    pub relative_gap: Option<f64>,
}

fn relative_gap(aggregate: f64, exact: f64) -> f64 {
    if exact == 0.0 {
        if aggregate.abs() <= ORACLE_TOLERANCE {
            0.0
        } else {
            f64::INFINITY * aggregate.signum()
        }
    } else {
        (aggregate - exact) / exact.abs()
    }
}

fn solved_row(model: Model, s: &Solution) -> Result<CompareRow, CliError> {
    Ok(CompareRow::Solved {
        model,
        f1: s.initial_value()?,
        minimizations_per_stage: s.minimizations_per_stage().unwrap_or(0),
        wall_ms: s.wall_ms,
    })
}

/// Exact relaxed multi-reservoir model against the aggregate heuristic.
pub fn compare(scenario: &Scenario, options: &SolveOptions) -> Result<Comparison, CliError> {
    let agg = solve(scenario, Model::Aggregate, options)?;
    let aggregate = solved_row(Model::Aggregate, &agg)?;
    let exact = match solve(scenario, Model::MultiPenalty, options) {
        Ok(s) => solved_row(Model::MultiPenalty, &s)?,
        Err(Error::Dimensionality { .. }) => CompareRow::Skipped {
            model: Model::MultiPenalty,
            reason: "skipped: dimensionality".into(),
        },
        Err(e) => return Err(e.into()),
    };
    let gap = match (&exact, &aggregate) {
        (CompareRow::Solved { f1: e, .. }, CompareRow::Solved { f1: a, .. }) => Some(relative_gap(*a, *e)),
        _ => None,
    };
    Ok(Comparison {
        exact,
        aggregate,
        relative_gap: gap,
    })
}

pub fn comparison_rows(c: &Comparison) -> (Vec<String>, Vec<Vec<String>>) {
    let header = [
        "model",
        "f_1",
        "minimizations_per_stage",
        "wall_ms",
        "relative_gap",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let row = |r: &CompareRow, gap: Option<f64>| match r {
        CompareRow::Solved {
            model,
            f1,
            minimizations_per_stage,
            wall_ms,
        } => vec![
            model.name().to_string(),
            format_number(*f1),
            minimizations_per_stage.to_string(),
            format_number(*wall_ms),
            gap.map(format_number).unwrap_or_default(),
        ],
        CompareRow::Skipped { model, reason } => {
            vec![
                model.name().to_string(),
                reason.clone(),
                String::new(),
                String::new(),
                String::new(),
            ]
        }
    };
    let rows = vec![row(&c.exact, None), row(&c.aggregate, c.relative_gap)];
    (header, rows)
}

/// Runs [`compare`] and writes `compare.csv` into `out_dir`.
pub fn cmd_compare(
    scenario_path: &Path,
    out_dir: &Path,
    options: &SolveOptions,
) -> Result<Comparison, CliError> {
    let scenario = load_scenario(scenario_path)?;
    let c = compare(&scenario, options)?;
    let (header, rows) = comparison_rows(&c);
    let mut bundle = Bundle::create(out_dir)?;
    bundle.write_csv("compare.csv", &header, &rows)?;
    bundle.finish(Manifest {
        kind: "comparison".into(),
        model: "multi-penalty,aggregate".into(),
        n_periods: scenario.n_periods,
        states: 0,
        bins: 1,
        width: 1,
        f1: None,
        files: Vec::new(),
    })?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub dp_value: f64,
    pub oracle_value: f64,
}

impl OracleReport {
    pub fn difference(&self) -> f64 {
        (self.dp_value - self.oracle_value).abs()
    }

    pub fn agrees(&self) -> bool {
        self.difference() <= ORACLE_TOLERANCE
    }
}

/// Solver value against exhaustive enumeration on the same control lattice.
pub fn oracle_check(
    scenario: &Scenario,
    model: Model,
    refinement: Option<usize>,
    budget: u128,
) -> Result<OracleReport, CliError> {
    let opts = OracleOptions { refinement, budget };
    let oracle_value = if model.is_stochastic() {
        model.check_applicable(scenario, &SolveOptions::default())?;
        brute_force_stochastic(scenario, &opts)?
    } else {
        brute_force_optimum(scenario, model, &opts)?.cost
    };
    let solution = solve(
        scenario,
        model,
        &SolveOptions {
            refinement,
            allow_high_dimension: true,
        },
    )?;
    Ok(OracleReport {
        dp_value: solution.initial_value()?,
        oracle_value,
    })
}

pub fn cmd_oracle(
    scenario_path: &Path,
    model: Model,
    refinement: Option<usize>,
    budget: u128,
) -> Result<OracleReport, CliError> {
    let scenario = load_scenario(scenario_path)?;
    oracle_check(&scenario, model, refinement, budget)
}
