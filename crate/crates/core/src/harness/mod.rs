//! Experiment orchestration: workload → forecast → reservation → every
//! configured allocator on the same instance → metrics and reports.

mod config;
pub mod instances;
mod report;

use std::collections::BTreeMap;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{
    baseline_dld, baseline_gsa, baseline_mec, placement_count, solve_exact, solve_heuristic,
    validate_allocation, Method, ProblemInstance, SolveResult,
};
use crate::error::{Error, Result};
use crate::forecast::{init_params, predict_demand, train};
use crate::sysmodel::{CostBreakdown, TaskSpec};
use crate::workload::{
    build_dataset, extract_features, generate_tasks, generate_trace, DemandVector, DEMAND_DIM,
    FEATURE_COUNT,
};

pub use config::{load_config, ExperimentConfig, MethodSpec};
pub use report::{emit_report, PER_TASK_HEADER, SUMMARY_HEADER};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Fraction of tasks whose execution time meets their deadline; 1.0 for no
/// tasks.
pub fn completion_rate(tasks: &[TaskSpec<f64>], costs: &[CostBreakdown<f64>]) -> Result<f64> {
    if tasks.len() != costs.len() {
        return Err(Error::LengthMismatch {
            left: tasks.len(),
            right: costs.len(),
        });
    }
    if tasks.is_empty() {
        return Ok(1.0);
    }
    let met = tasks
        .iter()
        .zip(costs)
        .filter(|(t, c)| c.feasible && c.tet <= t.deadline)
        .count();
    Ok(met as f64 / tasks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: usize,
    pub tet: f64,
    pub energy: f64,
    pub deadline: f64,
    pub met_deadline: bool,
    pub alpha: f64,
    pub beta: f64,
}

/// One method on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub seed: u64,
    pub method: MethodSpec,
    /// Solver that actually ran (differs from `method` only for `ours`).
    pub solver: Method,
    pub objective: f64,
    pub completion_rate: f64,
    pub iterations: usize,
    pub tasks: Vec<TaskRow>,
}

impl MethodRun {
    pub fn mean_tet(&self) -> f64 {
        mean(self.tasks.iter().map(|t| t.tet))
    }

    pub fn mean_energy(&self) -> f64 {
        mean(self.tasks.iter().map(|t| t.energy))
    }
}

/// Forecasting stage outcome for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub seed: u64,
    pub final_train_loss: f64,
    pub predicted_demand: DemandVector<f64>,
    pub over_demand: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub method: Option<MethodSpec>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub p95: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
                p95: f64::NAN,
            };
        }
        Self {
            mean: mean(values.iter().copied()),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            p95: percentile(values, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: MethodSpec,
    pub runs: usize,
    pub tet: Spread,
    pub energy: Spread,
    pub mean_completion_rate: f64,
    pub mean_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    /// Ordered by (seed, method).
    pub runs: Vec<MethodRun>,
    pub seed_info: Vec<SeedInfo>,
    pub failures: Vec<Failure>,
    pub aggregates: Vec<MethodAggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
}

impl MetricsReport {
    pub fn runs_for(&self, method: MethodSpec) -> impl Iterator<Item = &MethodRun> {
        self.runs.iter().filter(move |r| r.method == method)
    }

    pub fn run(&self, seed: u64, method: MethodSpec) -> Option<&MethodRun> {
        self.runs
            .iter()
            .find(|r| r.seed == seed && r.method == method)
    }

    pub fn aggregate(&self, method: MethodSpec) -> Option<&MethodAggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Nearest-rank percentile.
fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Aggregates recomputed from per-task rows, ordered by method.
pub fn aggregate(runs: &[MethodRun]) -> Vec<MethodAggregate> {
    let mut by_method: BTreeMap<MethodSpec, Vec<&MethodRun>> = BTreeMap::new();
    for r in runs {
        by_method.entry(r.method).or_default().push(r);
    }
    by_method
        .into_iter()
        .map(|(method, runs)| {
            let tets: Vec<f64> = runs
                .iter()
                .flat_map(|r| r.tasks.iter().map(|t| t.tet))
                .collect();
            let energies: Vec<f64> = runs
                .iter()
                .flat_map(|r| r.tasks.iter().map(|t| t.energy))
                .collect();
            MethodAggregate {
                method,
                runs: runs.len(),
                tet: Spread::of(&tets),
                energy: Spread::of(&energies),
                mean_completion_rate: mean(runs.iter().map(|r| r.completion_rate)),
                mean_objective: mean(runs.iter().map(|r| r.objective)),
            }
        })
        .collect()
}

/// Everything one seed produces before the solvers run.
pub struct SeedScenario {
    pub instance: ProblemInstance<f64>,
    pub info: SeedInfo,
}

/// Generates the trace and tasks for `seed`, trains the forecaster and
/// reserves the predicted next-step demand.
pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedScenario> {
    let mut scenario = cfg.scenario.clone();
    scenario.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trace = generate_trace::<f64, _>(&scenario, &mut rng)?;
    let tasks = generate_tasks::<f64, _>(&scenario, &cfg.deadline_rule(), &mut rng);
    let k = scenario.window_k;
    let dataset = build_dataset(&trace, k, &scenario)?;

    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.train.seed.wrapping_add(seed);
    let init = init_params::<f64>(
        &train_cfg.layer_sizes(FEATURE_COUNT, DEMAND_DIM),
        train_cfg.seed,
    )?;
    let (net, history) = train(&init, &dataset, &train_cfg)?;
    let latest = extract_features(&trace, trace.len() - 1, k)?;
    let demand = predict_demand(&net, &latest)?;

    let instance = ProblemInstance {
        tasks,
        servers: scenario.servers.build(),
        cost_params: scenario.cost.clone(),
        bandwidth_units_total: scenario.bandwidth_units_total,
        reservation: demand,
    };
    let over_demand = instance.reserved().over_demand;
    Ok(SeedScenario {
        instance,
        info: SeedInfo {
            seed,
            final_train_loss: history.last().copied().unwrap_or(f64::NAN),
            predicted_demand: demand,
            over_demand,
        },
    })
}

/// Runs one method on an instance and checks the allocation.
pub fn solve_with(
    method: MethodSpec,
    instance: &ProblemInstance<f64>,
    cfg: &ExperimentConfig,
) -> Result<SolveResult<f64>> {
    let solver = &cfg.solver;
    let result = match method {
        MethodSpec::Ours => {
            let count = placement_count(instance.tasks.len(), instance.servers.len());
            if count <= solver.exact_limit as f64 {
                solve_exact(instance, solver)?
            } else {
                solve_heuristic(instance, solver)?
            }
        }
        MethodSpec::Exact => solve_exact(instance, solver)?,
        MethodSpec::Heuristic => solve_heuristic(instance, solver)?,
        MethodSpec::Dld => baseline_dld(instance)?,
        MethodSpec::Mec => baseline_mec(instance)?,
        MethodSpec::Gsa => baseline_gsa(instance, solver)?,
    };
    validate_allocation(instance, &result.allocation)?;
    Ok(result)
}

fn method_run(
    seed: u64,
    method: MethodSpec,
    instance: &ProblemInstance<f64>,
    r: &SolveResult<f64>,
) -> Result<MethodRun> {
    let tasks = instance
        .tasks
        .iter()
        .zip(&r.per_task_costs)
        .map(|(t, c)| TaskRow {
            task_id: t.id,
            tet: c.tet,
            energy: c.energy,
            deadline: t.deadline,
            met_deadline: c.tet <= t.deadline,
            alpha: t.alpha,
            beta: t.beta,
        })
        .collect();
    Ok(MethodRun {
        seed,
        method,
        solver: r.method,
        objective: r.objective,
        completion_rate: completion_rate(&instance.tasks, &r.per_task_costs)?,
        iterations: r.iterations,
        tasks,
    })
}

struct SeedOutcome {
    info: Option<SeedInfo>,
    runs: Vec<MethodRun>,
    failures: Vec<Failure>,
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> SeedOutcome {
    let mut out = SeedOutcome {
        info: None,
        runs: Vec::new(),
        failures: Vec::new(),
    };
    let scenario = match prepare_seed(cfg, seed) {
        Ok(s) => s,
        Err(e) => {
            out.failures.push(Failure {
                seed,
                method: None,
                message: e.to_string(),
            });
            return out;
        }
    };
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    for method in methods {
        match solve_with(method, &scenario.instance, cfg)
            .and_then(|r| method_run(seed, method, &scenario.instance, &r))
        {
            Ok(run) => out.runs.push(run),
            Err(e) => out.failures.push(Failure {
                seed,
                method: Some(method),
                message: e.to_string(),
            }),
        }
    }
    out.info = Some(scenario.info);
    out
}

/// Runs the full experiment. Seeds are processed in parallel; the report is
/// assembled in (seed, method, task) order so the output does not depend on
/// scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(seeds.len())
        .max(1);
    let mut outcomes: Vec<(u64, SeedOutcome)> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let seeds = &seeds;
                scope.spawn(move || {
                    seeds
                        .iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|&s| (s, run_seed(cfg, s)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("seed worker panicked"))
            .collect()
    });
    outcomes.sort_by_key(|(s, _)| *s);

    let mut runs = Vec::new();
    let mut seed_info = Vec::new();
    let mut failures = Vec::new();
    for (_, o) in outcomes {
        runs.extend(o.runs);
        seed_info.extend(o.info);
        failures.extend(o.failures);
    }
    let aggregates = aggregate(&runs);
    let generated_at_unix = cfg.timestamp.then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    Ok(MetricsReport {
        format_version: REPORT_FORMAT_VERSION,
        config_hash: cfg.hash(),
        seeds,
        config: cfg.clone(),
        runs,
        seed_info,
        failures,
        aggregates,
        generated_at_unix,
    })
}

/// Runs one experiment per value of a scalar config key.
pub fn sweep(
    cfg: &ExperimentConfig,
    key: &str,
    values: &[String],
) -> Result<Vec<(String, MetricsReport)>> {
    values
        .iter()
        .map(|v| {
            let variant = cfg.with_override(key, v)?;
            Ok((v.clone(), run_experiment(&variant)?))
        })
        .collect()
}
