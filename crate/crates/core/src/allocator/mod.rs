//! Joint offloading, transmit-power and bandwidth allocation.
//!
//! Decision variables per task: a placement (local or one edge server), a
//! number of uplink bandwidth units and a transmit power. The objective is the
//! weighted delay-plus-energy utility of [`crate::sysmodel::utility`].
//!
//! Constraints: offloaded tasks get at least one unit and a power inside the
//! device bounds, local tasks get none; total units stay within the budget;
//! each server hosts at most `floor(capacity / min_alloc)` tasks, which share
//! its capacity equally; common tasks never run on GPUs.

mod baselines;
mod exact;
mod heuristic;
mod inner;
pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sysmodel::{
    cost_local, cost_offload, utility, CostBreakdown, CostParams, ServerKind, ServerSpec, TaskSpec,
};
use crate::workload::DemandVector;

pub use baselines::{baseline_dld, baseline_gsa, baseline_mec};
pub use exact::{placement_count, solve_exact};
pub use heuristic::solve_heuristic;
pub use inner::{allocate_bandwidth, optimize_power, OffloadedTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Local,
    /// Index into the instance's server list.
    Server(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TaskDecision<T> {
    pub placement: Placement,
    pub units: u32,
    /// Transmit power in watts; meaningless for local tasks.
    pub power: T,
}

impl<T: Real> TaskDecision<T> {
    pub fn local() -> Self {
        Self {
            placement: Placement::Local,
            units: 0,
            power: T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Allocation<T> {
    pub decisions: Vec<TaskDecision<T>>,
}

impl<T: Real> Allocation<T> {
    pub fn all_local(n: usize) -> Self {
        Self {
            decisions: vec![TaskDecision::local(); n],
        }
    }

    pub fn placements(&self) -> Vec<Placement> {
        self.decisions.iter().map(|d| d.placement).collect()
    }

    pub fn units_used(&self) -> u64 {
        self.decisions.iter().map(|d| d.units as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ProblemInstance<T> {
    pub tasks: Vec<TaskSpec<T>>,
    pub servers: Vec<ServerSpec<T>>,
    pub cost_params: CostParams<T>,
    pub bandwidth_units_total: u32,
    /// Forecast background demand, subtracted before allocation.
    pub reservation: DemandVector<T>,
}

impl<T: Real> ProblemInstance<T> {
    pub fn new(
        tasks: Vec<TaskSpec<T>>,
        servers: Vec<ServerSpec<T>>,
        cost_params: CostParams<T>,
        bandwidth_units_total: u32,
    ) -> Self {
        Self {
            tasks,
            servers,
            cost_params,
            bandwidth_units_total,
            reservation: DemandVector::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cost_params.validate()?;
        for t in &self.tasks {
            t.validate()?;
        }
        for s in &self.servers {
            s.validate()?;
        }
        if !self.reservation.is_valid() {
            return Err(Error::precondition(
                "reservation must be finite and non-negative",
            ));
        }
        Ok(())
    }

    /// Servers and bandwidth left after subtracting the reservation.
    pub fn reserved(&self) -> Reserved<T> {
        reserve_capacity(&self.servers, self.bandwidth_units_total, &self.reservation)
    }
}

/// Resources available to the allocator once background demand is held back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Reserved<T> {
    pub servers: Vec<ServerSpec<T>>,
    pub bandwidth_units_total: u32,
    /// Some demand could not be honoured because of the floors.
    pub over_demand: bool,
}

/// Spreads CPU and GPU demand evenly over servers of that kind (each floored
/// at its `min_alloc`) and removes `round(bandwidth_demand)` units from the
/// budget (floored at one unit).
pub fn reserve_capacity<T: Real>(
    servers: &[ServerSpec<T>],
    bandwidth_total: u32,
    demand: &DemandVector<T>,
) -> Reserved<T> {
    let mut over_demand = false;
    let count = |kind| servers.iter().filter(|s| s.kind == kind).count();
    let per_server = |kind, total: T| {
        let n = count(kind);
        if n == 0 {
            T::zero()
        } else {
            total.max(T::zero()) / T::from_count(n)
        }
    };
    let cpu_each = per_server(ServerKind::Cpu, demand.cpu_demand);
    let gpu_each = per_server(ServerKind::Gpu, demand.gpu_demand);
    let servers = servers
        .iter()
        .map(|s| {
            let take = match s.kind {
                ServerKind::Cpu => cpu_each,
                ServerKind::Gpu => gpu_each,
            };
            let left = s.capacity - take;
            if left < s.min_alloc {
                over_demand = true;
            }
            ServerSpec {
                capacity: left.max(s.min_alloc),
                ..s.clone()
            }
        })
        .collect();

    let want = demand
        .bandwidth_demand
        .max(T::zero())
        .round()
        .to_f64_lossy();
    let want = if want.is_finite() {
        want.min(u32::MAX as f64) as u32
    } else {
        0
    };
    let bandwidth_units_total = if want == 0 {
        bandwidth_total
    } else {
        if want >= bandwidth_total {
            over_demand = true;
        }
        bandwidth_total
            .saturating_sub(want)
            .max(1)
            .min(bandwidth_total)
    };
    Reserved {
        servers,
        bandwidth_units_total,
        over_demand,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Heuristic,
    Dld,
    Mec,
    Gsa,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Heuristic => "heuristic",
            Method::Dld => "dld",
            Method::Mec => "mec",
            Method::Gsa => "gsa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Largest placement count `(servers + 1)^tasks` the exact solver accepts.
    pub exact_limit: u64,
    /// Gauss–Seidel stopping threshold on objective improvement.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Local-search iteration cap for the heuristic.
    pub max_iters: usize,
    /// Absolute tolerance of the transmit-power search, watts.
    pub power_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            exact_limit: 100_000,
            tol: 1e-6,
            max_sweeps: 50,
            max_iters: 1000,
            power_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, message: &str| {
            Err(Error::Config {
                path: format!("solver.{path}"),
                message: message.into(),
            })
        };
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return err("tol", "must be finite and >= 0");
        }
        if !(self.power_tol > 0.0 && self.power_tol.is_finite()) {
            return err("power_tol", "must be finite and > 0");
        }
        if self.max_sweeps == 0 {
            return err("max_sweeps", "must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Evaluation<T> {
    pub objective: T,
    pub per_task_costs: Vec<CostBreakdown<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SolveResult<T> {
    pub method: Method,
    pub allocation: Allocation<T>,
    pub objective: T,
    pub per_task_costs: Vec<CostBreakdown<T>>,
    /// Local-search moves or Gauss–Seidel sweeps performed; placements
    /// visited for the exact solver.
    pub iterations: usize,
    /// Objective after construction and after every accepted improvement.
    pub trace: Vec<T>,
    pub over_demand: bool,
}

fn hosted_counts<T>(allocation: &Allocation<T>, n_servers: usize) -> Vec<usize> {
    let mut hosted = vec![0usize; n_servers];
    for d in &allocation.decisions {
        if let Placement::Server(j) = d.placement {
            if j < n_servers {
                hosted[j] += 1;
            }
        }
    }
    hosted
}

/// Checks every allocation constraint against the reserved resources.
pub fn validate_allocation<T: Real>(
    instance: &ProblemInstance<T>,
    allocation: &Allocation<T>,
) -> Result<()> {
    validate_against(instance, &instance.reserved(), allocation)
}

fn validate_against<T: Real>(
    instance: &ProblemInstance<T>,
    reserved: &Reserved<T>,
    allocation: &Allocation<T>,
) -> Result<()> {
    if allocation.decisions.len() != instance.tasks.len() {
        return Err(Error::LengthMismatch {
            left: instance.tasks.len(),
            right: allocation.decisions.len(),
        });
    }
    let params = &instance.cost_params;
    let servers = &reserved.servers;
    for (task, d) in instance.tasks.iter().zip(&allocation.decisions) {
        match d.placement {
            Placement::Local => {
                if d.units != 0 {
                    return Err(Error::infeasible(
                        task.id,
                        "local task holds bandwidth units",
                    ));
                }
            }
            Placement::Server(j) => {
                let Some(server) = servers.get(j) else {
                    return Err(Error::infeasible(
                        task.id,
                        format!("unknown server index {j}"),
                    ));
                };
                if !server.accepts(task) {
                    return Err(Error::infeasible(
                        task.id,
                        format!("common task placed on GPU server {}", server.id),
                    ));
                }
                if d.units == 0 {
                    return Err(Error::infeasible(
                        task.id,
                        "offloaded task has no bandwidth units",
                    ));
                }
                if !params.power_in_bounds(d.power) {
                    return Err(Error::infeasible(
                        task.id,
                        format!(
                            "power {} W outside [{}, {}]",
                            d.power, params.power_min, params.power_max
                        ),
                    ));
                }
            }
        }
    }
    let used = allocation.units_used();
    if used > reserved.bandwidth_units_total as u64 {
        return Err(Error::precondition(format!(
            "bandwidth budget exceeded: {used} units used of {}",
            reserved.bandwidth_units_total
        )));
    }
    for (server, hosted) in servers.iter().zip(hosted_counts(allocation, servers.len())) {
        if hosted > server.slots() {
            return Err(Error::precondition(format!(
                "server {} hosts {hosted} tasks but has {} slots",
                server.id,
                server.slots()
            )));
        }
    }
    Ok(())
}

/// Objective and per-task costs of a complete allocation.
pub fn evaluate<T: Real>(
    instance: &ProblemInstance<T>,
    allocation: &Allocation<T>,
) -> Result<Evaluation<T>> {
    evaluate_against(instance, &instance.reserved(), allocation)
}

fn evaluate_against<T: Real>(
    instance: &ProblemInstance<T>,
    reserved: &Reserved<T>,
    allocation: &Allocation<T>,
) -> Result<Evaluation<T>> {
    validate_against(instance, reserved, allocation)?;
    let servers = &reserved.servers;
    let hosted = hosted_counts(allocation, servers.len());
    let params = &instance.cost_params;
    let per_task_costs = instance
        .tasks
        .iter()
        .zip(&allocation.decisions)
        .map(|(task, d)| match d.placement {
            Placement::Local => Ok(cost_local(task, params)),
            Placement::Server(j) => {
                let s = &servers[j];
                let c = cost_offload(task, s, s.share(hosted[j]), d.units, d.power, params)?;
                if !c.feasible {
                    return Err(Error::infeasible(
                        task.id,
                        format!("cannot run on server {}", s.id),
                    ));
                }
                Ok(c)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let objective = utility(&instance.tasks, &per_task_costs)?;
    Ok(Evaluation {
        objective,
        per_task_costs,
    })
}

#[cfg(test)]
pub(crate) mod tests;
