//! Continuous and integer subproblems for a fixed placement: transmit power
//! per task and the split of bandwidth units.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::search::golden_section_min;
use crate::sysmodel::{
    cost_local, cost_offload, spectral_efficiency, CostParams, ServerSpec, TaskSpec,
};

use super::Method;
use super::{
    evaluate_against, Allocation, Placement, ProblemInstance, Reserved, SolveResult, SolverConfig,
    TaskDecision,
};

/// Transmit power minimizing `α·(t_tx + t_exec) + β·p·t_tx` over the device
/// power bounds.
///
/// With `t_tx = bits / (units·w0·log2(1 + γp))` the objective equals
/// `bits/(units·w0) · (α + βp)/log2(1 + γp) + α·t_exec`, so the minimizer
/// depends on neither the bandwidth units nor the compute share. The search
/// runs on `(α + βp)/log2(1 + γp)`, which makes the result identical for every
/// caller regardless of the units it currently holds.
pub fn optimize_power<T: Real>(task: &TaskSpec<T>, params: &CostParams<T>, tol: T) -> T {
    if task.data_bytes <= T::zero() {
        return params.power_min;
    }
    let reduced = |p: T| (task.alpha + task.beta * p) / spectral_efficiency(task, p);
    golden_section_min(reduced, params.power_min, params.power_max, tol).0
}

/// An offloaded task with its placement and power fixed.
#[derive(Debug, Clone, Copy)]
pub struct OffloadedTask<'a, T> {
    pub task: &'a TaskSpec<T>,
    pub server: &'a ServerSpec<T>,
    pub share: T,
    pub power: T,
}

impl<T: Real> OffloadedTask<'_, T> {
    fn weighted_cost(&self, units: u32, params: &CostParams<T>) -> Result<T> {
        let c = cost_offload(
            self.task,
            self.server,
            self.share,
            units,
            self.power,
            params,
        )?;
        if !c.feasible {
            return Err(Error::infeasible(
                self.task.id,
                format!("cannot run on server {}", self.server.id),
            ));
        }
        Ok(c.weighted(self.task))
    }
}

/// Splits `total` units: one per task, then each remaining unit to the task
/// whose objective drops the most (ties to the lowest task id).
///
/// Every task's cost is convex and decreasing in its units, so the greedy
/// marginal allocation is optimal for the separable sum.
pub fn allocate_bandwidth<T: Real>(
    params: &CostParams<T>,
    offloaded: &[OffloadedTask<'_, T>],
    total: u32,
) -> Result<Vec<u32>> {
    if (total as usize) < offloaded.len() {
        return Err(Error::precondition(format!(
            "{} offloaded tasks need at least one unit each, only {total} available",
            offloaded.len()
        )));
    }
    let mut units = vec![1u32; offloaded.len()];
    if offloaded.is_empty() {
        return Ok(units);
    }
    let mut current = offloaded
        .iter()
        .map(|o| o.weighted_cost(1, params))
        .collect::<Result<Vec<_>>>()?;
    let mut next = offloaded
        .iter()
        .map(|o| o.weighted_cost(2, params))
        .collect::<Result<Vec<_>>>()?;
    for _ in offloaded.len()..total as usize {
        let mut best = 0usize;
        for i in 1..offloaded.len() {
            let gain_i = current[i] - next[i];
            let gain_b = current[best] - next[best];
            let better = gain_i > gain_b
                || (gain_i == gain_b && offloaded[i].task.id < offloaded[best].task.id);
            if better {
                best = i;
            }
        }
        units[best] += 1;
        current[best] = next[best];
        next[best] = offloaded[best].weighted_cost(units[best] + 1, params)?;
    }
    Ok(units)
}

/// Shared solver state: the instance, its reserved resources and the
/// per-task optimal transmit power.
pub(crate) struct Context<'a, T> {
    pub inst: &'a ProblemInstance<T>,
    pub reserved: Reserved<T>,
    pub powers: Vec<T>,
}

/// Decisions for the tasks that have a placement, and their summed objective.
pub(crate) struct Plan<T> {
    pub decisions: Vec<Option<TaskDecision<T>>>,
    pub objective: T,
}

impl<T: Real> Plan<T> {
    pub fn into_allocation(self) -> Allocation<T> {
        Allocation {
            decisions: self
                .decisions
                .into_iter()
                .map(|d| d.unwrap_or_else(TaskDecision::local))
                .collect(),
        }
    }
}

impl<'a, T: Real> Context<'a, T> {
    pub fn new(inst: &'a ProblemInstance<T>, cfg: &'a SolverConfig) -> Result<Self> {
        inst.validate()?;
        let tol = T::lit(cfg.power_tol);
        let powers = inst
            .tasks
            .iter()
            .map(|t| optimize_power(t, &inst.cost_params, tol))
            .collect();
        Ok(Self {
            inst,
            reserved: inst.reserved(),
            powers,
        })
    }

    pub fn n_servers(&self) -> usize {
        self.reserved.servers.len()
    }

    pub fn bandwidth(&self) -> u32 {
        self.reserved.bandwidth_units_total
    }

    /// All candidate placements in lexicographic order: local first.
    pub fn candidates(&self) -> impl Iterator<Item = Placement> + '_ {
        std::iter::once(Placement::Local).chain((0..self.n_servers()).map(Placement::Server))
    }

    /// Optimal powers and bandwidth for the given (possibly partial)
    /// placement. `None` when the placement violates a slot, GPU or
    /// bandwidth constraint.
    pub fn plan(&self, placements: &[Option<Placement>]) -> Result<Option<Plan<T>>> {
        let servers = &self.reserved.servers;
        let tasks = &self.inst.tasks;
        let params = &self.inst.cost_params;
        let mut hosted = vec![0usize; servers.len()];
        for (task, p) in tasks.iter().zip(placements) {
            if let Some(Placement::Server(j)) = p {
                if !servers[*j].accepts(task) {
                    return Ok(None);
                }
                hosted[*j] += 1;
            }
        }
        if hosted.iter().zip(servers).any(|(&h, s)| h > s.slots()) {
            return Ok(None);
        }
        let offloaded_idx: Vec<usize> = placements
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Some(Placement::Server(_))))
            .map(|(i, _)| i)
            .collect();
        if offloaded_idx.len() > self.bandwidth() as usize {
            return Ok(None);
        }
        let offloaded: Vec<OffloadedTask<'_, T>> = offloaded_idx
            .iter()
            .map(|&i| {
                let Some(Placement::Server(j)) = placements[i] else {
                    unreachable!()
                };
                OffloadedTask {
                    task: &tasks[i],
                    server: &servers[j],
                    share: servers[j].share(hosted[j]),
                    power: self.powers[i],
                }
            })
            .collect();
        // Powers do not depend on the units held, so the post-bandwidth power
        // refinement would reproduce them exactly and is skipped.
        let units = allocate_bandwidth(params, &offloaded, self.bandwidth())?;

        let mut decisions: Vec<Option<TaskDecision<T>>> = vec![None; tasks.len()];
        let mut costs: Vec<Option<T>> = vec![None; tasks.len()];
        for (k, &i) in offloaded_idx.iter().enumerate() {
            let o = &offloaded[k];
            decisions[i] = Some(TaskDecision {
                placement: placements[i].unwrap(),
                units: units[k],
                power: o.power,
            });
            costs[i] = Some(o.weighted_cost(units[k], params)?);
        }
        for (i, p) in placements.iter().enumerate() {
            if *p == Some(Placement::Local) {
                decisions[i] = Some(TaskDecision::local());
                costs[i] = Some(cost_local(&tasks[i], params).weighted(&tasks[i]));
            }
        }
        let objective = costs.iter().flatten().fold(T::zero(), |s, c| s + *c);
        Ok(Some(Plan {
            decisions,
            objective,
        }))
    }

    pub fn finish(
        &self,
        method: Method,
        allocation: Allocation<T>,
        iterations: usize,
        trace: Vec<T>,
    ) -> Result<SolveResult<T>> {
        let eval = evaluate_against(self.inst, &self.reserved, &allocation)?;
        Ok(SolveResult {
            method,
            allocation,
            objective: eval.objective,
            per_task_costs: eval.per_task_costs,
            iterations,
            trace,
            over_demand: self.reserved.over_demand,
        })
    }
}
