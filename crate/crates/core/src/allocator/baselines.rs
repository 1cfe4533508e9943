//! Reference reimplementations of three comparison allocators, each reduced
//! to its one-line behavioural rule. They are not the cited authors' full
//! algorithms.
//!
//! - DLD: delay-demand ordering, fastest server, full power, bandwidth in
//!   proportion to data size.
//! - MEC: per-task energy minimization at minimum power.
//! - GSA: fixed fastest-server placement, then Gauss–Seidel sweeps over
//!   per-task power and the bandwidth split.

use crate::error::Result;
use crate::scalar::Real;
use crate::sysmodel::{cost_local, effective_rate, spectral_efficiency};

use super::inner::{allocate_bandwidth, optimize_power, Context, OffloadedTask};
use super::{
    Allocation, Method, Placement, ProblemInstance, SolveResult, SolverConfig, TaskDecision,
};

/// Server with the highest effective compute rate for task `i` if it joined
/// now, among servers that accept it and have a free slot. Ties go to the
/// lowest index.
fn fastest_server<T: Real>(
    ctx: &Context<'_, T>,
    i: usize,
    loads: &[usize],
) -> Result<Option<usize>> {
    let task = &ctx.inst.tasks[i];
    let mut best: Option<(usize, T)> = None;
    for (j, s) in ctx.reserved.servers.iter().enumerate() {
        if loads[j] >= s.slots() {
            continue;
        }
        let Some(rate) = effective_rate(s, task, &ctx.inst.cost_params, s.share(loads[j] + 1))?
        else {
            continue;
        };
        if best.is_none_or(|(_, r)| rate > r) {
            best = Some((j, rate));
        }
    }
    Ok(best.map(|(j, _)| j))
}

fn hosted<T>(decisions: &[TaskDecision<T>], n_servers: usize) -> Vec<usize> {
    let mut h = vec![0; n_servers];
    for d in decisions {
        if let Placement::Server(j) = d.placement {
            h[j] += 1;
        }
    }
    h
}

fn offloaded_indices<T>(decisions: &[TaskDecision<T>]) -> Vec<usize> {
    decisions
        .iter()
        .enumerate()
        .filter(|(_, d)| d.placement != Placement::Local)
        .map(|(i, _)| i)
        .collect()
}

/// Delay-demand-level allocation.
pub fn baseline_dld<T: Real>(instance: &ProblemInstance<T>) -> Result<SolveResult<T>> {
    let cfg = SolverConfig::default();
    let ctx = Context::new(instance, &cfg)?;
    let tasks = &instance.tasks;
    let params = &instance.cost_params;
    let budget = ctx.bandwidth() as usize;

    let mut order: Vec<usize> = (0..tasks.len()).collect();
    // stable: equal sensitivities keep id order
    order.sort_by(|&a, &b| {
        tasks[b]
            .sensitivity
            .partial_cmp(&tasks[a].sensitivity)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut decisions = vec![TaskDecision::local(); tasks.len()];
    let mut loads = vec![0usize; ctx.n_servers()];
    let mut n_off = 0usize;
    for &i in &order {
        if n_off >= budget {
            break;
        }
        if let Some(j) = fastest_server(&ctx, i, &loads)? {
            loads[j] += 1;
            n_off += 1;
            decisions[i] = TaskDecision {
                placement: Placement::Server(j),
                units: 0,
                power: params.power_max,
            };
        }
    }

    // one unit each, the rest in proportion to data size, leftovers to the
    // largest task
    let off = offloaded_indices(&decisions);
    if !off.is_empty() {
        let spare = budget - off.len();
        let total_data = off
            .iter()
            .map(|&i| tasks[i].data_bytes)
            .fold(T::zero(), |a, b| a + b);
        let mut given = 0usize;
        for &i in &off {
            let extra = if total_data > T::zero() {
                (T::from_count(spare) * tasks[i].data_bytes / total_data)
                    .floor()
                    .to_usize()
                    .unwrap_or(0)
            } else {
                0
            };
            given += extra;
            decisions[i].units = 1 + extra as u32;
        }
        let largest = off
            .iter()
            .copied()
            .reduce(|a, b| {
                if tasks[b].data_bytes > tasks[a].data_bytes {
                    b
                } else {
                    a
                }
            })
            .unwrap();
        decisions[largest].units += spare.saturating_sub(given) as u32;
    }
    ctx.finish(Method::Dld, Allocation { decisions }, 1, Vec::new())
        .map(with_single_trace)
}

fn with_single_trace<T: Real>(mut r: SolveResult<T>) -> SolveResult<T> {
    r.trace = vec![r.objective];
    r
}

fn equal_split<T>(decisions: &mut [TaskDecision<T>], budget: u32) {
    let off = offloaded_indices(decisions);
    if off.is_empty() {
        return;
    }
    let n = off.len() as u32;
    let (each, rem) = (budget / n, budget % n);
    for (k, &i) in off.iter().enumerate() {
        decisions[i].units = each + u32::from((k as u32) < rem);
    }
}

/// Minimum-energy allocation: every task independently picks whichever of
/// local execution or offloading at minimum power costs the user less
/// energy, assuming an equal bandwidth split across all tasks.
pub fn baseline_mec<T: Real>(instance: &ProblemInstance<T>) -> Result<SolveResult<T>> {
    let cfg = SolverConfig::default();
    let ctx = Context::new(instance, &cfg)?;
    let tasks = &instance.tasks;
    let params = &instance.cost_params;
    let budget = ctx.bandwidth();

    let assumed_units = if tasks.is_empty() {
        0
    } else {
        (budget as usize / tasks.len()).max(1)
    };
    let mut decisions = vec![TaskDecision::local(); tasks.len()];
    let mut loads = vec![0usize; ctx.n_servers()];
    let mut n_off = 0u32;
    for (i, task) in tasks.iter().enumerate() {
        if n_off >= budget {
            break;
        }
        let Some(j) = fastest_server(&ctx, i, &loads)? else {
            continue;
        };
        let rate = T::from_count(assumed_units)
            * task.unit_bandwidth_rate
            * spectral_efficiency(task, params.power_min);
        let offload_energy = params.power_min * task.data_bits() / rate;
        if offload_energy < cost_local(task, params).energy {
            loads[j] += 1;
            n_off += 1;
            decisions[i] = TaskDecision {
                placement: Placement::Server(j),
                units: 0,
                power: params.power_min,
            };
        }
    }
    equal_split(&mut decisions, budget);
    ctx.finish(Method::Mec, Allocation { decisions }, 1, Vec::new())
        .map(with_single_trace)
}

/// Gauss–Seidel power/bandwidth coordination over a fixed placement that
/// sends every task to its fastest feasible server.
pub fn baseline_gsa<T: Real>(
    instance: &ProblemInstance<T>,
    cfg: &SolverConfig,
) -> Result<SolveResult<T>> {
    let ctx = Context::new(instance, cfg)?;
    let tasks = &instance.tasks;
    let params = &instance.cost_params;
    let budget = ctx.bandwidth();

    let mut decisions = vec![TaskDecision::local(); tasks.len()];
    let mut loads = vec![0usize; ctx.n_servers()];
    let mut n_off = 0u32;
    for (i, decision) in decisions.iter_mut().enumerate() {
        if n_off >= budget {
            break;
        }
        if let Some(j) = fastest_server(&ctx, i, &loads)? {
            loads[j] += 1;
            n_off += 1;
            *decision = TaskDecision {
                placement: Placement::Server(j),
                units: 0,
                power: params.power_max,
            };
        }
    }
    equal_split(&mut decisions, budget);

    let servers = &ctx.reserved.servers;
    let counts = hosted(&decisions, servers.len());
    let off = offloaded_indices(&decisions);
    let tol = T::lit(cfg.power_tol);
    let mut current = ctx.finish(
        Method::Gsa,
        Allocation {
            decisions: decisions.clone(),
        },
        0,
        Vec::new(),
    )?;
    let mut trace = vec![current.objective];
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        let mut next = decisions.clone();
        for &i in &off {
            next[i].power = optimize_power(&tasks[i], params, tol);
        }
        let offloaded: Vec<OffloadedTask<'_, T>> = off
            .iter()
            .map(|&i| {
                let Placement::Server(j) = next[i].placement else {
                    unreachable!()
                };
                OffloadedTask {
                    task: &tasks[i],
                    server: &servers[j],
                    share: servers[j].share(counts[j]),
                    power: next[i].power,
                }
            })
            .collect();
        let units = allocate_bandwidth(params, &offloaded, budget)?;
        for (&i, u) in off.iter().zip(units) {
            next[i].units = u;
        }
        let candidate = ctx.finish(
            Method::Gsa,
            Allocation {
                decisions: next.clone(),
            },
            0,
            Vec::new(),
        )?;
        if candidate.objective > current.objective {
            break;
        }
        sweeps += 1;
        let improvement = current.objective - candidate.objective;
        decisions = next;
        current = candidate;
        trace.push(current.objective);
        if improvement < T::lit(cfg.tol) {
            break;
        }
    }
    current.iterations = sweeps;
    current.trace = trace;
    Ok(current)
}
