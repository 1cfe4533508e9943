//! Brute-force reference solver for small instances: every placement, every
//! integer bandwidth split and a uniform transmit-power grid.
//!
//! Given a placement and a bandwidth split the objective is a sum of per-task
//! terms, so minimizing each task's power over the grid independently is the
//! same as searching the full power grid product.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sysmodel::{cost_local, cost_offload};

use super::{placement_count, Placement, ProblemInstance};

#[derive(Debug, Clone)]
pub struct OracleSolution<T> {
    pub objective: T,
    pub placements: Vec<Placement>,
    pub units: Vec<u32>,
}

/// Largest placement count the brute force will attempt.
pub const ORACLE_PLACEMENT_LIMIT: f64 = 10_000.0;

pub fn brute_force<T: Real>(
    instance: &ProblemInstance<T>,
    power_step: T,
) -> Result<OracleSolution<T>> {
    instance.validate()?;
    let n = instance.tasks.len();
    let reserved = instance.reserved();
    let servers = &reserved.servers;
    let budget = reserved.bandwidth_units_total;
    let count = placement_count(n, servers.len());
    if count > ORACLE_PLACEMENT_LIMIT {
        return Err(Error::TooLarge {
            placements: count,
            limit: ORACLE_PLACEMENT_LIMIT as u64,
        });
    }
    let params = &instance.cost_params;
    let steps = ((params.power_max - params.power_min) / power_step)
        .round()
        .to_usize()
        .unwrap_or(0);
    let grid: Vec<T> = (0..=steps)
        .map(|k| (params.power_min + T::from_count(k) * power_step).min(params.power_max))
        .collect();

    // (task, server, hosted, units) -> best weighted cost over the grid
    let mut memo: HashMap<(usize, usize, usize, u32), Option<T>> = HashMap::new();
    let mut best: Option<OracleSolution<T>> = None;

    let m = servers.len();
    let mut digits = vec![0usize; n];
    loop {
        let placements: Vec<Placement> = digits
            .iter()
            .map(|&d| {
                if d == 0 {
                    Placement::Local
                } else {
                    Placement::Server(d - 1)
                }
            })
            .collect();
        let mut hosted = vec![0usize; m];
        for p in &placements {
            if let Placement::Server(j) = p {
                hosted[*j] += 1;
            }
        }
        let off: Vec<usize> = (0..n)
            .filter(|&i| placements[i] != Placement::Local)
            .collect();
        let slots_ok = hosted.iter().zip(servers).all(|(&h, s)| h <= s.slots());
        if slots_ok && off.len() <= budget as usize {
            let local: T = (0..n)
                .filter(|&i| placements[i] == Placement::Local)
                .map(|i| cost_local(&instance.tasks[i], params).weighted(&instance.tasks[i]))
                .fold(T::zero(), |a, b| a + b);
            let mut split = vec![1u32; off.len()];
            loop {
                let mut total = local;
                let mut ok = true;
                for (k, &i) in off.iter().enumerate() {
                    let Placement::Server(j) = placements[i] else {
                        unreachable!()
                    };
                    let key = (i, j, hosted[j], split[k]);
                    let v = match memo.get(&key) {
                        Some(v) => *v,
                        None => {
                            let v = best_over_grid(
                                instance, &grid, i, j, hosted[j], split[k], servers,
                            )?;
                            memo.insert(key, v);
                            v
                        }
                    };
                    match v {
                        Some(c) => total = total + c,
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok && best.as_ref().is_none_or(|b| total < b.objective) {
                    let mut units = vec![0u32; n];
                    for (k, &i) in off.iter().enumerate() {
                        units[i] = split[k];
                    }
                    best = Some(OracleSolution {
                        objective: total,
                        placements: placements.clone(),
                        units,
                    });
                }
                if !next_split(&mut split, budget) {
                    break;
                }
            }
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(best.expect("all-local placement is always feasible"));
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] <= m {
                break;
            }
            digits[pos] = 0;
        }
    }
}

fn best_over_grid<T: Real>(
    instance: &ProblemInstance<T>,
    grid: &[T],
    i: usize,
    j: usize,
    hosted: usize,
    units: u32,
    servers: &[crate::sysmodel::ServerSpec<T>],
) -> Result<Option<T>> {
    let task = &instance.tasks[i];
    let server = &servers[j];
    let mut best: Option<T> = None;
    for &p in grid {
        let c = cost_offload(
            task,
            server,
            server.share(hosted),
            units,
            p,
            &instance.cost_params,
        )?;
        if !c.feasible {
            return Ok(None);
        }
        let v = c.weighted(task);
        if best.is_none_or(|b| v < b) {
            best = Some(v);
        }
    }
    Ok(best)
}

/// Advances `split` (all entries >= 1) to the next vector, in lexicographic
/// order, whose sum stays within `budget`.
fn next_split(split: &mut [u32], budget: u32) -> bool {
    let len = split.len();
    for k in (0..len).rev() {
        let head: u32 = split[..=k].iter().sum();
        let tail = (len - 1 - k) as u32;
        if head + tail < budget {
            split[k] += 1;
            split[k + 1..].iter_mut().for_each(|v| *v = 1);
            return true;
        }
    }
    false
}
