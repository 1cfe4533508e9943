use crate::error::{Error, Result};
use crate::scalar::Real;

use super::inner::{Context, Plan};
use super::{Method, Placement, ProblemInstance, SolveResult, SolverConfig};

/// `(servers + 1)^tasks`, as a float so that large instances do not overflow.
pub fn placement_count(n_tasks: usize, n_servers: usize) -> f64 {
    ((n_servers + 1) as f64).powi(n_tasks as i32)
}

/// Enumerates every placement vector, solving the power and bandwidth
/// subproblems optimally for each, and keeps the cheapest. Ties go to the
/// lexicographically smallest placement (local before servers, lower server
/// index first).
pub fn solve_exact<T: Real>(
    instance: &ProblemInstance<T>,
    cfg: &SolverConfig,
) -> Result<SolveResult<T>> {
    let n = instance.tasks.len();
    let m = instance.servers.len();
    let count = placement_count(n, m);
    if count > cfg.exact_limit as f64 {
        return Err(Error::TooLarge {
            placements: count,
            limit: cfg.exact_limit,
        });
    }
    let ctx = Context::new(instance, cfg)?;

    // odometer over {Local, Server 0..m}^n, last task varying fastest
    let mut digits = vec![0usize; n];
    let to_placement = |d: usize| {
        if d == 0 {
            Placement::Local
        } else {
            Placement::Server(d - 1)
        }
    };
    let mut best: Option<Plan<T>> = None;
    let mut visited = 0usize;
    loop {
        visited += 1;
        let placements: Vec<Option<Placement>> =
            digits.iter().map(|&d| Some(to_placement(d))).collect();
        if let Some(plan) = ctx.plan(&placements)? {
            if best.as_ref().is_none_or(|b| plan.objective < b.objective) {
                best = Some(plan);
            }
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                let plan = best.expect("all-local placement is always feasible");
                let objective = plan.objective;
                return ctx.finish(
                    Method::Exact,
                    plan.into_allocation(),
                    visited,
                    vec![objective],
                );
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
