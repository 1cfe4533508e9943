use crate::error::Result;
use crate::scalar::Real;

use super::inner::{Context, Plan};
use super::{Method, Placement, ProblemInstance, SolveResult, SolverConfig};

/// Greedy construction followed by best-improvement local search over
/// single-task moves and pairwise swaps.
///
/// Construction visits tasks by descending `α·cycles` and gives each the
/// placement with the lowest objective over the tasks placed so far. Local
/// search stops when no move improves the objective or after
/// `cfg.max_iters` moves. The objective never increases.
pub fn solve_heuristic<T: Real>(
    instance: &ProblemInstance<T>,
    cfg: &SolverConfig,
) -> Result<SolveResult<T>> {
    let ctx = Context::new(instance, cfg)?;
    let tasks = &instance.tasks;
    let n = tasks.len();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ka = tasks[a].alpha * tasks[a].cycles;
        let kb = tasks[b].alpha * tasks[b].cycles;
        kb.partial_cmp(&ka)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(tasks[a].id.cmp(&tasks[b].id))
    });

    let mut placements: Vec<Option<Placement>> = vec![None; n];
    for &i in &order {
        let mut best: Option<(Placement, T)> = None;
        for cand in ctx.candidates() {
            placements[i] = Some(cand);
            if let Some(plan) = ctx.plan(&placements)? {
                if best.is_none_or(|(_, obj)| plan.objective < obj) {
                    best = Some((cand, plan.objective));
                }
            }
        }
        placements[i] = best.map(|(p, _)| p).or(Some(Placement::Local));
    }

    let mut current = ctx
        .plan(&placements)?
        .expect("greedy construction keeps every prefix feasible");
    let mut trace = vec![current.objective];
    let mut moves = 0usize;
    let candidates: Vec<Placement> = ctx.candidates().collect();
    while moves < cfg.max_iters {
        // improvements smaller than this are rounding noise
        let mut bound = current.objective - T::lit(1e-12) * current.objective.abs().max(T::one());
        let mut best: Option<(Vec<Option<Placement>>, Plan<T>)> = None;
        for trial in neighbours(&placements, &candidates) {
            if let Some(plan) = ctx.plan(&trial)? {
                if plan.objective < bound {
                    bound = plan.objective;
                    best = Some((trial, plan));
                }
            }
        }
        let Some((next, plan)) = best else { break };
        placements = next;
        current = plan;
        trace.push(current.objective);
        moves += 1;
    }
    ctx.finish(Method::Heuristic, current.into_allocation(), moves, trace)
}

/// Single-task moves in (task, candidate) order, then pairwise swaps.
fn neighbours<'a>(
    placements: &'a [Option<Placement>],
    candidates: &'a [Placement],
) -> impl Iterator<Item = Vec<Option<Placement>>> + 'a {
    let n = placements.len();
    let moves = (0..n).flat_map(move |i| {
        candidates
            .iter()
            .filter(move |&&c| placements[i] != Some(c))
            .map(move |&c| {
                let mut trial = placements.to_vec();
                trial[i] = Some(c);
                trial
            })
    });
    let swaps = (0..n)
        .flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
        .filter(move |&(i, j)| placements[i] != placements[j])
        .map(move |(i, j)| {
            let mut trial = placements.to_vec();
            trial.swap(i, j);
            trial
        });
    moves.chain(swaps)
}
