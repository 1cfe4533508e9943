//! Small random instances for solver cross-checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allocator::oracle::brute_force;
use crate::allocator::{solve_exact, ProblemInstance, SolverConfig};
use crate::error::Result;
use crate::sysmodel::{CostParams, ServerKind, ServerSpec, TaskSpec};

/// Up to `max_tasks` tasks, up to `max_servers` servers (some with only one
/// or two slots) and a bandwidth budget of at most `max_units`.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_tasks: usize,
    max_servers: usize,
    max_units: u32,
) -> ProblemInstance<f64> {
    let n = rng.random_range(1..=max_tasks);
    let m = rng.random_range(1..=max_servers);
    let tasks = (0..n)
        .map(|id| {
            // occasionally a pure-delay or pure-energy task
            let (alpha, beta) = match rng.random_range(0..10) {
                0 => (1.0, 0.0),
                1 => (0.0, 1.0),
                _ => (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)),
            };
            let sensitivity: f64 = rng.random_range(0.1..=1.0);
            TaskSpec {
                id,
                data_bytes: rng.random_range(50_000.0..800_000.0),
                cycles: rng.random_range(0.3..2.0),
                special: rng.random_bool(0.6),
                sensitivity,
                deadline: 2.0 - 1.8 * sensitivity,
                alpha,
                beta,
                unit_bandwidth_rate: rng.random_range(1e6..2e6),
                snr_coeff: rng.random_range(2.0..20.0),
            }
        })
        .collect();
    let servers = (0..m)
        .map(|id| {
            let kind = if rng.random_bool(0.5) {
                ServerKind::Cpu
            } else {
                ServerKind::Gpu
            };
            let min_alloc = rng.random_range(0.5..2.0);
            let slots = rng.random_range(1..=3) as f64;
            ServerSpec {
                id,
                kind,
                capacity: min_alloc * (slots + rng.random_range(0.0..0.9)),
                min_alloc,
            }
        })
        .collect();
    let params = CostParams {
        local_capacity: rng.random_range(0.5..2.0),
        kappa: rng.random_range(1e-28..1e-27),
        ..CostParams::default()
    };
    ProblemInstance::new(tasks, servers, params, rng.random_range(1..=max_units))
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub instances: usize,
    pub power_step: f64,
    pub max_rel_gap: f64,
    /// Instances where the exact objective exceeds the brute force by more
    /// than `tolerance` relative.
    pub violations: usize,
    pub tolerance: f64,
}

/// Solves `count` random instances both exactly and by brute force.
pub fn oracle_check(
    seed: u64,
    count: usize,
    power_step: f64,
    tolerance: f64,
) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SolverConfig::default();
    let mut max_rel_gap = 0.0f64;
    let mut violations = 0;
    for _ in 0..count {
        let inst = random_instance(&mut rng, 4, 2, 6);
        let exact = solve_exact(&inst, &cfg)?;
        let brute = brute_force(&inst, power_step)?;
        let gap = (exact.objective - brute.objective) / brute.objective.abs().max(1e-300);
        max_rel_gap = max_rel_gap.max(gap.abs());
        if gap.abs() > tolerance {
            violations += 1;
        }
    }
    Ok(OracleReport {
        instances: count,
        power_step,
        max_rel_gap,
        violations,
        tolerance,
    })
}
