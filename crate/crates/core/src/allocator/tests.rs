use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::harness::instances::random_instance;
use crate::sysmodel::tests::task;

fn gpu(id: usize, capacity: f64) -> ServerSpec<f64> {
    ServerSpec {
        id,
        kind: ServerKind::Gpu,
        capacity,
        min_alloc: 1.0,
    }
}

fn cpu(id: usize, capacity: f64) -> ServerSpec<f64> {
    ServerSpec {
        id,
        kind: ServerKind::Cpu,
        capacity,
        min_alloc: 0.1,
    }
}

fn with_id(mut t: TaskSpec<f64>, id: usize) -> TaskSpec<f64> {
    t.id = id;
    t
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn rel_le(a: f64, b: f64) -> bool {
    a <= b + 1e-12 * b.abs().max(1.0)
}

#[test]
fn reservation_examples() {
    let servers: Vec<_> = (0..5)
        .map(|i| cpu(i, 9.0))
        .chain((5..10).map(|i| gpu(i, 100.0)))
        .collect();
    let r = reserve_capacity(&servers, 50, &DemandVector::zero());
    assert_eq!(r.servers, servers);
    assert_eq!(r.bandwidth_units_total, 50);
    assert!(!r.over_demand);

    let d = DemandVector {
        cpu_demand: 5.0,
        gpu_demand: 0.0,
        bandwidth_demand: 10.0,
    };
    let r = reserve_capacity(&servers, 50, &d);
    for s in &r.servers[..5] {
        assert!((s.capacity - 8.0).abs() < 1e-12);
    }
    assert!(r.servers[5..].iter().all(|s| s.capacity == 100.0));
    assert_eq!(r.bandwidth_units_total, 40);

    let huge = DemandVector {
        cpu_demand: 1e6,
        gpu_demand: 1e6,
        bandwidth_demand: 80.0,
    };
    let r = reserve_capacity(&servers, 50, &huge);
    assert!(r.over_demand);
    assert_eq!(r.bandwidth_units_total, 1);
    assert!(r.servers.iter().all(|s| s.capacity == s.min_alloc));
}

#[test]
fn evaluate_examples() {
    let params = CostParams::default();
    let tasks: Vec<_> = (0..3).map(|i| with_id(task(i % 2 == 0), i)).collect();
    let inst = ProblemInstance::new(tasks.clone(), vec![cpu(0, 9.0)], params.clone(), 10);
    let e = evaluate(&inst, &Allocation::all_local(3)).unwrap();
    let expected: f64 = tasks
        .iter()
        .map(|t| t.alpha * t.cycles / 1.0 + t.beta * 1e-27 * t.cycles * 1e9 * 1e18)
        .sum();
    assert!((e.objective - expected).abs() < 1e-12);

    let empty = ProblemInstance::new(vec![], vec![cpu(0, 9.0)], params.clone(), 10);
    assert_eq!(
        evaluate(&empty, &Allocation::all_local(0))
            .unwrap()
            .objective,
        0.0
    );

    let single = ProblemInstance::new(vec![task(true)], vec![gpu(0, 100.0)], params, 50);
    let alloc = Allocation {
        decisions: vec![TaskDecision {
            placement: Placement::Server(0),
            units: 50,
            power: 0.1,
        }],
    };
    let e = evaluate(&single, &alloc).unwrap();
    assert!((e.objective - 0.095104).abs() < 1e-12);
}

#[test]
fn validator_rejects_each_violation() {
    let params = CostParams::default();
    let tasks = vec![with_id(task(false), 0), with_id(task(true), 1)];
    let tight = ServerSpec {
        id: 1,
        kind: ServerKind::Cpu,
        capacity: 1.5,
        min_alloc: 1.0,
    };
    let inst = ProblemInstance::new(tasks, vec![gpu(0, 100.0), tight], params, 3);
    let off = |j, units, power| TaskDecision {
        placement: Placement::Server(j),
        units,
        power,
    };
    let ok = Allocation {
        decisions: vec![off(1, 1, 0.5), off(0, 2, 0.5)],
    };
    validate_allocation(&inst, &ok).unwrap();

    let cases = [
        (vec![off(1, 2, 0.5), off(0, 2, 0.5)], "budget"),
        (vec![off(0, 1, 0.5), off(0, 1, 0.5)], "GPU"),
        (vec![off(1, 1, 0.5), off(1, 1, 0.5)], "slots"),
        (vec![off(1, 1, 2.0), TaskDecision::local()], "power"),
        (vec![off(1, 0, 0.5), TaskDecision::local()], "no bandwidth"),
        (
            vec![off(7, 1, 0.5), TaskDecision::local()],
            "unknown server",
        ),
        (
            vec![
                TaskDecision {
                    placement: Placement::Local,
                    units: 1,
                    power: 0.0,
                },
                TaskDecision::local(),
            ],
            "local task",
        ),
    ];
    for (decisions, what) in cases {
        let a = Allocation { decisions };
        let err = validate_allocation(&inst, &a).unwrap_err().to_string();
        assert!(err.contains(what), "{what}: {err}");
        assert!(evaluate(&inst, &a).is_err());
    }
    assert!(validate_allocation(&inst, &Allocation::all_local(1)).is_err());
}

#[test]
fn power_search_examples() {
    let params = CostParams::default();
    let tol = 1e-6;
    let mut t = task(false);
    t.beta = 0.0;
    assert_eq!(optimize_power(&t, &params, tol), params.power_max);
    t.beta = 0.2;
    t.alpha = 0.0;
    assert_eq!(optimize_power(&t, &params, tol), params.power_min);

    // grid-search oracle on the full per-task objective
    let server = cpu(0, 9.0);
    for (alpha, beta, snr) in [
        (0.8, 0.2, 10.0),
        (0.2, 0.8, 10.0),
        (0.5, 0.5, 3.0),
        (0.3, 0.9, 40.0),
    ] {
        let mut t = task(false);
        t.alpha = alpha;
        t.beta = beta;
        t.snr_coeff = snr;
        let objective = |p: f64| {
            let c = crate::sysmodel::cost_offload(&t, &server, 9.0, 5, p, &params).unwrap();
            c.weighted(&t)
        };
        let mut best = (params.power_min, objective(params.power_min));
        let steps = ((params.power_max - params.power_min) / 1e-4).round() as usize;
        for k in 0..=steps {
            let p = params.power_min + k as f64 * 1e-4;
            let v = objective(p);
            if v < best.1 {
                best = (p, v);
            }
        }
        let p = optimize_power(&t, &params, tol);
        assert!(
            (p - best.0).abs() < 1e-3,
            "({alpha},{beta},{snr}): {p} vs {}",
            best.0
        );
    }
}

#[test]
fn bandwidth_examples() {
    let params = CostParams::default();
    let server = cpu(0, 9.0);
    let a = with_id(task(false), 0);
    let b = with_id(task(false), 1);
    let off = |t| OffloadedTask {
        task: t,
        server: &server,
        share: 4.5,
        power: 0.5,
    };
    assert_eq!(
        allocate_bandwidth(&params, &[off(&a), off(&b)], 10).unwrap(),
        vec![5, 5]
    );
    assert_eq!(
        allocate_bandwidth(&params, &[off(&a)], 17).unwrap(),
        vec![17]
    );
    assert!(allocate_bandwidth(&params, &[off(&a), off(&b)], 1).is_err());
    assert!(allocate_bandwidth::<f64>(&params, &[], 0)
        .unwrap()
        .is_empty());
}

#[test]
fn bandwidth_greedy_matches_exhaustive_compositions() {
    use rand::Rng;
    let params = CostParams::default();
    let server = cpu(0, 9.0);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let tasks: Vec<TaskSpec<f64>> = (0..3)
            .map(|id| {
                let mut t = with_id(task(false), id);
                t.data_bytes = rng.random_range(1e4..1e6);
                t.unit_bandwidth_rate = rng.random_range(1e6..2e6);
                t.alpha = rng.random_range(0.0..1.0);
                t.beta = rng.random_range(0.01..1.0);
                t
            })
            .collect();
        let powers: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
        let offloaded: Vec<_> = tasks
            .iter()
            .zip(&powers)
            .map(|(t, &p)| OffloadedTask {
                task: t,
                server: &server,
                share: 3.0,
                power: p,
            })
            .collect();
        let cost = |units: &[u32]| -> f64 {
            tasks
                .iter()
                .zip(&powers)
                .zip(units)
                .map(|((t, &p), &u)| {
                    let bits = 8.0 * t.data_bytes;
                    let tx =
                        bits / (u as f64 * t.unit_bandwidth_rate * (1.0 + t.snr_coeff * p).log2());
                    t.alpha * (tx + t.cycles / 3.0) + t.beta * p * tx
                })
                .sum()
        };
        let mut best = f64::INFINITY;
        for x in 1..=4u32 {
            for y in 1..=(5 - x) {
                let z = 6 - x - y;
                best = best.min(cost(&[x, y, z]));
            }
        }
        let greedy = allocate_bandwidth(&params, &offloaded, 6).unwrap();
        assert_eq!(greedy.iter().sum::<u32>(), 6);
        assert!((cost(&greedy) - best).abs() <= 1e-12 * best);
    }
}

#[test]
fn exact_small_cases() {
    let params = CostParams::default();
    let empty = ProblemInstance::new(vec![], vec![cpu(0, 9.0)], params.clone(), 5);
    let r = solve_exact(&empty, &cfg()).unwrap();
    assert!(r.allocation.decisions.is_empty());
    assert_eq!(r.objective, 0.0);

    // offloading to a 100 Gcyc/s GPU beats a 1 Gcyc/s device in time and energy
    let one = ProblemInstance::new(vec![task(true)], vec![gpu(0, 100.0)], params.clone(), 50);
    let local = crate::sysmodel::cost_local(&one.tasks[0], &params);
    let off =
        crate::sysmodel::cost_offload(&one.tasks[0], &one.servers[0], 100.0, 50, 1.0, &params)
            .unwrap();
    assert!(off.tet < local.tet && off.energy < local.energy);
    let r = solve_exact(&one, &cfg()).unwrap();
    assert_eq!(r.allocation.decisions[0].placement, Placement::Server(0));
    assert_eq!(r.allocation.decisions[0].units, 50);

    let big = ProblemInstance::new(
        (0..15).map(|i| with_id(task(true), i)).collect(),
        (0..10).map(|i| cpu(i, 9.0)).collect(),
        params,
        50,
    );
    assert!(matches!(
        solve_exact(&big, &cfg()),
        Err(Error::TooLarge { .. })
    ));
}

#[test]
fn exact_breaks_ties_lexicographically() {
    // two identical servers: the first one wins
    let params = CostParams::default();
    let inst = ProblemInstance::new(vec![task(false)], vec![cpu(0, 9.0), cpu(1, 9.0)], params, 4);
    let r = solve_exact(&inst, &cfg()).unwrap();
    assert_eq!(r.allocation.decisions[0].placement, Placement::Server(0));
}

#[test]
fn heuristic_single_task_matches_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut inst = random_instance(&mut rng, 1, 3, 6);
        inst.tasks.truncate(1);
        let e = solve_exact(&inst, &cfg()).unwrap();
        let h = solve_heuristic(&inst, &cfg()).unwrap();
        assert_eq!(e.allocation, h.allocation);
        assert_eq!(e.objective, h.objective);
    }
}

#[test]
fn heuristic_close_to_exact_and_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut within = 0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 4, 2, 6);
        let e = solve_exact(&inst, &cfg()).unwrap();
        let h = solve_heuristic(&inst, &cfg()).unwrap();
        assert!(rel_le(e.objective, h.objective));
        if h.objective <= 1.1 * e.objective {
            within += 1;
        }
        assert!(h.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*h.trace.last().unwrap(), h.objective);
    }
    assert!(within >= 95, "{within}/100");
}

#[test]
fn dld_orders_by_sensitivity() {
    let params = CostParams::default();
    let one_slot = ServerSpec {
        id: 0,
        kind: ServerKind::Cpu,
        capacity: 1.5,
        min_alloc: 1.0,
    };
    let tasks = vec![with_id(task(false), 0), with_id(task(false), 1)];
    let inst = ProblemInstance::new(tasks, vec![one_slot], params.clone(), 10);
    let r = baseline_dld(&inst).unwrap();
    assert_eq!(
        r.allocation.placements(),
        vec![Placement::Server(0), Placement::Local]
    );

    // the more sensitive special task claims the single GPU slot
    let mut relaxed = with_id(task(true), 0);
    relaxed.sensitivity = 0.2;
    let mut urgent = with_id(task(true), 1);
    urgent.sensitivity = 0.9;
    let lone_gpu = ServerSpec {
        id: 0,
        kind: ServerKind::Gpu,
        capacity: 100.0,
        min_alloc: 60.0,
    };
    let inst = ProblemInstance::new(
        vec![relaxed, urgent],
        vec![lone_gpu, cpu(1, 9.0)],
        params,
        10,
    );
    let r = baseline_dld(&inst).unwrap();
    assert_eq!(r.allocation.decisions[1].placement, Placement::Server(0));
    assert_eq!(r.allocation.decisions[0].placement, Placement::Server(1));
    assert_eq!(r.allocation.units_used(), 10);
    assert!(r.allocation.decisions.iter().all(|d| d.power == 1.0));
}

#[test]
fn mec_energy_rule() {
    let params = CostParams::default();
    let tasks: Vec<_> = (0..4).map(|i| with_id(task(false), i)).collect();
    let servers = vec![cpu(0, 9.0), cpu(1, 9.0)];
    let inst = ProblemInstance::new(tasks.clone(), servers.clone(), params.clone(), 20);
    // 0.01 W over 5 units moves 3.36 Mbit in ~4.9 s: ~0.05 J, far below 1 J locally
    let r = baseline_mec(&inst).unwrap();
    assert!(r
        .allocation
        .decisions
        .iter()
        .all(|d| d.placement != Placement::Local));
    assert!(r
        .allocation
        .decisions
        .iter()
        .all(|d| d.power == params.power_min));
    assert_eq!(r.allocation.units_used(), 20);

    let free = CostParams {
        kappa: 0.0,
        ..params
    };
    let inst = ProblemInstance::new(tasks, servers, free, 20);
    let r = baseline_mec(&inst).unwrap();
    assert!(r
        .allocation
        .decisions
        .iter()
        .all(|d| d.placement == Placement::Local));
}

#[test]
fn gsa_single_task_converges_quickly() {
    let params = CostParams::default();
    let inst = ProblemInstance::new(vec![task(true)], vec![gpu(0, 100.0)], params, 12);
    let r = baseline_gsa(&inst, &cfg()).unwrap();
    assert!(r.iterations <= 2);
    let e = solve_exact(&inst, &cfg()).unwrap();
    assert_eq!(r.allocation, e.allocation);
    assert_eq!(r.objective, e.objective);
}

#[test]
fn exact_dominates_baselines_and_all_results_are_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 4, 3, 8);
        let e = solve_exact(&inst, &cfg()).unwrap();
        validate_allocation(&inst, &e.allocation).unwrap();
        for r in [
            baseline_dld(&inst).unwrap(),
            baseline_mec(&inst).unwrap(),
            baseline_gsa(&inst, &cfg()).unwrap(),
            solve_heuristic(&inst, &cfg()).unwrap(),
        ] {
            validate_allocation(&inst, &r.allocation).unwrap();
            assert!(
                rel_le(e.objective, r.objective),
                "{:?}: {} > {}",
                r.method,
                e.objective,
                r.objective
            );
            let u = utility(&inst.tasks, &r.per_task_costs).unwrap();
            assert!((u - r.objective).abs() <= 1e-9);
        }
        let g = baseline_gsa(&inst, &cfg()).unwrap();
        assert!(g.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn solvers_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inst = random_instance(&mut rng, 4, 2, 6);
    assert_eq!(
        solve_exact(&inst, &cfg()).unwrap(),
        solve_exact(&inst, &cfg()).unwrap()
    );
    assert_eq!(
        solve_heuristic(&inst, &cfg()).unwrap(),
        solve_heuristic(&inst, &cfg()).unwrap()
    );
    assert_eq!(
        baseline_gsa(&inst, &cfg()).unwrap(),
        baseline_gsa(&inst, &cfg()).unwrap()
    );
    assert_eq!(baseline_dld(&inst).unwrap(), baseline_dld(&inst).unwrap());
    assert_eq!(baseline_mec(&inst).unwrap(), baseline_mec(&inst).unwrap());
}

#[test]
fn solvers_do_not_need_double_precision() {
    let t = TaskSpec::<f32> {
        id: 0,
        data_bytes: 420_000.0,
        cycles: 1.0,
        special: true,
        sensitivity: 0.5,
        deadline: 1.0,
        alpha: 0.8,
        beta: 0.2,
        unit_bandwidth_rate: 1e6,
        snr_coeff: 10.0,
    };
    let s = ServerSpec::<f32> {
        id: 0,
        kind: ServerKind::Gpu,
        capacity: 100.0,
        min_alloc: 1.0,
    };
    let inst = ProblemInstance::new(vec![t], vec![s], CostParams::default(), 50);
    let r = solve_exact(&inst, &cfg()).unwrap();
    assert_eq!(r.allocation.decisions[0].placement, Placement::Server(0));
}

#[test]
fn json_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inst = random_instance(&mut rng, 3, 2, 6);
    let r = solve_exact(&inst, &cfg()).unwrap();
    let inst_back: ProblemInstance<f64> =
        serde_json::from_str(&serde_json::to_string(&inst).unwrap()).unwrap();
    assert_eq!(inst_back, inst);
    let text = serde_json::to_string(&r).unwrap();
    assert!(text.contains("\"method\":\"exact\""));
    let back: SolveResult<f64> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
}
