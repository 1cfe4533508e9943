//! Physical cost model: execution and transmission time, user energy, and the
//! weighted delay-plus-energy utility.
//!
//! Units are fixed throughout: data in bytes, compute in gigacycles, compute
//! rates in gigacycles per second, power in watts, time in seconds, energy in
//! joules. One byte is eight bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const BITS_PER_BYTE: f64 = 8.0;
const GIGA: f64 = 1e9;

/// One user task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TaskSpec<T> {
    pub id: usize,
    pub data_bytes: T,
    /// Compute demand in gigacycles.
    pub cycles: T,
    /// Special tasks may run on GPU servers.
    pub special: bool,
    pub sensitivity: T,
    pub deadline: T,
    /// Time weight.
    pub alpha: T,
    /// Energy weight.
    pub beta: T,
    /// Uplink rate per bandwidth unit at unit spectral efficiency (bits/s).
    pub unit_bandwidth_rate: T,
    /// Channel gain-to-noise coefficient (1/W).
    pub snr_coeff: T,
}

impl<T: Real> TaskSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::infeasible(self.id, format!("invalid task: {what}")));
        let finite = [
            self.data_bytes,
            self.cycles,
            self.sensitivity,
            self.deadline,
            self.alpha,
            self.beta,
            self.unit_bandwidth_rate,
            self.snr_coeff,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite field");
        }
        if self.cycles <= T::zero() {
            return bad("cycles must be > 0");
        }
        if self.data_bytes < T::zero() {
            return bad("data_bytes must be >= 0");
        }
        if self.sensitivity <= T::zero() || self.sensitivity > T::one() {
            return bad("sensitivity must lie in (0, 1]");
        }
        if self.deadline <= T::zero() {
            return bad("deadline must be > 0");
        }
        if self.alpha < T::zero() || self.beta < T::zero() || self.alpha + self.beta <= T::zero() {
            return bad("weights must be >= 0 with a positive sum");
        }
        if self.unit_bandwidth_rate <= T::zero() || self.snr_coeff <= T::zero() {
            return bad("channel parameters must be > 0");
        }
        Ok(())
    }

    pub fn data_bits(&self) -> T {
        self.data_bytes * T::lit(BITS_PER_BYTE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerKind {
    Cpu,
    Gpu,
}

/// One edge processor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ServerSpec<T> {
    pub id: usize,
    pub kind: ServerKind,
    /// Gigacycles per second.
    pub capacity: T,
    /// Minimum compute share a hosted task must receive.
    pub min_alloc: T,
}

impl<T: Real> ServerSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity > T::zero() && self.min_alloc > T::zero()) {
            return Err(Error::precondition(format!(
                "server {}: capacity and min_alloc must be > 0",
                self.id
            )));
        }
        if self.min_alloc > self.capacity {
            return Err(Error::precondition(format!(
                "server {}: min_alloc {} exceeds capacity {}",
                self.id, self.min_alloc, self.capacity
            )));
        }
        Ok(())
    }

    /// Number of tasks this server can host while giving each at least
    /// `min_alloc`.
    pub fn slots(&self) -> usize {
        // absorb representation error in e.g. 9.0 / 0.1
        let ratio = (self.capacity / self.min_alloc).to_f64_lossy();
        (ratio + 1e-9).floor().max(0.0) as usize
    }

    /// Equal split of capacity across `hosted` tasks, floored at `min_alloc`.
    pub fn share(&self, hosted: usize) -> T {
        if hosted <= 1 {
            return self.capacity;
        }
        let split = self.capacity / T::from_count(hosted);
        split.max(self.min_alloc).min(self.capacity)
    }

    /// Whether this server can execute `task` at all.
    pub fn accepts<U>(&self, task: &TaskSpec<U>) -> bool {
        match self.kind {
            ServerKind::Cpu => true,
            ServerKind::Gpu => task.special,
        }
    }
}

/// Device-side and channel parameters of the cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default, deny_unknown_fields)]
pub struct CostParams<T> {
    /// User device compute rate (Gcycles/s).
    pub local_capacity: T,
    /// Dynamic-power coefficient (J·s²/cycle³).
    pub kappa: T,
    /// Fraction of an allocated GPU share a special task can use.
    pub gpu_special_efficiency: T,
    pub power_min: T,
    pub power_max: T,
}

impl<T: Real> Default for CostParams<T> {
    fn default() -> Self {
        Self {
            local_capacity: T::lit(1.0),
            kappa: T::lit(1e-27),
            gpu_special_efficiency: T::lit(0.2),
            power_min: T::lit(0.01),
            power_max: T::lit(1.0),
        }
    }
}

impl<T: Real> CostParams<T> {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("local_capacity", self.local_capacity),
            ("gpu_special_efficiency", self.gpu_special_efficiency),
            ("power_min", self.power_min),
            ("power_max", self.power_max),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::precondition(format!(
                    "{name} must be finite and > 0"
                )));
            }
        }
        // kappa = 0 models free local compute
        if !(self.kappa.is_finite() && self.kappa >= T::zero()) {
            return Err(Error::precondition("kappa must be finite and >= 0"));
        }
        if self.gpu_special_efficiency > T::one() {
            return Err(Error::precondition("gpu_special_efficiency must be <= 1"));
        }
        if self.power_min > self.power_max {
            return Err(Error::precondition("power_min must be <= power_max"));
        }
        Ok(())
    }

    pub fn power_in_bounds(&self, power: T) -> bool {
        power >= self.power_min && power <= self.power_max
    }
}

/// Time and energy of one task under one decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CostBreakdown<T> {
    pub tx_time: T,
    pub exec_time: T,
    pub tet: T,
    pub energy: T,
    pub feasible: bool,
}

impl<T: Real> CostBreakdown<T> {
    fn new(tx_time: T, exec_time: T, energy: T) -> Self {
        Self {
            tx_time,
            exec_time,
            tet: tx_time + exec_time,
            energy,
            feasible: true,
        }
    }

    /// Marker for a decision that cannot be executed. Time and energy are
    /// infinite so that accidental summation never looks attractive.
    pub fn infeasible() -> Self {
        Self {
            tx_time: T::infinity(),
            exec_time: T::infinity(),
            tet: T::infinity(),
            energy: T::infinity(),
            feasible: false,
        }
    }

    /// α·tet + β·energy for the owning task.
    pub fn weighted(&self, task: &TaskSpec<T>) -> T {
        task.alpha * self.tet + task.beta * self.energy
    }
}

/// Compute rate a task actually obtains from `share` on `server`.
///
/// `Ok(None)` means the task cannot run on this server (common task on GPU).
pub fn effective_rate<T: Real>(
    server: &ServerSpec<T>,
    task: &TaskSpec<T>,
    params: &CostParams<T>,
    share: T,
) -> Result<Option<T>> {
    if !(share >= server.min_alloc && share <= server.capacity) {
        return Err(Error::precondition(format!(
            "share {share} outside [{}, {}] on server {}",
            server.min_alloc, server.capacity, server.id
        )));
    }
    Ok(match server.kind {
        ServerKind::Cpu => Some(share),
        ServerKind::Gpu if task.special => Some(params.gpu_special_efficiency * share),
        ServerKind::Gpu => None,
    })
}

/// Spectral efficiency log2(1 + γp) of the task's channel at `power`.
pub fn spectral_efficiency<T: Real>(task: &TaskSpec<T>, power: T) -> T {
    (T::one() + task.snr_coeff * power).log2()
}

/// Uplink rate in bits/s: units · w0 · log2(1 + γp).
pub fn uplink_rate<T: Real>(
    task: &TaskSpec<T>,
    units: u32,
    power: T,
    params: &CostParams<T>,
) -> Result<T> {
    if !params.power_in_bounds(power) {
        return Err(Error::precondition(format!(
            "power {power} W outside [{}, {}]",
            params.power_min, params.power_max
        )));
    }
    if units == 0 {
        return Ok(T::zero());
    }
    Ok(T::from_u32(units).unwrap() * task.unit_bandwidth_rate * spectral_efficiency(task, power))
}

/// Cost of running the task on the user device.
pub fn cost_local<T: Real>(task: &TaskSpec<T>, params: &CostParams<T>) -> CostBreakdown<T> {
    let exec_time = task.cycles / params.local_capacity;
    let giga = T::lit(GIGA);
    let f = params.local_capacity * giga;
    let energy = params.kappa * (task.cycles * giga) * f * f;
    CostBreakdown::new(T::zero(), exec_time, energy)
}

/// Cost of offloading the task to `server` with the given compute share,
/// bandwidth units and transmit power. Only user-side transmit energy is
/// counted; result download time is neglected.
pub fn cost_offload<T: Real>(
    task: &TaskSpec<T>,
    server: &ServerSpec<T>,
    share: T,
    units: u32,
    power: T,
    params: &CostParams<T>,
) -> Result<CostBreakdown<T>> {
    let rate = uplink_rate(task, units, power, params)?;
    let Some(compute) = effective_rate(server, task, params, share)? else {
        return Ok(CostBreakdown::infeasible());
    };
    let bits = task.data_bits();
    let tx_time = if bits == T::zero() {
        T::zero()
    } else if rate > T::zero() {
        bits / rate
    } else {
        return Ok(CostBreakdown::infeasible());
    };
    let exec_time = task.cycles / compute;
    Ok(CostBreakdown::new(tx_time, exec_time, power * tx_time))
}

/// Σ_i (α_i·tet_i + β_i·energy_i).
pub fn utility<T: Real>(tasks: &[TaskSpec<T>], costs: &[CostBreakdown<T>]) -> Result<T> {
    if tasks.len() != costs.len() {
        return Err(Error::LengthMismatch {
            left: tasks.len(),
            right: costs.len(),
        });
    }
    let mut total = T::zero();
    for (task, cost) in tasks.iter().zip(costs) {
        if !cost.feasible {
            return Err(Error::infeasible(task.id, "cost entry is infeasible"));
        }
        total = total + cost.weighted(task);
    }
    Ok(total)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn task(special: bool) -> TaskSpec<f64> {
        TaskSpec {
            id: 0,
            data_bytes: 420_000.0,
            cycles: 1.0,
            special,
            sensitivity: 0.5,
            deadline: 1.0,
            alpha: 0.8,
            beta: 0.2,
            unit_bandwidth_rate: 1e6,
            snr_coeff: 10.0,
        }
    }

    fn server(kind: ServerKind, capacity: f64, min_alloc: f64) -> ServerSpec<f64> {
        ServerSpec {
            id: 0,
            kind,
            capacity,
            min_alloc,
        }
    }

    #[test]
    fn effective_rate_cases() {
        let p = CostParams::default();
        let gpu = server(ServerKind::Gpu, 100.0, 1.0);
        let cpu = server(ServerKind::Cpu, 9.0, 0.1);
        let r = effective_rate(&gpu, &task(true), &p, 100.0)
            .unwrap()
            .unwrap();
        assert!((r - 20.0).abs() < 1e-12);
        assert_eq!(
            effective_rate(&cpu, &task(true), &p, 9.0).unwrap(),
            Some(9.0)
        );
        assert_eq!(
            effective_rate(&cpu, &task(false), &p, 9.0).unwrap(),
            Some(9.0)
        );
        assert_eq!(effective_rate(&gpu, &task(false), &p, 50.0).unwrap(), None);
        assert!(effective_rate(&cpu, &task(false), &p, 9.5).is_err());
        assert!(effective_rate(&cpu, &task(false), &p, 0.05).is_err());
    }

    #[test]
    fn uplink_rate_cases() {
        let p = CostParams::default();
        let t = task(false);
        assert!((uplink_rate(&t, 1, 0.1, &p).unwrap() - 1e6).abs() < 1e-6);
        assert_eq!(uplink_rate(&t, 0, 0.1, &p).unwrap(), 0.0);
        assert!((uplink_rate(&t, 50, 0.1, &p).unwrap() - 5e7).abs() < 1e-4);
        assert!(uplink_rate(&t, 1, 1.5, &p).is_err());
        assert!(uplink_rate(&t, 1, 0.001, &p).is_err());
    }

    #[test]
    fn local_cost_cases() {
        let mut p = CostParams::default();
        let mut t = task(false);
        let c = cost_local(&t, &p);
        assert_eq!(c.tx_time, 0.0);
        assert!((c.tet - 1.0).abs() < 1e-12);
        assert!((c.energy - 1.0).abs() < 1e-12);
        assert!(c.feasible);

        t.cycles = 2.0;
        assert!((cost_local(&t, &p).tet - 2.0).abs() < 1e-12);

        t.cycles = 1.0;
        p.local_capacity = 2.0;
        let c = cost_local(&t, &p);
        assert!((c.tet - 0.5).abs() < 1e-12);
        assert!((c.energy - 4.0).abs() < 1e-12);
    }

    #[test]
    fn offload_worked_example() {
        let p = CostParams::default();
        let gpu = server(ServerKind::Gpu, 100.0, 1.0);
        let c = cost_offload(&task(true), &gpu, 100.0, 50, 0.1, &p).unwrap();
        assert!(c.feasible);
        assert!((c.tx_time - 0.0672).abs() < 1e-12);
        assert!((c.exec_time - 0.05).abs() < 1e-12);
        assert!((c.tet - 0.1172).abs() < 1e-12);
        assert!((c.energy - 0.00672).abs() < 1e-12);
    }

    #[test]
    fn offload_edge_cases() {
        let p = CostParams::default();
        let cpu = server(ServerKind::Cpu, 9.0, 0.1);
        let gpu = server(ServerKind::Gpu, 100.0, 1.0);
        let mut t = task(false);
        t.data_bytes = 0.0;
        for (units, power) in [(1, 0.01), (7, 0.5), (0, 1.0)] {
            let c = cost_offload(&t, &cpu, 9.0, units, power, &p).unwrap();
            assert_eq!(c.tx_time, 0.0);
            assert_eq!(c.energy, 0.0);
        }
        assert!(
            !cost_offload(&task(false), &gpu, 100.0, 5, 0.1, &p)
                .unwrap()
                .feasible
        );
        // no bandwidth with data to send: infeasible, not a division by zero
        assert!(
            !cost_offload(&task(false), &cpu, 9.0, 0, 0.1, &p)
                .unwrap()
                .feasible
        );
    }

    #[test]
    fn utility_cases() {
        let t = task(false);
        let c = CostBreakdown::new(0.0, 1.0, 1.0);
        assert!((utility(std::slice::from_ref(&t), &[c]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(utility::<f64>(&[], &[]).unwrap(), 0.0);
        let one = utility(std::slice::from_ref(&t), &[c]).unwrap();
        let two = utility(&[t.clone(), t.clone()], &[c, c]).unwrap();
        assert_eq!(two, 2.0 * one);

        assert!(matches!(
            utility(std::slice::from_ref(&t), &[]),
            Err(Error::LengthMismatch { .. })
        ));
        let mut bad = t.clone();
        bad.id = 7;
        match utility(&[bad], &[CostBreakdown::infeasible()]) {
            Err(Error::Infeasible { task, .. }) => assert_eq!(task, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn works_in_single_precision() {
        let p = CostParams::<f32>::default();
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
        let gpu = ServerSpec::<f32> {
            id: 0,
            kind: ServerKind::Gpu,
            capacity: 100.0,
            min_alloc: 1.0,
        };
        let c = cost_offload(&t, &gpu, 100.0, 50, 0.1, &p).unwrap();
        assert!((c.tet - 0.1172).abs() < 1e-5);
        assert!((cost_local(&t, &p).energy - 1.0).abs() < 1e-5);
    }

    #[test]
    fn slots_and_shares() {
        let cpu = server(ServerKind::Cpu, 9.0, 0.1);
        assert_eq!(cpu.slots(), 90);
        let gpu = server(ServerKind::Gpu, 100.0, 1.0);
        assert_eq!(gpu.slots(), 100);
        assert_eq!(gpu.share(1), 100.0);
        assert_eq!(gpu.share(4), 25.0);
        let tight = server(ServerKind::Cpu, 2.5, 1.0);
        assert_eq!(tight.slots(), 2);
        assert_eq!(tight.share(2), 1.25);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_task() -> impl Strategy<Value = TaskSpec<f64>> {
            (
                0.0..2e6f64,
                0.1..3.0f64,
                any::<bool>(),
                0.0..1.0f64,
                0.0..1.0f64,
                1e5..5e6f64,
                0.5..50.0f64,
            )
                .prop_map(|(data, cycles, special, alpha, beta, w0, snr)| TaskSpec {
                    id: 0,
                    data_bytes: data,
                    cycles,
                    special,
                    sensitivity: 0.5,
                    deadline: 1.0,
                    alpha,
                    beta: beta + 1e-3,
                    unit_bandwidth_rate: w0,
                    snr_coeff: snr,
                })
        }

        proptest! {
            #[test]
            fn tet_monotone_energy_increasing(
                t in arb_task(),
                units in 1u32..40,
                p1 in 0.01..1.0f64,
                p2 in 0.01..1.0f64,
                s1 in 0.1..9.0f64,
                s2 in 0.1..9.0f64,
            ) {
                let params = CostParams::default();
                let cpu = server(ServerKind::Cpu, 9.0, 0.1);
                let (plo, phi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
                let (slo, shi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
                let base = cost_offload(&t, &cpu, slo, units, plo, &params).unwrap();
                let more_units = cost_offload(&t, &cpu, slo, units + 1, plo, &params).unwrap();
                let more_power = cost_offload(&t, &cpu, slo, units, phi, &params).unwrap();
                let more_share = cost_offload(&t, &cpu, shi, units, plo, &params).unwrap();
                prop_assert!(more_units.tet <= base.tet);
                prop_assert!(more_power.tet <= base.tet);
                prop_assert!(more_share.tet <= base.tet);
                if t.data_bytes > 1.0 && phi > plo * (1.0 + 1e-9) {
                    prop_assert!(more_power.energy > base.energy);
                }
            }

            #[test]
            fn utility_additive_and_scaling(
                a in proptest::collection::vec(arb_task(), 0..5),
                b in proptest::collection::vec(arb_task(), 0..5),
            ) {
                let params = CostParams::default();
                let cost = |ts: &[TaskSpec<f64>]| ts.iter().map(|t| cost_local(t, &params)).collect::<Vec<_>>();
                let ua = utility(&a, &cost(&a)).unwrap();
                let ub = utility(&b, &cost(&b)).unwrap();
                let all: Vec<_> = a.iter().chain(b.iter()).cloned().collect();
                let uab = utility(&all, &cost(&all)).unwrap();
                prop_assert!((uab - (ua + ub)).abs() <= 1e-9 * (1.0 + uab.abs()));

                let time_only: Vec<_> = a.iter().cloned().map(|mut t| { t.beta = 0.0; t.alpha += 0.1; t }).collect();
                let doubled: Vec<_> = time_only.iter().cloned().map(|mut t| { t.alpha *= 2.0; t }).collect();
                let u1 = utility(&time_only, &cost(&time_only)).unwrap();
                let u2 = utility(&doubled, &cost(&doubled)).unwrap();
                prop_assert_eq!(u2, 2.0 * u1);
            }

            #[test]
            fn gpu_rejects_common(t in arb_task(), units in 1u32..10) {
                let params = CostParams::default();
                let gpu = server(ServerKind::Gpu, 100.0, 1.0);
                let c = cost_offload(&t, &gpu, 50.0, units, 0.5, &params).unwrap();
                prop_assert_eq!(c.feasible, t.special);
                prop_assert!(cost_local(&t, &params).feasible);
            }
        }
    }
}
