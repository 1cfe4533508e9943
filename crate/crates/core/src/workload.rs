//! Synthetic scenario generation, moving-average feature extraction and
//! supervised dataset assembly for the demand forecaster.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sysmodel::{CostParams, ServerKind, ServerSpec, TaskSpec};

/// Period of the synthetic utilization cycle, in samples.
pub const TRACE_PERIOD: usize = 24;
/// Number of entries in a [`FeatureVector`].
pub const FEATURE_COUNT: usize = 8;
/// Number of resource types in a [`DemandVector`].
pub const DEMAND_DIM: usize = 3;

/// One observation of the background workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RawSample<T> {
    pub t: usize,
    pub cpu_util: T,
    pub gpu_util: T,
    pub net_util: T,
    pub arrivals: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FeatureVector<T> {
    pub t: usize,
    pub values: Vec<T>,
}

/// Demand per resource type: CPU and GPU in Gcycles/s, bandwidth in units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DemandVector<T> {
    pub cpu_demand: T,
    pub gpu_demand: T,
    pub bandwidth_demand: T,
}

impl<T: Real> DemandVector<T> {
    pub fn zero() -> Self {
        Self {
            cpu_demand: T::zero(),
            gpu_demand: T::zero(),
            bandwidth_demand: T::zero(),
        }
    }

    pub fn to_array(&self) -> [T; DEMAND_DIM] {
        [self.cpu_demand, self.gpu_demand, self.bandwidth_demand]
    }

    pub fn from_slice(v: &[T]) -> Result<Self> {
        if v.len() < DEMAND_DIM {
            return Err(Error::Dimension {
                expected: DEMAND_DIM,
                got: v.len(),
            });
        }
        Ok(Self {
            cpu_demand: v[0],
            gpu_demand: v[1],
            bandwidth_demand: v[2],
        })
    }

    pub fn is_valid(&self) -> bool {
        self.to_array()
            .iter()
            .all(|v| v.is_finite() && *v >= T::zero())
    }
}

/// Heterogeneous processor pool: identical CPUs followed by identical GPUs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerPoolConfig {
    pub cpu_count: usize,
    pub cpu_capacity: f64,
    pub cpu_min_alloc: f64,
    pub gpu_count: usize,
    pub gpu_capacity: f64,
    pub gpu_min_alloc: f64,
}

impl Default for ServerPoolConfig {
    fn default() -> Self {
        Self {
            cpu_count: 5,
            cpu_capacity: 9.0,
            cpu_min_alloc: 0.1,
            gpu_count: 5,
            gpu_capacity: 100.0,
            gpu_min_alloc: 1.0,
        }
    }
}

impl ServerPoolConfig {
    pub fn build<T: Real>(&self) -> Vec<ServerSpec<T>> {
        let cpus =
            (0..self.cpu_count).map(|_| (ServerKind::Cpu, self.cpu_capacity, self.cpu_min_alloc));
        let gpus =
            (0..self.gpu_count).map(|_| (ServerKind::Gpu, self.gpu_capacity, self.gpu_min_alloc));
        cpus.chain(gpus)
            .enumerate()
            .map(|(id, (kind, cap, min))| ServerSpec {
                id,
                kind,
                capacity: T::lit(cap),
                min_alloc: T::lit(min),
            })
            .collect()
    }

    pub fn total_cpu(&self) -> f64 {
        self.cpu_count as f64 * self.cpu_capacity
    }

    pub fn total_gpu(&self) -> f64 {
        self.gpu_count as f64 * self.gpu_capacity
    }
}

/// The synthetic experiment scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_tasks: usize,
    pub special_prob: f64,
    pub mean_data_bytes: f64,
    /// Gigacycles.
    pub mean_cycles: f64,
    pub sensitivity_range: [f64; 2],
    /// Per-unit uplink rate range, bits/s.
    pub rate_range: [f64; 2],
    pub bandwidth_units_total: u32,
    pub seed: u64,
    pub trace_length: usize,
    pub window_k: usize,
    /// Standard deviation of the utilization noise.
    pub trace_noise: f64,
    pub snr_coeff: f64,
    pub time_weight: f64,
    pub energy_weight: f64,
    pub servers: ServerPoolConfig,
    pub cost: CostParams<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_tasks: 15,
            special_prob: 0.7,
            mean_data_bytes: 420_000.0,
            mean_cycles: 1.0,
            sensitivity_range: [0.1, 1.0],
            rate_range: [1e6, 2e6],
            bandwidth_units_total: 50,
            seed: 0,
            trace_length: 336,
            window_k: 4,
            trace_noise: 0.05,
            snr_coeff: 10.0,
            time_weight: 0.8,
            energy_weight: 0.2,
            servers: ServerPoolConfig::default(),
            cost: CostParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |path: &str, message: &str| {
            Err(Error::Config {
                path: format!("scenario.{path}"),
                message: message.into(),
            })
        };
        if !(0.0..=1.0).contains(&self.special_prob) {
            return cfg("special_prob", "must lie in [0, 1]");
        }
        if !(self.mean_data_bytes >= 0.0 && self.mean_data_bytes.is_finite()) {
            return cfg("mean_data_bytes", "must be finite and >= 0");
        }
        if !(self.mean_cycles > 0.0 && self.mean_cycles.is_finite()) {
            return cfg("mean_cycles", "must be finite and > 0");
        }
        let [lo, hi] = self.sensitivity_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return cfg("sensitivity_range", "must satisfy 0 < low <= high <= 1");
        }
        let [lo, hi] = self.rate_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return cfg("rate_range", "must satisfy 0 < low <= high");
        }
        if self.window_k == 0 {
            return cfg("window_k", "must be >= 1");
        }
        if self.trace_length < self.window_k + 1 {
            return cfg("trace_length", "must be >= window_k + 1");
        }
        if !(self.trace_noise >= 0.0 && self.trace_noise.is_finite()) {
            return cfg("trace_noise", "must be finite and >= 0");
        }
        if !(self.snr_coeff > 0.0 && self.snr_coeff.is_finite()) {
            return cfg("snr_coeff", "must be finite and > 0");
        }
        if !(self.time_weight >= 0.0 && self.energy_weight >= 0.0)
            || self.time_weight + self.energy_weight <= 0.0
        {
            return cfg("time_weight", "weights must be >= 0 with a positive sum");
        }
        let s = &self.servers;
        if !(s.cpu_capacity > 0.0 && s.cpu_min_alloc > 0.0 && s.cpu_min_alloc <= s.cpu_capacity) {
            return cfg(
                "servers.cpu_min_alloc",
                "must satisfy 0 < min_alloc <= capacity",
            );
        }
        if !(s.gpu_capacity > 0.0 && s.gpu_min_alloc > 0.0 && s.gpu_min_alloc <= s.gpu_capacity) {
            return cfg(
                "servers.gpu_min_alloc",
                "must satisfy 0 < min_alloc <= capacity",
            );
        }
        self.cost.validate().map_err(|e| Error::Config {
            path: "scenario.cost".into(),
            message: e.to_string(),
        })
    }
}

/// Maps latency sensitivity to a deadline: more sensitive, tighter deadline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlineRule {
    pub min: f64,
    pub max: f64,
}

impl Default for DeadlineRule {
    fn default() -> Self {
        Self { min: 0.2, max: 2.0 }
    }
}

impl DeadlineRule {
    pub fn deadline(&self, sensitivity: f64) -> f64 {
        self.max - sensitivity * (self.max - self.min)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws `cfg.n_tasks` tasks. Deterministic given the generator state.
pub fn generate_tasks<T: Real, R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    deadlines: &DeadlineRule,
    rng: &mut R,
) -> Vec<TaskSpec<T>> {
    let special = Bernoulli::new(cfg.special_prob.clamp(0.0, 1.0)).expect("probability in [0, 1]");
    (0..cfg.n_tasks)
        .map(|id| {
            let special = special.sample(rng);
            let data = uniform(rng, 0.5, 1.5) * cfg.mean_data_bytes;
            let cycles = uniform(rng, 0.5, 1.5) * cfg.mean_cycles;
            let sensitivity = uniform(rng, cfg.sensitivity_range[0], cfg.sensitivity_range[1]);
            let rate = uniform(rng, cfg.rate_range[0], cfg.rate_range[1]);
            TaskSpec {
                id,
                data_bytes: T::lit(data),
                cycles: T::lit(cycles),
                special,
                sensitivity: T::lit(sensitivity),
                deadline: T::lit(deadlines.deadline(sensitivity)),
                alpha: T::lit(cfg.time_weight),
                beta: T::lit(cfg.energy_weight),
                unit_bandwidth_rate: T::lit(rate),
                snr_coeff: T::lit(cfg.snr_coeff),
            }
        })
        .collect()
}

/// Background utilization: a daily sinusoid plus Gaussian noise per channel,
/// clamped to [0, 1], with Poisson task arrivals.
pub fn generate_trace<T: Real, R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<RawSample<T>>> {
    if cfg.trace_length == 0 {
        return Err(Error::Empty("trace_length must be >= 1"));
    }
    let noise = Normal::new(0.0, cfg.trace_noise)
        .map_err(|e| Error::precondition(format!("trace noise: {e}")))?;
    let lambda = cfg.n_tasks as f64 / 4.0;
    let arrivals = if lambda > 0.0 {
        Some(Poisson::new(lambda).map_err(|e| Error::precondition(format!("arrival rate: {e}")))?)
    } else {
        None
    };
    let samples = (0..cfg.trace_length)
        .map(|t| {
            let base = 0.5 + 0.3 * (2.0 * PI * t as f64 / TRACE_PERIOD as f64).sin();
            let mut channel = || T::lit((base + noise.sample(rng)).clamp(0.0, 1.0));
            let cpu_util = channel();
            let gpu_util = channel();
            let net_util = channel();
            let arrivals = arrivals.map_or(0, |d| d.sample(rng) as u32);
            RawSample {
                t,
                cpu_util,
                gpu_util,
                net_util,
                arrivals,
            }
        })
        .collect();
    Ok(samples)
}

/// Mean of the last `k` entries of `series`.
pub fn moving_average<T: Real>(series: &[T], k: usize) -> Result<T> {
    if k == 0 {
        return Err(Error::precondition("moving-average window must be >= 1"));
    }
    if series.len() < k {
        return Err(Error::InsufficientHistory {
            needed: k,
            available: series.len(),
        });
    }
    let last = series.len() - 1;
    let sum: T = (0..k).map(|i| series[last - i]).sum();
    Ok(sum / T::from_count(k))
}

/// Eight features at time `t`: raw cpu/gpu/net utilization, arrivals, the
/// `k`-window moving averages of cpu/gpu/net, and position within the daily
/// cycle scaled to [0, 1).
pub fn extract_features<T: Real>(
    trace: &[RawSample<T>],
    t: usize,
    k: usize,
) -> Result<FeatureVector<T>> {
    if k == 0 {
        return Err(Error::precondition("moving-average window must be >= 1"));
    }
    if t >= trace.len() {
        return Err(Error::precondition(format!(
            "time index {t} beyond trace of length {}",
            trace.len()
        )));
    }
    if t + 1 < k {
        return Err(Error::InsufficientHistory {
            needed: k,
            available: t + 1,
        });
    }
    let window = &trace[t + 1 - k..=t];
    let ma = |f: fn(&RawSample<T>) -> T| {
        let series: Vec<T> = window.iter().map(f).collect();
        moving_average(&series, k)
    };
    let s = &trace[t];
    let values = vec![
        s.cpu_util,
        s.gpu_util,
        s.net_util,
        T::from_u32(s.arrivals).unwrap(),
        ma(|s| s.cpu_util)?,
        ma(|s| s.gpu_util)?,
        ma(|s| s.net_util)?,
        T::from_count(s.t % TRACE_PERIOD) / T::from_count(TRACE_PERIOD),
    ];
    Ok(FeatureVector { t: s.t, values })
}

/// Pairs (features at t, demand at t+1) for every t in [k-1, len-2].
pub fn build_dataset<T: Real>(
    trace: &[RawSample<T>],
    k: usize,
    cfg: &ScenarioConfig,
) -> Result<Vec<(FeatureVector<T>, DemandVector<T>)>> {
    if k == 0 {
        return Err(Error::precondition("moving-average window must be >= 1"));
    }
    if trace.len() < k + 1 {
        return Err(Error::InsufficientHistory {
            needed: k + 1,
            available: trace.len(),
        });
    }
    let cpu_total = T::lit(cfg.servers.total_cpu());
    let gpu_total = T::lit(cfg.servers.total_gpu());
    let bw_total = T::from_u32(cfg.bandwidth_units_total).unwrap();
    (k - 1..trace.len() - 1)
        .map(|t| {
            let x = extract_features(trace, t, k)?;
            let next = &trace[t + 1];
            let y = DemandVector {
                cpu_demand: next.cpu_util * cpu_total,
                gpu_demand: next.gpu_util * gpu_total,
                bandwidth_demand: next.net_util * bw_total,
            };
            Ok((x, y))
        })
        .collect()
}

pub fn write_trace_csv<T: Real, W: Write>(trace: &[RawSample<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "cpu_util", "gpu_util", "net_util", "arrivals"])?;
    for s in trace {
        w.write_record([
            s.t.to_string(),
            s.cpu_util.to_string(),
            s.gpu_util.to_string(),
            s.net_util.to_string(),
            s.arrivals.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace csv>", e))?;
    Ok(())
}

pub fn write_dataset_csv<T: Real, W: Write>(
    dataset: &[(FeatureVector<T>, DemandVector<T>)],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..FEATURE_COUNT).map(|j| format!("x{j}")));
    header.extend(["cpu_demand", "gpu_demand", "bandwidth_demand"].map(String::from));
    w.write_record(&header)?;
    for (x, y) in dataset {
        let mut row = vec![x.t.to_string()];
        row.extend(x.values.iter().map(|v| v.to_string()));
        row.extend(y.to_array().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
    Ok(())
}
