//! Forecast-driven joint offloading, transmit-power and bandwidth allocation
//! for heterogeneous (CPU/GPU) edge servers.
//!
//! The pipeline: synthetic workload traces ([`workload`]) feed a
//! feed-forward demand forecaster ([`forecast`]); its prediction reserves
//! background capacity, and the remaining resources are allocated to user
//! tasks by the solvers in [`allocator`] against the delay-plus-energy cost
//! model of [`sysmodel`]. [`harness`] runs whole experiments and writes
//! reports.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix it to `f64`, which the harness uses throughout.

pub mod allocator;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod scalar;
pub mod search;
pub mod sysmodel;
pub mod workload;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Task = sysmodel::TaskSpec<f64>;
pub type Server = sysmodel::ServerSpec<f64>;
pub type Costs = sysmodel::CostParams<f64>;
pub type Cost = sysmodel::CostBreakdown<f64>;
pub type Sample = workload::RawSample<f64>;
pub type Features = workload::FeatureVector<f64>;
pub type Demand = workload::DemandVector<f64>;
pub type Network = forecast::NetworkParams<f64>;
pub type Instance = allocator::ProblemInstance<f64>;
pub type Solution = allocator::SolveResult<f64>;
pub type Decision = allocator::TaskDecision<f64>;

pub type Task32 = sysmodel::TaskSpec<f32>;
pub type Network32 = forecast::NetworkParams<f32>;
pub type Instance32 = allocator::ProblemInstance<f32>;
