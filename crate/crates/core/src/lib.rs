//! Nested composite risk functionals
//! `rho = E[f_1(E[f_2(... E[f_{k+1}(X)] ..., X)], X)]`.
//!
//! * [`composite`] holds layer specifications, exact chain evaluation and
//!   directional derivatives.
//! * [`estimators`] computes empirical, kernel-smoothed and mixed plug-in
//!   estimates.
//! * [`asymptotics`] gives delta-method covariances and confidence intervals.
//! * [`measures`] builds mean–semideviation, higher-order and systemic measures.
//! * [`optimize`] minimizes over a scalar decision and gives the optimal-value limit.
//! * [`harness`] runs seeded replication studies.
//!
//! ```
//! use composite_risk::{estimate_empirical, make_mean_semideviation, MeasureParams, Sample};
//!
//! let spec = make_mean_semideviation(&MeasureParams::mean_semideviation(0.5, 2.0)).unwrap();
//! let sample = Sample::from_values(&[0.0, 2.0]).unwrap();
//! let est = estimate_empirical(&spec, &sample).unwrap();
//! assert!((est.value[0] - (1.0 + 0.5 * 0.5f64.sqrt())).abs() < 1e-15);
//! ```

pub mod asymptotics;
pub mod composite;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod law;
pub mod measures;
pub mod optimize;
pub mod quadrature;
pub mod sample;

pub use asymptotics::{
    asymptotic_report, chain_matrices, confidence_interval, limit_covariance, plugin_sigma,
    AsymptoticReport, Interval, SigmaEstimate,
};
pub use composite::{
    eval_exact_chain, propagate_direction, validate_spec, CompositeSpec, DimSignature, Direction,
    DistributionOracle, EtaChain, Layer, PowerMax,
};
pub use error::{Error, Result};
pub use estimators::{
    bandwidth, check_strong_identity, estimate_empirical, estimate_mixed, uniform_kernel_powermax,
    BandwidthSchedule, EstimateReport, KernelFamily, KernelSpec, SmoothingPlan,
};
pub use harness::{
    run_replications, summarize_distribution, NormalReference, ReplicationConfig, ReplicationTable,
    Statistic,
};
pub use law::Law;
pub use measures::{
    make_higher_order_family, make_mean_semideviation, make_portfolio_semideviation,
    systemic_limit, systemic_value, Aggregation, MeasureConfig, MeasureParams, OuterMeasure,
    SystemicSpec,
};
pub use optimize::{
    minimize_scalar, optimal_value_clt_variance, ObjectiveSource, ScalarFamily, ScalarProblem,
};
pub use sample::Sample;
