//! Replication study of the difference of two higher-order risks on
//! independent samples, against its normal limit.

use composite_risk::harness::{reference_for, PlanConfig};
use composite_risk::{
    run_replications, summarize_distribution, BandwidthSchedule, KernelFamily, Law, MeasureConfig,
    ReplicationConfig, Statistic,
};

fn main() -> composite_risk::Result<()> {
    let measure = MeasureConfig::HigherOrder { c: 20.0, p: 2.0 };
    let config = ReplicationConfig {
        statistic: Statistic::Difference {
            first: measure.clone(),
            second: measure,
        },
        laws: vec![Law::normal_var(10.0, 3.0), Law::normal_var(20.0, 5.0)],
        n: 200,
        replications: 200,
        seed: 1,
        plan: Some(PlanConfig::new(KernelFamily::Uniform, BandwidthSchedule::Silverman)),
    };
    let reference = reference_for(&config)?;
    let table = run_replications(&config, 4)?;
    let summary = summarize_distribution(&table.estimates, &reference, Some(20))?;
    println!(
        "exact difference {:.5}, limit std {:.4}",
        reference.mean,
        reference.variance.sqrt()
    );
    println!(
        "simulated mean {:.5}, std {:.4}, KS {:.4}",
        summary.mean,
        summary.std,
        summary.ks.unwrap_or(f64::NAN)
    );
    Ok(())
}
