//! Systemic risk of two higher-order components aggregated by a
//! mean–semideviation outer measure, with its sampled limit law.

use composite_risk::harness::statistic_limit;
use composite_risk::{DistributionOracle, Law, MeasureConfig, OuterMeasure, Statistic};

fn main() -> composite_risk::Result<()> {
    let component = MeasureConfig::HigherOrder { c: 20.0, p: 2.0 };
    let statistic = Statistic::Single {
        measure: MeasureConfig::Systemic {
            components: vec![component.clone(), component],
            weights: vec![0.5, 0.5],
            outer: OuterMeasure::MeanSemideviation { kappa: 0.5, p: 2.0 },
        },
    };
    let x = Law::normal_var(10.0, 3.0).oracle()?;
    let y = Law::normal_var(20.0, 5.0).oracle()?;
    let oracles: Vec<&dyn DistributionOracle> = vec![&x, &y];
    let limit = statistic_limit(&statistic, &oracles)?;
    println!("systemic value {:.5}", limit.value);
    println!("limit variance {:.3}", limit.limit_variance);
    if let Some(s) = &limit.systemic {
        for (q, v) in &s.quantiles {
            println!("  {:>4.0}% quantile {v:.3}", 100.0 * q);
        }
    }
    Ok(())
}
