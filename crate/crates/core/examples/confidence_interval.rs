//! Delta-method intervals for a vector of two risks computed on the same
//! sample, and for their difference.

use composite_risk::asymptotics::quadratic_form;
use composite_risk::measures::stack_components;
use composite_risk::{
    asymptotic_report, estimate_empirical, make_mean_semideviation, Law, MeasureParams,
};

fn main() -> composite_risk::Result<()> {
    let mild = make_mean_semideviation(&MeasureParams::mean_semideviation(0.2, 2.0))?;
    let strict = make_mean_semideviation(&MeasureParams::mean_semideviation(0.9, 3.0))?;
    let spec = stack_components(&[mild, strict], &[vec![0], vec![0]], 1)?;
    let sample = Law::normal_var(10.0, 3.0).sample(11, 500);
    let est = estimate_empirical(&spec, &sample)?;
    let report = asymptotic_report(&spec, &sample, &est, 0.95)?;
    for (v, ci) in est.value.iter().zip(&report.intervals) {
        println!("{v:.5}  [{:.5}, {:.5}]", ci.lower, ci.upper);
    }
    let var = quadratic_form(&report.limit_cov, &[1.0, -1.0])?;
    let half = 1.96 * (var / sample.n() as f64).sqrt();
    println!("difference {:.5} +- {half:.5}", est.value[0] - est.value[1]);
    Ok(())
}
