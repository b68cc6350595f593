//! Minimizer and optimal value of the higher-order measure with `c = 20`,
//! `p = 2`, exactly and from one sample.

use composite_risk::{
    make_higher_order_family, minimize_scalar, optimal_value_clt_variance, Law, MeasureParams,
    ObjectiveSource, ScalarProblem,
};

fn main() -> composite_risk::Result<()> {
    let family = make_higher_order_family(&MeasureParams::higher_order(20.0, 2.0))?;
    let law = Law::normal_var(10.0, 3.0);
    let oracle = law.oracle()?;
    let exact = minimize_scalar(
        &ScalarProblem {
            family: &family,
            bracket: (0.0, 60.0),
            source: ObjectiveSource::Exact(&oracle),
        },
        1e-8,
    )?;
    let v = optimal_value_clt_variance(&family, &oracle, exact.u_hat)?;
    println!("exact:     u = {:.6}, theta = {:.6}, limit std {:.4}", exact.u_hat, exact.theta, v.sqrt());

    let sample = law.sample(3, 200);
    let bracket = family.default_bracket(&sample.column(0));
    let fit = minimize_scalar(
        &ScalarProblem {
            family: &family,
            bracket,
            source: ObjectiveSource::Empirical(&sample),
        },
        1e-8,
    )?;
    println!("n = 200:   u = {:.6}, theta = {:.6}", fit.u_hat, fit.theta);
    Ok(())
}
