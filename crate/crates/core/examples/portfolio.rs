//! Mean–semideviation of portfolio returns over a grid of allocations.

use composite_risk::{
    estimate_empirical, eval_exact_chain, make_portfolio_semideviation, Law, MeasureParams,
};

fn main() -> composite_risk::Result<()> {
    let family = make_portfolio_semideviation(&MeasureParams::mean_semideviation(0.5, 2.0), 2)?;
    let law = Law::Product {
        factors: vec![Law::normal_var(1.0, 0.5), Law::normal_var(2.0, 4.0)],
    };
    let oracle = law.oracle()?;
    let sample = law.sample(5, 1000);
    for i in 0..=4 {
        let w = i as f64 / 4.0;
        let spec = family.at(&[1.0 - w, w])?;
        let exact = eval_exact_chain(&spec, &oracle)?.value()[0];
        let est = estimate_empirical(&spec, &sample)?.value[0];
        println!("weight {w:.2} on the second asset: exact {exact:.5}, n = 1000 {est:.5}");
    }
    Ok(())
}
