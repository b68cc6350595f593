//! Exact layer means of a mean–semideviation measure and the effect of a
//! unit perturbation of the innermost layer.

use composite_risk::{
    chain_matrices, eval_exact_chain, make_mean_semideviation, propagate_direction, Direction,
    Law, MeasureParams,
};

fn main() -> composite_risk::Result<()> {
    let spec = make_mean_semideviation(&MeasureParams::mean_semideviation(0.5, 2.0))?;
    let oracle = Law::normal_var(10.0, 3.0).oracle()?;
    let chain = eval_exact_chain(&spec, &oracle)?;
    for j in 1..=3 {
        println!("eta_{j} = {:.6}", chain.eta(j)[0]);
    }

    let dir = Direction::unit(&spec.signature, 3, 0);
    let xi = propagate_direction(&spec, &chain, &oracle, &dir)?;
    let chains = chain_matrices(&spec, &oracle, &chain, false)?;
    println!("xi_1 for a shift of the mean: {:.6}", xi[0]);
    println!("C_2^T from the chain matrices:  {:.6}", chains.c_transposed[1][(0, 0)]);
    Ok(())
}
