//! Scalar minimization of composite objectives and the optimal-value limit.

use serde::Serialize;

use crate::composite::{eval_exact_chain, CompositeSpec, DistributionOracle};
use crate::error::{Error, Result};
use crate::estimators::{estimate_empirical, estimate_mixed, SmoothingPlan};
use crate::sample::Sample;

/// Default absolute tolerance on the minimizer.
pub const DEFAULT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 500;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// A composite functional indexed by a scalar decision `u`.
pub trait ScalarFamily: Sync {
    fn at(&self, u: f64) -> CompositeSpec;
}

impl<F> ScalarFamily for F
where
    F: Fn(f64) -> CompositeSpec + Sync,
{
    fn at(&self, u: f64) -> CompositeSpec {
        self(u)
    }
}

/// How the objective `u -> rho(u)` is evaluated.
#[derive(Clone, Copy)]
pub enum ObjectiveSource<'a> {
    Exact(&'a dyn DistributionOracle),
    Empirical(&'a Sample),
    Mixed(&'a Sample, &'a SmoothingPlan),
}

#[derive(Clone, Copy)]
pub struct ScalarProblem<'a> {
    pub family: &'a dyn ScalarFamily,
    pub bracket: (f64, f64),
    pub source: ObjectiveSource<'a>,
}

impl ScalarProblem<'_> {
    pub fn objective(&self, u: f64) -> Result<f64> {
        let spec = self.family.at(u);
        if spec.output_dim() != 1 {
            return Err(Error::Dimension(format!(
                "objective must be scalar, `{}` has output dimension {}",
                spec.label,
                spec.output_dim()
            )));
        }
        let value = match self.source {
            ObjectiveSource::Exact(oracle) => eval_exact_chain(&spec, oracle)?.value()[0],
            ObjectiveSource::Empirical(sample) => estimate_empirical(&spec, sample)?.value[0],
            ObjectiveSource::Mixed(sample, plan) => estimate_mixed(&spec, sample, plan)?.value[0],
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteObjective(u))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalValueReport {
    pub u_hat: f64,
    /// Optimal value `theta = rho(u_hat)`.
    pub theta: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// The minimizer sits within `2 tol` of a bracket end.
    pub at_boundary: bool,
}

/// Golden-section search on the bracket, then one parabolic step through
/// the final three points, kept only if it lowers the objective.
pub fn minimize_scalar(problem: &ScalarProblem<'_>, tol: f64) -> Result<OptimalValueReport> {
    let (lo, hi) = problem.bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(format!("bracket ({lo}, {hi}) is not an interval")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let f = |u: f64| problem.objective(u);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut evaluations = 2;
    let mut iterations = 0;
    while b - a > tol && iterations < MAX_ITERATIONS {
        iterations += 1;
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
        }
        evaluations += 1;
    }
    let (mut u, mut best) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let (fa, fb) = (f(a)?, f(b)?);
    evaluations += 2;
    for (x, v) in [(a, fa), (b, fb)] {
        if v < best {
            u = x;
            best = v;
        }
    }
    if let Some(v) = parabola_vertex((a, fa), (u, best), (b, fb)) {
        if v > a && v < b && v != u {
            let fv = f(v)?;
            evaluations += 1;
            if fv < best {
                u = v;
                best = fv;
            }
        }
    }
    let at_boundary = u - lo < 2.0 * tol || hi - u < 2.0 * tol;
    Ok(OptimalValueReport {
        u_hat: u,
        theta: best,
        iterations,
        evaluations,
        at_boundary,
    })
}

fn parabola_vertex((a, fa): (f64, f64), (m, fm): (f64, f64), (b, fb): (f64, f64)) -> Option<f64> {
    let p = (m - a) * (m - a) * (fm - fb) - (m - b) * (m - b) * (fm - fa);
    let q = (m - a) * (fm - fb) - (m - b) * (fm - fa);
    if q == 0.0 || !p.is_finite() || !q.is_finite() {
        return None;
    }
    Some(m - 0.5 * p / q)
}

/// Whether the minimum looks flat: more than 1% of an evenly spaced grid of
/// `grid` points over the bracket lies within relative `tol` of `theta`.
/// A flat minimum means `u_hat` is not identified even when `theta` is.
pub fn flatness_check(
    problem: &ScalarProblem<'_>,
    report: &OptimalValueReport,
    grid: usize,
    tol: f64,
) -> Result<bool> {
    if grid < 2 {
        return Err(Error::InvalidParameter(format!("flatness grid needs >= 2 points, got {grid}")));
    }
    let (lo, hi) = problem.bracket;
    let scale = report.theta.abs().max(1.0);
    let mut near = 0usize;
    for i in 0..grid {
        let u = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
        if (problem.objective(u)? - report.theta).abs() <= tol * scale {
            near += 1;
        }
    }
    Ok(near as f64 > 0.01 * grid as f64)
}

/// Limit variance of `sqrt(n) (theta_hat - theta)` for a one-level family
/// with a unique minimizer: `(E d f1/d eta)^2 Var f2(X)` at `u_hat`. For
/// depth-zero members it is `Var f1(X)`.
pub fn optimal_value_clt_variance(
    family: &dyn ScalarFamily,
    oracle: &dyn DistributionOracle,
    u_hat: f64,
) -> Result<f64> {
    let spec = family.at(u_hat);
    if spec.output_dim() != 1 || spec.k() > 1 || spec.signature.dims.iter().any(|&d| d != 1) {
        return Err(Error::Dimension(format!(
            "optimal-value limit needs a scalar family of depth <= 1, got `{}`",
            spec.label
        )));
    }
    let chain = eval_exact_chain(&spec, oracle)?;
    let inner = spec.layer(spec.k() + 1);
    let eta = chain.eta(spec.k() + 1)[0];
    let nodes_owner;
    let nodes = match oracle.nodes() {
        Some(n) => n,
        None => {
            nodes_owner = oracle.draw(0, crate::composite::FALLBACK_DRAWS);
            nodes_owner.nodes().expect("samples always have nodes")
        }
    };
    let var = nodes.expect(1, spec.k() + 1, |x| {
        let d = inner.eval(&[], x)[0] - eta;
        vec![d * d]
    })?[0];
    if var == 0.0 {
        return Ok(0.0);
    }
    if spec.k() == 0 {
        return Ok(var);
    }
    let outer = spec.layer(1);
    let grad = nodes.expect(1, 1, |x| vec![outer.jacobian_or_fd(&[eta], x)[(0, 0)]])?[0];
    if !grad.is_finite() {
        return Err(Error::DegenerateTail);
    }
    Ok(grad * grad * var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::Law;
    use crate::measures::HigherOrderFamily;

    #[test]
    fn quadratic_minimum_is_found() {
        let law = Law::Uniform { a: 0.0, b: 1.0 };
        let oracle = law.oracle().unwrap();
        let fam = HigherOrderFamily { c: 2.0, p: 2.0 };
        let problem = ScalarProblem {
            family: &fam,
            bracket: (0.0, 2.0),
            source: ObjectiveSource::Exact(&oracle),
        };
        let r = minimize_scalar(&problem, DEFAULT_TOL).unwrap();
        assert!((r.u_hat - 2.0 / 3.0).abs() < 1e-4, "{}", r.u_hat);
        assert!(!flatness_check(&problem, &r, 101, 1e-9).unwrap());
        assert!((r.theta - 8.0 / 9.0).abs() < 1e-6, "{}", r.theta);
        assert!(!r.at_boundary);
    }

    #[test]
    fn point_mass_has_zero_limit_variance() {
        let sample = Sample::from_values(&[3.0; 5]).unwrap();
        let fam = HigherOrderFamily { c: 2.0, p: 2.0 };
        assert_eq!(optimal_value_clt_variance(&fam, &sample, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn empty_tail_gives_zero_variance() {
        let sample = Sample::from_values(&[0.0, 1.0, 2.0]).unwrap();
        let fam = HigherOrderFamily { c: 2.0, p: 2.0 };
        let problem = ScalarProblem {
            family: &fam,
            bracket: (0.0, 4.0),
            source: ObjectiveSource::Empirical(&sample),
        };
        let r = minimize_scalar(&problem, DEFAULT_TOL).unwrap();
        assert!(r.u_hat < 2.0);
        // Nothing exceeds u = 2, so f2 vanishes identically.
        assert!(matches!(
            optimal_value_clt_variance(&fam, &Sample::from_values(&[0.0, 2.0]).unwrap(), 2.0),
            Ok(v) if v == 0.0
        ));
    }

    #[test]
    fn bad_brackets_are_rejected() {
        let sample = Sample::from_values(&[0.0, 1.0]).unwrap();
        let fam = HigherOrderFamily { c: 2.0, p: 2.0 };
        let problem = ScalarProblem {
            family: &fam,
            bracket: (1.0, 0.0),
            source: ObjectiveSource::Empirical(&sample),
        };
        assert!(minimize_scalar(&problem, DEFAULT_TOL).is_err());
    }

    #[test]
    fn flat_objective_is_flagged() {
        let sample = Sample::from_values(&[0.0, 1.0]).unwrap();
        let flat = |_u: f64| {
            CompositeSpec::new(
                "flat",
                crate::composite::DimSignature::new(1, vec![1]),
                vec![crate::composite::Layer::innermost(1, 1, |_| vec![1.0])],
            )
        };
        let problem = ScalarProblem {
            family: &flat,
            bracket: (0.0, 1.0),
            source: ObjectiveSource::Empirical(&sample),
        };
        let r = minimize_scalar(&problem, DEFAULT_TOL).unwrap();
        assert!(flatness_check(&problem, &r, 101, 1e-9).unwrap());
    }
}
