//! Concrete risk functionals and systemic aggregation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::asymptotics::repair_psd;
use crate::composite::{CompositeSpec, DimSignature, Layer, LipschitzBound, PowerMax};
use crate::error::{Error, Result};
use crate::law::{counter_unit, std_normal_quantile};
use crate::optimize::ScalarFamily;

/// Parameters shared by the shipped measures. Each factory reads the fields
/// it needs and validates only those.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureParams {
    /// Semideviation weight, in `[0, 1]`.
    pub kappa: f64,
    /// Norm order, `> 1`.
    pub p: f64,
    /// Tail scale `c = 1/alpha > 1` of the higher-order measure.
    pub c: f64,
    /// Aggregation weights for systemic measures.
    pub weights: Option<Vec<f64>>,
    pub labels: Vec<String>,
}

impl Default for MeasureParams {
    fn default() -> Self {
        MeasureParams {
            kappa: 0.5,
            p: 2.0,
            c: 2.0,
            weights: None,
            labels: Vec::new(),
        }
    }
}

impl MeasureParams {
    pub fn mean_semideviation(kappa: f64, p: f64) -> Self {
        MeasureParams {
            kappa,
            p,
            ..Default::default()
        }
    }

    pub fn higher_order(c: f64, p: f64) -> Self {
        MeasureParams {
            c,
            p,
            ..Default::default()
        }
    }

    fn check_kappa(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.kappa) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("kappa must lie in [0, 1], got {}", self.kappa)))
        }
    }

    fn check_p(&self, allow_one: bool) -> Result<()> {
        let ok = self.p.is_finite() && (self.p > 1.0 || (allow_one && self.p == 1.0));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("p must be > 1, got {}", self.p)))
        }
    }

    fn check_c(&self) -> Result<()> {
        if self.c > 1.0 && self.c.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("c must be > 1, got {}", self.c)))
        }
    }
}

pub fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidParameter("weights must be non-empty".into()));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "weights must be nonnegative and sum to 1, got {weights:?}"
        )));
    }
    Ok(())
}

/// Mean–semideviation `E[X] + kappa ||(E[X] - X)_+||_p` as a three-layer
/// composite: `f1 = x + kappa eta^{1/p}`, `f2 = (eta - x)_+^p`, `f3 = x`.
pub fn make_mean_semideviation(params: &MeasureParams) -> Result<CompositeSpec> {
    params.check_kappa()?;
    params.check_p(false)?;
    let (kappa, p) = (params.kappa, params.p);
    let f1 = Layer::scalar(1, move |eta, x| x[0] + kappa * eta.powf(1.0 / p))
        .with_scalar_derivative(move |eta, _| kappa / p * eta.powf(1.0 / p - 1.0))
        .with_lipschitz(LipschitzBound {
            constant: 1.0,
            growth_order: 0.0,
        })
        .with_domain(vec![(1e-3, 1e3)]);
    let f2 = Layer::scalar(2, move |eta, x| (eta - x[0]).max(0.0).powf(p))
        .with_scalar_derivative(move |eta, x| p * (eta - x[0]).max(0.0).powf(p - 1.0))
        .with_lipschitz(LipschitzBound {
            constant: 2f64.powf(p) * p,
            growth_order: p - 1.0,
        })
        .with_power_max(PowerMax {
            scale: -1.0,
            p,
            threshold: Arc::new(|eta| -eta[0]),
        })
        .with_domain(vec![(-1e3, 1e3)]);
    let f3 = Layer::innermost(3, 1, |x| vec![x[0]]).with_lipschitz(LipschitzBound {
        constant: 1.0,
        growth_order: 0.0,
    });
    Ok(CompositeSpec::new(
        format!("mean_semideviation(kappa={kappa}, p={p})"),
        DimSignature::new(1, vec![1, 1, 1]),
        vec![f1, f2, f3],
    ))
}

/// `u -> (u + c eta^{1/p}, (x - u)_+^p)`; its minimum over `u` is the
/// higher-order inverse risk measure `min_u { u + c ||(X - u)_+||_p }`.
///
/// For `p = 1` no composition is needed and each member is the single
/// expectation `E[u + c (X - u)_+]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HigherOrderFamily {
    pub c: f64,
    pub p: f64,
}

pub fn make_higher_order_family(params: &MeasureParams) -> Result<HigherOrderFamily> {
    params.check_c()?;
    params.check_p(true)?;
    Ok(HigherOrderFamily {
        c: params.c,
        p: params.p,
    })
}

impl HigherOrderFamily {
    /// `[min X, max X + c IQR]`, widened when the sample is constant.
    pub fn default_bracket(&self, values: &[f64]) -> (f64, f64) {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let top = hi + self.c * iqr;
        if top - lo < 1e-9 {
            (lo - 1.0, top + 1.0)
        } else {
            (lo, top)
        }
    }
}

impl ScalarFamily for HigherOrderFamily {
    fn at(&self, u: f64) -> CompositeSpec {
        let (c, p) = (self.c, self.p);
        let label = format!("higher_order(c={c}, p={p}, u={u})");
        if p == 1.0 {
            return CompositeSpec::new(
                label,
                DimSignature::new(1, vec![1]),
                vec![Layer::innermost(1, 1, move |x| vec![u + c * (x[0] - u).max(0.0)])],
            );
        }
        let f1 = Layer::scalar(1, move |eta, _| u + c * eta.powf(1.0 / p))
            .with_scalar_derivative(move |eta, _| c / p * eta.powf(1.0 / p - 1.0))
            .with_domain(vec![(1e-3, 1e3)]);
        let f2 = Layer::innermost(2, 1, move |x| vec![(x[0] - u).max(0.0).powf(p)])
            .with_power_max(PowerMax {
                scale: 1.0,
                p,
                threshold: Arc::new(move |_| u),
            })
            .with_lipschitz(LipschitzBound {
                constant: 2f64.powf(p) * p,
                growth_order: p - 1.0,
            });
        CompositeSpec::new(label, DimSignature::new(1, vec![1, 1]), vec![f1, f2])
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// Mean–semideviation of portfolio returns `u^T X`:
/// `f1 = -u^T x + kappa eta^{1/p}`, `f2 = (eta - u^T x)_+^p`, `f3 = u^T x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioFamily {
    pub kappa: f64,
    pub p: f64,
    pub m: usize,
}

pub fn make_portfolio_semideviation(params: &MeasureParams, m: usize) -> Result<PortfolioFamily> {
    params.check_kappa()?;
    params.check_p(false)?;
    if m == 0 {
        return Err(Error::InvalidParameter("portfolio dimension must be >= 1".into()));
    }
    Ok(PortfolioFamily {
        kappa: params.kappa,
        p: params.p,
        m,
    })
}

impl PortfolioFamily {
    pub fn at(&self, allocation: &[f64]) -> Result<CompositeSpec> {
        if allocation.len() != self.m {
            return Err(Error::Dimension(format!(
                "allocation has {} entries, portfolio has {} assets",
                allocation.len(),
                self.m
            )));
        }
        if allocation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("allocation must be finite".into()));
        }
        let (kappa, p) = (self.kappa, self.p);
        let u: Arc<[f64]> = allocation.into();
        let dot = move |u: &[f64], x: &[f64]| u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let (u1, u2, u3, u4) = (u.clone(), u.clone(), u.clone(), u.clone());
        let f1 = Layer::scalar(1, move |eta, x| -dot(&u1, x) + kappa * eta.powf(1.0 / p))
            .with_scalar_derivative(move |eta, _| kappa / p * eta.powf(1.0 / p - 1.0))
            .with_domain(vec![(1e-3, 1e3)]);
        let mut f2 = Layer::scalar(2, move |eta, x| (eta - dot(&u2, x)).max(0.0).powf(p))
            .with_scalar_derivative(move |eta, x| p * (eta - dot(&u3, x)).max(0.0).powf(p - 1.0))
            .with_domain(vec![(-1e3, 1e3)]);
        if self.m == 1 {
            f2 = f2.with_power_max(PowerMax {
                scale: -u[0],
                p,
                threshold: Arc::new(|eta| -eta[0]),
            });
        }
        let f3 = Layer::innermost(3, 1, move |x| vec![dot(&u4, x)]);
        Ok(CompositeSpec::new(
            format!("portfolio_semideviation(kappa={kappa}, p={p})"),
            DimSignature::new(self.m, vec![1, 1, 1]),
            vec![f1, f2, f3],
        ))
    }
}

/// Outer aggregation of component risks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OuterMeasure {
    /// `<c, rho>`.
    Linear,
    /// Mean–semideviation on the finite space with probabilities `c`.
    MeanSemideviation { kappa: f64, p: f64 },
}

/// Weights plus outer measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub weights: Vec<f64>,
    pub outer: OuterMeasure,
}

impl Aggregation {
    pub fn new(weights: Vec<f64>, outer: OuterMeasure) -> Result<Self> {
        check_weights(&weights)?;
        if let OuterMeasure::MeanSemideviation { kappa, p } = outer {
            if !(0.0..=1.0).contains(&kappa) || !(p >= 1.0 && p.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "outer mean-semideviation needs kappa in [0, 1] and p >= 1, got ({kappa}, {p})"
                )));
            }
        }
        Ok(Aggregation { weights, outer })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Components padded to one depth plus their aggregation.
#[derive(Debug, Clone)]
pub struct SystemicSpec {
    pub components: Vec<CompositeSpec>,
    pub aggregation: Aggregation,
}

impl SystemicSpec {
    /// Pads every component with identity layers to the largest depth.
    pub fn new(components: Vec<CompositeSpec>, aggregation: Aggregation) -> Result<Self> {
        if components.len() != aggregation.len() {
            return Err(Error::Dimension(format!(
                "{} components but {} weights",
                components.len(),
                aggregation.len()
            )));
        }
        if let Some(c) = components.iter().find(|c| c.output_dim() != 1) {
            return Err(Error::Dimension(format!(
                "component `{}` is not scalar-valued",
                c.label
            )));
        }
        let depth = components.iter().map(CompositeSpec::k).max().unwrap_or(0);
        let components = components
            .iter()
            .map(|c| c.padded_to_depth(depth))
            .collect::<Result<Vec<_>>>()?;
        Ok(SystemicSpec {
            components,
            aggregation,
        })
    }

    pub fn depth(&self) -> usize {
        self.components.first().map(CompositeSpec::k).unwrap_or(0)
    }
}

/// `rho_sys = <c, rho> + kappa (sum_i c_i (rho_i - <c, rho>)_+^p)^{1/p}`, or
/// `<c, rho>` for the linear outer measure.
pub fn systemic_value(estimates: &[f64], aggregation: &Aggregation) -> Result<f64> {
    if estimates.len() != aggregation.len() {
        return Err(Error::Dimension(format!(
            "{} component risks but {} weights",
            estimates.len(),
            aggregation.len()
        )));
    }
    Ok(aggregate(estimates, aggregation))
}

fn aggregate(rho: &[f64], agg: &Aggregation) -> f64 {
    let mean: f64 = agg.weights.iter().zip(rho).map(|(c, r)| c * r).sum();
    match agg.outer {
        OuterMeasure::Linear => mean,
        OuterMeasure::MeanSemideviation { kappa, p } => {
            let tail: f64 = agg
                .weights
                .iter()
                .zip(rho)
                .map(|(c, r)| c * (r - mean).max(0.0).powf(p))
                .sum();
            mean + kappa * tail.powf(1.0 / p)
        }
    }
}

/// Directional derivative of the aggregation at `rho` along `xi`.
///
/// The linear case is exact; otherwise a forward difference with step
/// `1e-6 max(1, |rho|_inf)` along `xi / |xi|_inf`.
pub fn aggregation_directional_derivative(rho: &[f64], xi: &[f64], agg: &Aggregation) -> f64 {
    match agg.outer {
        OuterMeasure::Linear => agg.weights.iter().zip(xi).map(|(c, v)| c * v).sum(),
        OuterMeasure::MeanSemideviation { .. } => {
            let scale = xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if scale == 0.0 {
                return 0.0;
            }
            let t = 1e-6 * rho.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            let moved: Vec<f64> = rho.iter().zip(xi).map(|(r, v)| r + t * v / scale).collect();
            scale * (aggregate(&moved, agg) - aggregate(rho, agg)) / t
        }
    }
}

/// Quantiles, mean and variance of a sampled limit law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitSummary {
    /// `(level, value)` at 5%, 25%, 50%, 75% and 95%.
    pub quantiles: Vec<(f64, f64)>,
    pub mean: f64,
    pub variance: f64,
    pub draws: usize,
}

pub const SUMMARY_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Sample the limit `rho_sys'(rho; xi)` with `xi ~ N(0, limit_cov)`.
///
/// Draw `d` uses the counter-based normals `(seed, d * l + j)`, so the
/// result does not depend on how draws are scheduled.
pub fn systemic_limit(
    aggregation: &Aggregation,
    risks: &[f64],
    limit_cov: &DMatrix<f64>,
    draws: usize,
    seed: u64,
) -> Result<LimitSummary> {
    let l = aggregation.len();
    if risks.len() != l || limit_cov.shape() != (l, l) {
        return Err(Error::Dimension(format!(
            "need {l} risks and an {l}x{l} covariance, got {} and {:?}",
            risks.len(),
            limit_cov.shape()
        )));
    }
    if draws < 2 {
        return Err(Error::InsufficientSample { n: draws, required: 2 });
    }
    let cov = repair_psd(limit_cov.clone())?;
    let eig = SymmetricEigen::new(cov);
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let values: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let z = DVector::from_iterator(
                l,
                (0..l).map(|j| std_normal_quantile(counter_unit(seed, (d * l + j) as u64))),
            );
            let xi = &root * z;
            aggregation_directional_derivative(risks, xi.as_slice(), aggregation)
        })
        .collect();
    Ok(summarize_draws(values))
}

fn summarize_draws(mut values: Vec<f64>) -> LimitSummary {
    let n = values.len();
    let mean = crate::quadrature::pairwise_sum(&values) / n as f64;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let variance = crate::quadrature::pairwise_sum(&sq) / (n as f64 - 1.0);
    values.sort_by(|a, b| a.total_cmp(b));
    LimitSummary {
        quantiles: SUMMARY_LEVELS
            .iter()
            .map(|&q| (q, quantile_sorted(&values, q)))
            .collect(),
        mean,
        variance,
        draws: n,
    }
}

/// One vector-valued composite from scalar components evaluated on the same
/// observations. Component `i` reads coordinates `coords[i]` of `X`.
///
/// Components are padded to a common depth; layer `j` of the result
/// concatenates the `j`-th layers, so its Jacobian is block diagonal.
pub fn stack_components(
    components: &[CompositeSpec],
    coords: &[Vec<usize>],
    m: usize,
) -> Result<CompositeSpec> {
    if components.is_empty() || components.len() != coords.len() {
        return Err(Error::Dimension("need one coordinate list per component".into()));
    }
    for (c, idx) in components.iter().zip(coords) {
        if idx.len() != c.m() || idx.iter().any(|&i| i >= m) {
            return Err(Error::Dimension(format!(
                "component `{}` needs {} coordinates within 0..{m}",
                c.label,
                c.m()
            )));
        }
    }
    let depth = components.iter().map(CompositeSpec::k).max().unwrap_or(0);
    let padded: Vec<CompositeSpec> = components
        .iter()
        .map(|c| c.padded_to_depth(depth))
        .collect::<Result<_>>()?;
    let padded = Arc::new(padded);
    let coords: Arc<Vec<Vec<usize>>> = Arc::new(coords.to_vec());
    let mut dims = vec![0usize; depth + 1];
    for c in padded.iter() {
        for (d, cd) in dims.iter_mut().zip(&c.signature.dims) {
            *d += cd;
        }
    }
    let mut layers = Vec::with_capacity(depth + 1);
    for j in 1..=depth + 1 {
        let eta_dims: Vec<usize> = padded.iter().map(|c| c.layer(j).eta_dim).collect();
        let out_dims: Vec<usize> = padded.iter().map(|c| c.layer(j).out_dim).collect();
        let eta_total: usize = eta_dims.iter().sum();
        let out_total: usize = out_dims.iter().sum();
        let (pe, ce, ed) = (padded.clone(), coords.clone(), eta_dims.clone());
        let mut layer = Layer::new(j, eta_total, out_total, move |eta, x| {
            let mut out = Vec::with_capacity(out_total);
            let mut at = 0;
            for ((c, idx), &d) in pe.iter().zip(ce.iter()).zip(&ed) {
                let xi: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
                out.extend(c.layer(j).eval(&eta[at..at + d], &xi));
                at += d;
            }
            out
        });
        if j <= depth {
            let (pj, cj) = (padded.clone(), coords.clone());
            let (ed, od) = (eta_dims, out_dims);
            layer = layer.with_jacobian(move |eta, x| {
                let mut jac = DMatrix::zeros(out_total, eta_total);
                let (mut r, mut at) = (0, 0);
                for (i, (c, idx)) in pj.iter().zip(cj.iter()).enumerate() {
                    let xi: Vec<f64> = idx.iter().map(|&v| x[v]).collect();
                    let block = c.layer(j).jacobian_or_fd(&eta[at..at + ed[i]], &xi);
                    jac.view_mut((r, at), (od[i], ed[i])).copy_from(&block);
                    r += od[i];
                    at += ed[i];
                }
                jac
            });
        }
        layers.push(layer);
    }
    let label = padded
        .iter()
        .map(|c| c.label.as_str())
        .collect::<Vec<_>>()
        .join(" ++ ");
    Ok(CompositeSpec::new(label, DimSignature::new(m, dims), layers))
}

/// Declarative measure configuration, as read by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureConfig {
    /// Plain expectation `E[X_1]`.
    Mean,
    MeanSemideviation { kappa: f64, p: f64 },
    /// Optimized higher-order measure.
    HigherOrder { c: f64, p: f64 },
    Portfolio { kappa: f64, p: f64, allocation: Vec<f64> },
    Systemic {
        components: Vec<MeasureConfig>,
        weights: Vec<f64>,
        outer: OuterMeasure,
    },
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            MeasureConfig::Mean => Ok(()),
            MeasureConfig::MeanSemideviation { kappa, p } => {
                make_mean_semideviation(&MeasureParams::mean_semideviation(*kappa, *p)).map(|_| ())
            }
            MeasureConfig::HigherOrder { c, p } => {
                make_higher_order_family(&MeasureParams::higher_order(*c, *p)).map(|_| ())
            }
            MeasureConfig::Portfolio { kappa, p, allocation } => {
                make_portfolio_semideviation(&MeasureParams::mean_semideviation(*kappa, *p), allocation.len())?
                    .at(allocation)
                    .map(|_| ())
            }
            MeasureConfig::Systemic {
                components,
                weights,
                outer,
            } => {
                Aggregation::new(weights.clone(), *outer)?;
                if components.len() != weights.len() {
                    return Err(Error::InvalidParameter(format!(
                        "{} components but {} weights",
                        components.len(),
                        weights.len()
                    )));
                }
                for c in components {
                    if matches!(c, MeasureConfig::Systemic { .. }) {
                        return Err(Error::InvalidParameter("systemic measures do not nest".into()));
                    }
                    c.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Default smoothed layers: the power-max layer where there is one.
    pub fn default_smoothed_layers(&self) -> Vec<usize> {
        match self {
            MeasureConfig::Mean => vec![1],
            _ => vec![2],
        }
    }

    /// Norm order used for kernel moments.
    pub fn moment_order(&self) -> f64 {
        match self {
            MeasureConfig::MeanSemideviation { p, .. }
            | MeasureConfig::HigherOrder { p, .. }
            | MeasureConfig::Portfolio { p, .. } => *p,
            _ => 2.0,
        }
    }

    /// Composite spec for the non-optimized measures.
    pub fn composite(&self) -> Result<Option<CompositeSpec>> {
        Ok(match self {
            MeasureConfig::Mean => Some(CompositeSpec::new(
                "mean",
                DimSignature::new(1, vec![1]),
                vec![Layer::innermost(1, 1, |x| vec![x[0]])],
            )),
            MeasureConfig::MeanSemideviation { kappa, p } => Some(make_mean_semideviation(
                &MeasureParams::mean_semideviation(*kappa, *p),
            )?),
            MeasureConfig::Portfolio { kappa, p, allocation } => Some(
                make_portfolio_semideviation(&MeasureParams::mean_semideviation(*kappa, *p), allocation.len())?
                    .at(allocation)?,
            ),
            MeasureConfig::HigherOrder { .. } | MeasureConfig::Systemic { .. } => None,
        })
    }

    /// Observation dimension the measure reads.
    pub fn dim(&self) -> usize {
        match self {
            MeasureConfig::Portfolio { allocation, .. } => allocation.len(),
            _ => 1,
        }
    }
}
