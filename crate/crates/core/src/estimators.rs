//! Plug-in estimators: empirical, kernel-smoothed and mixed per layer.
//!
//! A smoothed layer `j` replaces the empirical mean of `f_j(eta, X_i)` by
//! `(1/n) sum_i E_Z[f_j(eta, X_i + h_n Z)]` with `Z ~ K`. Layers tagged as
//! power-max forms use the closed form of the uniform kernel; all other
//! layers integrate over a tensor Gauss rule for the kernel.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::composite::{
    chain_on_nodes, ensure_valid, CompositeSpec, DistributionOracle, EtaChain, Layer,
};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, gauss_legendre_on, pairwise_sum, standard_normal_rule};
use crate::sample::Sample;

/// Default nodes per dimension for kernel convolution.
pub const DEFAULT_CONVOLUTION_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `1/2` on `[-1, 1]`.
    Uniform,
    /// Standard normal density.
    Gaussian,
    /// `3/4 (1 - y^2)` on `[-1, 1]`.
    Epanechnikov,
}

impl KernelFamily {
    fn density_1d(self, y: f64) -> f64 {
        match self {
            KernelFamily::Uniform => {
                if y.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelFamily::Gaussian => crate::law::std_normal_pdf(y),
            KernelFamily::Epanechnikov => {
                if y.abs() <= 1.0 {
                    0.75 * (1.0 - y * y)
                } else {
                    0.0
                }
            }
        }
    }

    /// `int |y|^q K(y) dy` in one dimension.
    fn abs_moment_1d(self, q: f64) -> f64 {
        match self {
            KernelFamily::Uniform => 1.0 / (q + 1.0),
            KernelFamily::Gaussian => {
                2f64.powf(q / 2.0) * gamma((q + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
            }
            KernelFamily::Epanechnikov => 3.0 / ((q + 1.0) * (q + 3.0)),
        }
    }

    /// Rule for `E[g(Z)]`, `Z ~ K`, in one dimension.
    fn rule_1d(self, nodes: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            KernelFamily::Uniform => {
                let r = gauss_legendre(nodes);
                (r.nodes, r.weights.iter().map(|w| 0.5 * w).collect())
            }
            KernelFamily::Epanechnikov => {
                let r = gauss_legendre(nodes);
                let w = r
                    .nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(y, w)| w * 0.75 * (1.0 - y * y))
                    .collect();
                (r.nodes, w)
            }
            KernelFamily::Gaussian => {
                let r = standard_normal_rule(nodes);
                (r.nodes, r.weights)
            }
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Uniform => "uniform",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Epanechnikov => "epanechnikov",
        })
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(KernelFamily::Uniform),
            "gaussian" => Ok(KernelFamily::Gaussian),
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            other => Err(Error::InvalidParameter(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Product kernel on `R^m` with its absolute moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dim: usize,
    pub moment_order: f64,
    /// `m_1(K) = int |y| K(y) dy`.
    pub m1: f64,
    /// `m_p(K) = int |y|^p K(y) dy`.
    pub mp: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dim: usize, moment_order: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("kernel dimension must be >= 1".into()));
        }
        if !(moment_order >= 1.0 && moment_order.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel moment order must be >= 1, got {moment_order}"
            )));
        }
        let mut k = KernelSpec {
            family,
            dim,
            moment_order,
            m1: 0.0,
            mp: 0.0,
        };
        k.m1 = k.abs_moment(1.0);
        k.mp = k.abs_moment(moment_order);
        Ok(k)
    }

    /// Product density `prod_i K(y_i)`.
    pub fn density(&self, y: &[f64]) -> f64 {
        y.iter().map(|&v| self.family.density_1d(v)).product()
    }

    /// `int ||y||^q K(y) dy` with the Euclidean norm.
    pub fn abs_moment(&self, q: f64) -> f64 {
        if self.dim == 1 {
            return self.family.abs_moment_1d(q);
        }
        let m = self.dim as f64;
        match self.family {
            // ||Z||^2 is chi-square with m degrees of freedom.
            KernelFamily::Gaussian => 2f64.powf(q / 2.0) * gamma((m + q) / 2.0) / gamma(m / 2.0),
            KernelFamily::Uniform | KernelFamily::Epanechnikov => {
                // Split each axis at zero so the integrand is smooth per cell.
                let left = gauss_legendre_on(24, -1.0, 0.0);
                let right = gauss_legendre_on(24, 0.0, 1.0);
                let mut nodes = left.nodes;
                nodes.extend(right.nodes);
                let mut weights = left.weights;
                weights.extend(right.weights);
                let weights: Vec<f64> = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(y, w)| w * self.family.density_1d(*y))
                    .collect();
                tensor_sum(&nodes, &weights, self.dim, |y| {
                    y.iter().map(|v| v * v).sum::<f64>().powf(q / 2.0)
                })
            }
        }
    }

    /// Tensor rule for `E[g(Z)]` with `Z ~ K`, `nodes` points per axis.
    pub fn convolution_rule(&self, nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if nodes < 3 {
            return Err(Error::TooFewNodes(nodes));
        }
        let (n1, w1) = self.family.rule_1d(nodes);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let total = nodes.pow(self.dim as u32);
        let mut idx = vec![0usize; self.dim];
        for _ in 0..total {
            let mut w = 1.0;
            for &i in &idx {
                points.push(n1[i]);
                w *= w1[i];
            }
            weights.push(w);
            for d in (0..self.dim).rev() {
                idx[d] += 1;
                if idx[d] < nodes {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok((points, weights))
    }
}

fn tensor_sum(nodes: &[f64], weights: &[f64], dim: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let n = nodes.len();
    let mut idx = vec![0usize; dim];
    let mut y = vec![0.0; dim];
    let mut terms = Vec::with_capacity(n.pow(dim as u32));
    loop {
        let mut w = 1.0;
        for (d, &i) in idx.iter().enumerate() {
            y[d] = nodes[i];
            w *= weights[i];
        }
        terms.push(w * f(&y));
        let mut d = dim;
        loop {
            if d == 0 {
                return pairwise_sum(&terms);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthSchedule {
    /// `h_n = 1.06 sigma n^{-1/5}`.
    Silverman,
    /// `h_n = a n^{-gamma}`.
    Power { a: f64, gamma: f64 },
}

impl BandwidthSchedule {
    /// Rate exponent `gamma` of `h_n ~ n^{-gamma}`.
    pub fn decay_exponent(&self) -> f64 {
        match self {
            BandwidthSchedule::Silverman => 0.2,
            BandwidthSchedule::Power { gamma, .. } => *gamma,
        }
    }
}

impl fmt::Display for BandwidthSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthSchedule::Silverman => f.write_str("silverman"),
            BandwidthSchedule::Power { a, gamma } => write!(f, "power:{a},{gamma}"),
        }
    }
}

/// Parses `silverman` or `power:A,GAMMA`.
impl std::str::FromStr for BandwidthSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "silverman" {
            return Ok(BandwidthSchedule::Silverman);
        }
        let rest = s
            .strip_prefix("power:")
            .ok_or_else(|| Error::InvalidParameter(format!("unknown bandwidth rule `{s}`")))?;
        let (a, g) = rest
            .split_once(',')
            .ok_or_else(|| Error::InvalidParameter(format!("`{s}`: expected power:A,GAMMA")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("`{s}`: {e}")))
        };
        let (a, gamma) = (parse(a)?, parse(g)?);
        if !(a > 0.0 && gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "`{s}`: need a > 0 and gamma >= 0"
            )));
        }
        Ok(BandwidthSchedule::Power { a, gamma })
    }
}

/// Bandwidth `h_n` for sample size `n`.
pub fn bandwidth(schedule: &BandwidthSchedule, n: usize, sigma_hat: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InsufficientSample { n, required: 1 });
    }
    let nf = n as f64;
    let h = match *schedule {
        BandwidthSchedule::Silverman => {
            if !(sigma_hat >= 0.0 && sigma_hat.is_finite()) {
                return Err(Error::InvalidParameter(format!("sigma_hat = {sigma_hat}")));
            }
            1.06 * sigma_hat * nf.powf(-0.2)
        }
        BandwidthSchedule::Power { a, gamma } => {
            if !(a > 0.0 && gamma >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "power schedule needs a > 0, gamma >= 0 (got {a}, {gamma})"
                )));
            }
            a * nf.powf(-gamma)
        }
    };
    if h > 0.0 {
        Ok(h)
    } else {
        Err(Error::DegenerateBandwidth)
    }
}

/// Which layers are smoothed, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPlan {
    /// The smoothed layer indices `J`, a subset of `1..=k+1`.
    pub layers: BTreeSet<usize>,
    pub kernel: KernelSpec,
    pub schedule: BandwidthSchedule,
    pub convolution_nodes: usize,
}

impl SmoothingPlan {
    pub fn new(
        layers: impl IntoIterator<Item = usize>,
        kernel: KernelSpec,
        schedule: BandwidthSchedule,
    ) -> Self {
        SmoothingPlan {
            layers: layers.into_iter().collect(),
            kernel,
            schedule,
            convolution_nodes: DEFAULT_CONVOLUTION_NODES,
        }
    }

    /// Plan that smooths nothing.
    pub fn empirical(dim: usize) -> Self {
        SmoothingPlan::new(
            [],
            KernelSpec::new(KernelFamily::Uniform, dim, 1.0).expect("valid kernel"),
            BandwidthSchedule::Silverman,
        )
    }

    pub fn smooths(&self, j: usize) -> bool {
        self.layers.contains(&j)
    }

    /// `h_n` for `sample`, using the mean coordinate-wise standard deviation.
    pub fn bandwidth_for(&self, sample: &Sample) -> Result<f64> {
        let m = sample.dim();
        let sigma = (0..m).map(|j| sample.std_dev(j)).sum::<f64>() / m as f64;
        bandwidth(&self.schedule, sample.n(), sigma)
    }
}

/// Plug-in estimate with its layer means.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub value: Vec<f64>,
    pub chain: EtaChain,
    pub plan: Option<SmoothingPlan>,
    /// Bandwidth used for smoothed layers.
    pub bandwidth: Option<f64>,
    pub n: usize,
}

fn check_sample(spec: &CompositeSpec, sample: &Sample) -> Result<()> {
    ensure_valid(spec)?;
    if sample.dim() != spec.m() {
        return Err(Error::Dimension(format!(
            "sample has dimension {}, spec expects {}",
            sample.dim(),
            spec.m()
        )));
    }
    Ok(())
}

/// Empirical plug-in: every layer mean is a sample mean, innermost first.
pub fn estimate_empirical(spec: &CompositeSpec, sample: &Sample) -> Result<EstimateReport> {
    check_sample(spec, sample)?;
    let nodes = sample.nodes().expect("samples always have nodes");
    let chain = chain_on_nodes(spec, &nodes)?;
    Ok(EstimateReport {
        value: chain.value().to_vec(),
        chain,
        plan: None,
        bandwidth: None,
        n: sample.n(),
    })
}

/// Mixed plug-in: layers in `plan.layers` are kernel-smoothed, the rest are
/// empirical. With an empty `J` the result equals [`estimate_empirical`].
pub fn estimate_mixed(
    spec: &CompositeSpec,
    sample: &Sample,
    plan: &SmoothingPlan,
) -> Result<EstimateReport> {
    check_sample(spec, sample)?;
    let k = spec.k();
    if let Some(&j) = plan.layers.iter().find(|&&j| j == 0 || j > k + 1) {
        return Err(Error::InvalidParameter(format!(
            "smoothed layer {j} outside 1..={}",
            k + 1
        )));
    }
    if plan.layers.is_empty() {
        let mut report = estimate_empirical(spec, sample)?;
        report.plan = Some(plan.clone());
        return Ok(report);
    }
    if plan.kernel.dim != sample.dim() {
        return Err(Error::Dimension(format!(
            "kernel dimension {} does not match observations of dimension {}",
            plan.kernel.dim,
            sample.dim()
        )));
    }
    let conv = plan.kernel.convolution_rule(plan.convolution_nodes)?;
    let h = plan.bandwidth_for(sample)?;
    let nodes = sample.nodes().expect("samples always have nodes");
    let mut means: Vec<Vec<f64>> = vec![Vec::new(); k + 1];
    for j in (1..=k + 1).rev() {
        let layer = spec.layer(j);
        let input: Vec<f64> = if j == k + 1 { Vec::new() } else { means[j].clone() };
        means[j - 1] = if plan.smooths(j) {
            smoothed_layer_mean(layer, j, &input, sample, plan.kernel.family, h, &conv)?
        } else {
            nodes.expect(layer.out_dim, j, |x| layer.eval(&input, x))?
        };
    }
    let chain = EtaChain { means };
    Ok(EstimateReport {
        value: chain.value().to_vec(),
        chain,
        plan: Some(plan.clone()),
        bandwidth: Some(h),
        n: sample.n(),
    })
}

fn smoothed_layer_mean(
    layer: &Layer,
    j: usize,
    eta: &[f64],
    sample: &Sample,
    family: KernelFamily,
    h: f64,
    conv: &(Vec<f64>, Vec<f64>),
) -> Result<Vec<f64>> {
    if let (KernelFamily::Uniform, Some(tag), 1) = (family, &layer.power_max, sample.dim()) {
        if tag.scale != 0.0 {
            let shifted: Vec<f64> = sample.as_slice().iter().map(|x| tag.scale * x).collect();
            let u = (tag.threshold)(eta);
            let v = uniform_kernel_powermax(&shifted, u, tag.p, h * tag.scale.abs())?;
            if !v.is_finite() {
                return Err(Error::NonFinite { layer: j, index: None });
            }
            return Ok(vec![v]);
        }
    }
    let (points, weights) = conv;
    let m = sample.dim();
    let mut per_obs: Vec<Vec<f64>> = vec![Vec::with_capacity(sample.n()); layer.out_dim];
    let mut shifted = vec![0.0; m];
    for (i, x) in sample.rows().enumerate() {
        let mut acc: Vec<Vec<f64>> = vec![Vec::with_capacity(weights.len()); layer.out_dim];
        for (z, w) in points.chunks_exact(m).zip(weights) {
            for d in 0..m {
                shifted[d] = x[d] + h * z[d];
            }
            for (a, v) in acc.iter_mut().zip(layer.eval(eta, &shifted)) {
                a.push(w * v);
            }
        }
        for (col, a) in per_obs.iter_mut().zip(acc) {
            let v = pairwise_sum(&a);
            if !v.is_finite() {
                return Err(Error::NonFinite { layer: j, index: Some(i) });
            }
            col.push(v);
        }
    }
    Ok(per_obs
        .into_iter()
        .map(|c| pairwise_sum(&c) / sample.n() as f64)
        .collect())
}

/// Closed-form uniform-kernel mean of `(max(0, x - u))^p`:
/// `1/(2 n (p+1) h) sum_i [(h + X_i - u)_+^{p+1} - (X_i - u - h)_+^{p+1}]`.
pub fn uniform_kernel_powermax(values: &[f64], u: f64, p: f64, h: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientSample { n: 0, required: 1 });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("bandwidth must be > 0, got {h}")));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("power must be > 1, got {p}")));
    }
    let q = p + 1.0;
    let terms: Vec<f64> = values
        .iter()
        .map(|x| (h + x - u).max(0.0).powf(q) - (x - u - h).max(0.0).powf(q))
        .collect();
    Ok(pairwise_sum(&terms) / (2.0 * values.len() as f64 * q * h))
}

/// Outcome of [`check_strong_identity`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityDiagnostic {
    /// `sqrt(n) max(h_n m_1, h_n^p m_p) -> 0`.
    pub passes: bool,
    /// Exponent `e` with `sqrt(n) max(h_n m_1, h_n^p m_p) ~ n^e`.
    pub rate_exponent: f64,
    /// `n h_n^2 -> 0`.
    pub bandwidth_condition: bool,
    /// Exponent of `n h_n^2`.
    pub bandwidth_exponent: f64,
    pub detail: String,
}

/// Decide whether the kernel measures `K(./h_n)/h_n^m` form a strong
/// approximate identity of order `p` at rate `sqrt(n)`.
pub fn check_strong_identity(
    schedule: &BandwidthSchedule,
    kernel: &KernelSpec,
    p: f64,
) -> IdentityDiagnostic {
    let m1 = kernel.abs_moment(1.0);
    let mp = kernel.abs_moment(p);
    let gamma = schedule.decay_exponent();
    if !(m1.is_finite() && mp.is_finite()) {
        return IdentityDiagnostic {
            passes: false,
            rate_exponent: f64::NAN,
            bandwidth_condition: false,
            bandwidth_exponent: f64::NAN,
            detail: "kernel moments are not finite".into(),
        };
    }
    if gamma.is_infinite() {
        return IdentityDiagnostic {
            passes: true,
            rate_exponent: f64::NEG_INFINITY,
            bandwidth_condition: true,
            bandwidth_exponent: f64::NEG_INFINITY,
            detail: "h_n = 0: point mass, empirical estimator".into(),
        };
    }
    // sqrt(n) h_n ~ n^{1/2 - gamma}; sqrt(n) h_n^p ~ n^{1/2 - p gamma}.
    let rate = (0.5 - gamma).max(0.5 - p * gamma);
    let bw = 1.0 - 2.0 * gamma;
    let passes = rate < 0.0;
    let detail = format!(
        "{schedule}: sqrt(n)*moment terms ~ n^{rate:.4} ({}), n*h_n^2 ~ n^{bw:.4}",
        if passes { "decay" } else { "no decay" }
    );
    IdentityDiagnostic {
        passes,
        rate_exponent: rate,
        bandwidth_condition: bw < 0.0,
        bandwidth_exponent: bw,
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre_on;

    #[test]
    fn bandwidth_rules() {
        let s = BandwidthSchedule::Silverman;
        assert!((bandwidth(&s, 1, 1.0).unwrap() - 1.06).abs() < 1e-15);
        let h = bandwidth(&s, 200, 3.0).unwrap();
        assert!((h - 1.06 * 3.0 * 200f64.powf(-0.2)).abs() < 1e-15);
        assert!((h - 1.102_100_300_616_682_7).abs() < 1e-12);
        let p = BandwidthSchedule::Power { a: 1.0, gamma: 0.6 };
        assert!((bandwidth(&p, 100, 0.0).unwrap() - 0.063_095_734_448_019_32).abs() < 1e-12);
        assert!(matches!(bandwidth(&s, 10, 0.0), Err(Error::DegenerateBandwidth)));
        assert!(bandwidth(&s, 0, 1.0).is_err());
    }

    #[test]
    fn bandwidth_is_non_increasing() {
        for s in [
            BandwidthSchedule::Silverman,
            BandwidthSchedule::Power { a: 2.0, gamma: 0.7 },
            BandwidthSchedule::Power { a: 2.0, gamma: 0.0 },
        ] {
            let mut last = f64::INFINITY;
            for n in 1..500 {
                let h = bandwidth(&s, n, 1.3).unwrap();
                assert!(h > 0.0 && h <= last);
                last = h;
            }
        }
    }

    #[test]
    fn parse_schedules() {
        assert_eq!("silverman".parse::<BandwidthSchedule>().unwrap(), BandwidthSchedule::Silverman);
        assert_eq!(
            "power:1,0.6".parse::<BandwidthSchedule>().unwrap(),
            BandwidthSchedule::Power { a: 1.0, gamma: 0.6 }
        );
        assert!("power:-1,0.6".parse::<BandwidthSchedule>().is_err());
        assert!("scott".parse::<BandwidthSchedule>().is_err());
    }

    #[test]
    fn kernel_moments_match_quadrature() {
        for family in [KernelFamily::Uniform, KernelFamily::Gaussian, KernelFamily::Epanechnikov] {
            for p in [1.0, 1.5, 2.0, 3.0] {
                let k = KernelSpec::new(family, 1, p).unwrap();
                // Independent route: split Legendre on [0, L] using symmetry.
                let top = if family == KernelFamily::Gaussian { 40.0 } else { 1.0 };
                let rule = gauss_legendre_on(400, 0.0, top);
                let mass = 2.0 * rule.integrate(|y| family.density_1d(y));
                let first = rule.integrate(|y| y * family.density_1d(y))
                    - rule.integrate(|y| y * family.density_1d(-y));
                let mp = 2.0 * rule.integrate(|y| y.powf(p) * family.density_1d(y));
                assert!((mass - 1.0).abs() < 1e-8, "{family} mass {mass}");
                assert!(first.abs() < 1e-10, "{family} first moment {first}");
                assert!((mp - k.mp).abs() < 1e-6, "{family} p={p}: {mp} vs {}", k.mp);
            }
        }
    }

    #[test]
    fn multivariate_gaussian_moment() {
        let k = KernelSpec::new(KernelFamily::Gaussian, 2, 2.0).unwrap();
        assert!((k.mp - 2.0).abs() < 1e-12);
        let u = KernelSpec::new(KernelFamily::Uniform, 2, 2.0).unwrap();
        assert!((u.mp - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn convolution_rule_needs_three_nodes() {
        let k = KernelSpec::new(KernelFamily::Uniform, 1, 2.0).unwrap();
        assert!(matches!(k.convolution_rule(2), Err(Error::TooFewNodes(2))));
        let (_, w) = k.convolution_rule(3).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn powermax_closed_form_examples() {
        assert!((uniform_kernel_powermax(&[3.0], 3.0, 2.0, 1.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(uniform_kernel_powermax(&[0.0, -2.0, 1.0], 2.0, 2.0, 1.0).unwrap(), 0.0);
        let v = uniform_kernel_powermax(&[5.0], 0.0, 2.0, 0.1).unwrap();
        assert!((v - (5.1f64.powi(3) - 4.9f64.powi(3)) / 0.6).abs() < 1e-12);
        assert!((v - 25.003_333_333_333).abs() < 1e-9);
        assert!(uniform_kernel_powermax(&[1.0], 0.0, 1.0, 1.0).is_err());
        assert!(uniform_kernel_powermax(&[1.0], 0.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn identity_check_exponents() {
        let k = KernelSpec::new(KernelFamily::Uniform, 1, 2.0).unwrap();
        let d = check_strong_identity(&BandwidthSchedule::Power { a: 1.0, gamma: 0.6 }, &k, 2.0);
        assert!(d.passes && d.bandwidth_condition);
        assert!((d.rate_exponent + 0.1).abs() < 1e-12);
        let d = check_strong_identity(&BandwidthSchedule::Power { a: 1.0, gamma: 0.2 }, &k, 2.0);
        assert!(!d.passes);
        assert!((d.rate_exponent - 0.3).abs() < 1e-12);
        let d = check_strong_identity(&BandwidthSchedule::Silverman, &k, 2.0);
        assert!(!d.passes && !d.bandwidth_condition);
        assert!((d.rate_exponent - 0.3).abs() < 1e-12);
        let d = check_strong_identity(
            &BandwidthSchedule::Power { a: 1.0, gamma: f64::INFINITY },
            &k,
            2.0,
        );
        assert!(d.passes);
    }
}
