//! Nested composite functionals
//! `rho[X] = E[f1(E[f2(... E[f_{k+1}(X)] ..., X)], X)]`.
//!
//! A [`CompositeSpec`] is an ordered list of layers `f1 .. f_{k+1}`. Layer `j`
//! maps `(eta, x)` with `eta` of dimension `m_j` to a vector of dimension
//! `m_{j-1}`; the innermost layer `f_{k+1}` only sees `x`. Expectations are
//! taken against a [`DistributionOracle`], which is either a known law with a
//! quadrature rule or a [`Sample`] acting as its empirical law.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;
use crate::sample::Sample;

pub type EvalFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ThresholdFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Draw count used by [`eval_exact_chain`] when an oracle has no quadrature.
pub const FALLBACK_DRAWS: usize = 200_000;

/// Output dimensions of every layer plus the dimension `m` of `X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimSignature {
    /// Dimension of the observations.
    pub m: usize,
    /// `(m_0, m_1, ..., m_k)`; `m_0` is the output dimension of the functional.
    pub dims: Vec<usize>,
}

impl DimSignature {
    pub fn new(m: usize, dims: Vec<usize>) -> Self {
        DimSignature { m, dims }
    }

    /// Number of inner layers `k`.
    pub fn k(&self) -> usize {
        self.dims.len().saturating_sub(1)
    }

    /// Output dimension `m_0`.
    pub fn output_dim(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// `M = m_0 + ... + m_k`.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }
}

/// Local Lipschitz data `|f(eta, x + y) - f(eta, x)| <= C max(1, |x|^q, |y|^q) |y|`.
///
/// Only recorded; nothing checks it at runtime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBound {
    pub constant: f64,
    pub growth_order: f64,
}

/// Marks a scalar layer of the form `(max(0, scale * x - threshold(eta)))^p`
/// over scalar observations, which has a closed-form uniform-kernel smoothing.
#[derive(Clone)]
pub struct PowerMax {
    pub scale: f64,
    pub p: f64,
    pub threshold: ThresholdFn,
}

impl fmt::Debug for PowerMax {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PowerMax")
            .field("scale", &self.scale)
            .field("p", &self.p)
            .finish_non_exhaustive()
    }
}

/// One layer `f_j` of the composition.
#[derive(Clone)]
pub struct Layer {
    pub index: usize,
    /// Dimension of the `eta` argument (`m_j`); zero for the innermost layer.
    pub eta_dim: usize,
    /// Output dimension (`m_{j-1}`).
    pub out_dim: usize,
    eval: EvalFn,
    jacobian: Option<JacobianFn>,
    pub lipschitz: Option<LipschitzBound>,
    pub power_max: Option<PowerMax>,
    /// Box `I_j` for `eta`, one `(lo, hi)` per coordinate. Used for probing only.
    pub domain: Option<Vec<(f64, f64)>>,
}

impl fmt::Debug for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Layer")
            .field("index", &self.index)
            .field("eta_dim", &self.eta_dim)
            .field("out_dim", &self.out_dim)
            .field("jacobian", &self.jacobian.is_some())
            .field("lipschitz", &self.lipschitz)
            .field("power_max", &self.power_max)
            .field("domain", &self.domain)
            .finish()
    }
}

impl Layer {
    pub fn new<F>(index: usize, eta_dim: usize, out_dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Layer {
            index,
            eta_dim,
            out_dim,
            eval: Arc::new(eval),
            jacobian: None,
            lipschitz: None,
            power_max: None,
            domain: None,
        }
    }

    /// Innermost layer `f_{k+1}(x)`.
    pub fn innermost<F>(index: usize, out_dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Layer::new(index, 0, out_dim, move |_, x| eval(x))
    }

    /// Scalar-in, scalar-out layer `f(eta, x)`.
    pub fn scalar<F>(index: usize, eval: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Layer::new(index, 1, 1, move |eta, x| vec![eval(eta[0], x)])
    }

    /// `f(eta, x) = eta`, with identity Jacobian.
    pub fn identity(index: usize, dim: usize) -> Self {
        Layer::new(index, dim, dim, |eta, _| eta.to_vec())
            .with_jacobian(move |_, _| DMatrix::identity(dim, dim))
    }

    pub fn with_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// Scalar derivative `d f / d eta` for a scalar layer.
    pub fn with_scalar_derivative<F>(self, d: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.with_jacobian(move |eta, x| DMatrix::from_element(1, 1, d(eta[0], x)))
    }

    pub fn with_lipschitz(mut self, bound: LipschitzBound) -> Self {
        self.lipschitz = Some(bound);
        self
    }

    pub fn with_power_max(mut self, tag: PowerMax) -> Self {
        self.power_max = Some(tag);
        self
    }

    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn eval(&self, eta: &[f64], x: &[f64]) -> Vec<f64> {
        (self.eval)(eta, x)
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Declared Jacobian in `eta` (`out_dim x eta_dim`), if any.
    pub fn jacobian(&self, eta: &[f64], x: &[f64]) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(eta, x))
    }

    /// Declared Jacobian, or central differences when none is declared.
    pub fn jacobian_or_fd(&self, eta: &[f64], x: &[f64]) -> DMatrix<f64> {
        self.jacobian(eta, x)
            .unwrap_or_else(|| fd_jacobian(self, eta, x))
    }
}

/// Central-difference Jacobian in `eta` with step `max(1e-6, 1e-6 |eta_i|)`.
///
/// At a kink this returns the average of the one-sided slopes.
pub fn fd_jacobian(layer: &Layer, eta: &[f64], x: &[f64]) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(layer.out_dim, layer.eta_dim);
    let mut probe = eta.to_vec();
    for i in 0..layer.eta_dim {
        let h = (1e-6 * eta[i].abs()).max(1e-6);
        probe[i] = eta[i] + h;
        let up = layer.eval(&probe, x);
        probe[i] = eta[i] - h;
        let down = layer.eval(&probe, x);
        probe[i] = eta[i];
        for r in 0..layer.out_dim {
            jac[(r, i)] = (up[r] - down[r]) / (2.0 * h);
        }
    }
    jac
}

/// The full nested functional.
#[derive(Debug, Clone)]
pub struct CompositeSpec {
    pub signature: DimSignature,
    /// `f_1, ..., f_{k+1}` in order.
    pub layers: Vec<Layer>,
    pub label: String,
}

impl CompositeSpec {
    pub fn new(label: impl Into<String>, signature: DimSignature, layers: Vec<Layer>) -> Self {
        CompositeSpec {
            signature,
            layers,
            label: label.into(),
        }
    }

    pub fn k(&self) -> usize {
        self.signature.k()
    }

    pub fn m(&self) -> usize {
        self.signature.m
    }

    pub fn output_dim(&self) -> usize {
        self.signature.output_dim()
    }

    /// Layer `f_j`, `j` in `1..=k+1`.
    pub fn layer(&self, j: usize) -> &Layer {
        &self.layers[j - 1]
    }

    /// Prepend identity layers so that the spec has `k` inner layers.
    ///
    /// The value and the limit distribution are unchanged: identity layers pass
    /// the mean through and contribute zero covariance blocks.
    pub fn padded_to_depth(&self, k: usize) -> Result<CompositeSpec> {
        let current = self.k();
        if k < current {
            return Err(Error::InvalidParameter(format!(
                "cannot pad depth {current} down to {k}"
            )));
        }
        let extra = k - current;
        let m0 = self.output_dim();
        let mut layers: Vec<Layer> = (1..=extra).map(|j| Layer::identity(j, m0)).collect();
        layers.extend(
            self.layers
                .iter()
                .map(|l| l.clone().with_index(l.index + extra)),
        );
        let mut dims = vec![m0; extra];
        dims.extend_from_slice(&self.signature.dims);
        Ok(CompositeSpec {
            signature: DimSignature::new(self.m(), dims),
            layers,
            label: self.label.clone(),
        })
    }
}

/// One failed chaining check found by [`validate_spec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimMismatch {
    /// Offending layer pair `(j, j+1)`, or `(j, j)` for a single-layer problem.
    pub pair: (usize, usize),
    pub expected: usize,
    pub actual: usize,
    pub what: &'static str,
}

impl fmt::Display for DimMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "layers ({}, {}): {} expected {}, got {}",
            self.pair.0, self.pair.1, self.what, self.expected, self.actual
        )
    }
}

/// Check that the layers chain according to the signature.
///
/// Output dimensions are checked by evaluating each layer once at a probe
/// point (midpoint of the declared domain, otherwise ones; `x = 0`).
pub fn validate_spec(spec: &CompositeSpec) -> std::result::Result<(), Vec<DimMismatch>> {
    let mut out = Vec::new();
    let sig = &spec.signature;
    let k = sig.k();
    if sig.dims.is_empty() {
        out.push(DimMismatch {
            pair: (0, 0),
            expected: 1,
            actual: 0,
            what: "signature entries",
        });
        return Err(out);
    }
    for (i, &d) in sig.dims.iter().enumerate() {
        if d == 0 {
            out.push(DimMismatch {
                pair: (i + 1, i + 1),
                expected: 1,
                actual: 0,
                what: "layer output dimension (must be >= 1)",
            });
        }
    }
    if sig.m == 0 {
        out.push(DimMismatch {
            pair: (k + 1, k + 1),
            expected: 1,
            actual: 0,
            what: "observation dimension",
        });
    }
    if spec.layers.len() != k + 1 {
        out.push(DimMismatch {
            pair: (1, k + 1),
            expected: k + 1,
            actual: spec.layers.len(),
            what: "layer count",
        });
        return Err(out);
    }
    let x = vec![0.0; sig.m];
    for (pos, layer) in spec.layers.iter().enumerate() {
        let j = pos + 1;
        if layer.index != j {
            out.push(DimMismatch {
                pair: (j, j),
                expected: j,
                actual: layer.index,
                what: "layer index",
            });
        }
        if layer.out_dim != sig.dims[j - 1] {
            out.push(DimMismatch {
                pair: (j, j),
                expected: sig.dims[j - 1],
                actual: layer.out_dim,
                what: "declared output dimension vs signature",
            });
        }
        let expected_eta = if j == k + 1 { 0 } else { sig.dims[j] };
        if layer.eta_dim != expected_eta {
            out.push(DimMismatch {
                pair: (j, j + 1),
                expected: expected_eta,
                actual: layer.eta_dim,
                what: "eta input dimension vs signature",
            });
        }
        let eta = probe_point(layer);
        let got = layer.eval(&eta, &x).len();
        if got != layer.out_dim {
            let pair = if j == 1 { (1, 1) } else { (j - 1, j) };
            out.push(DimMismatch {
                pair,
                expected: layer.out_dim,
                actual: got,
                what: "evaluated output dimension",
            });
        }
        if j >= 2 {
            let outer = &spec.layers[pos - 1];
            if got != outer.eta_dim {
                out.push(DimMismatch {
                    pair: (j - 1, j),
                    expected: outer.eta_dim,
                    actual: got,
                    what: "output of inner layer vs eta input of outer layer",
                });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        out.dedup();
        Err(out)
    }
}

fn probe_point(layer: &Layer) -> Vec<f64> {
    match &layer.domain {
        Some(b) if b.len() == layer.eta_dim => b.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
        _ => vec![1.0; layer.eta_dim],
    }
}

pub(crate) fn ensure_valid(spec: &CompositeSpec) -> Result<()> {
    validate_spec(spec).map_err(Error::InvalidSpec)
}

/// Weighted support points of a law.
pub struct NodeView<'a> {
    pub points: &'a [f64],
    pub dim: usize,
    /// `None` means equal weights `1/len`.
    pub weights: Option<&'a [f64]>,
}

impl NodeView<'_> {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        match self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }

    /// `sum_i w_i f(x_i)` with pairwise reduction per coordinate. Non-finite
    /// values are reported against `layer` and the node index.
    pub fn expect<F>(&self, out_dim: usize, layer: usize, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let n = self.len();
        let mut cols = vec![Vec::with_capacity(n); out_dim];
        for i in 0..n {
            let v = f(self.point(i));
            if v.len() != out_dim {
                return Err(Error::Dimension(format!(
                    "layer {layer} returned {} values, expected {out_dim}",
                    v.len()
                )));
            }
            for (c, val) in cols.iter_mut().zip(v) {
                if !val.is_finite() {
                    return Err(Error::NonFinite {
                        layer,
                        index: Some(i),
                    });
                }
                c.push(val);
            }
        }
        Ok(cols.into_iter().map(|c| self.reduce(c)).collect())
    }

    /// Weighted sum of per-node values.
    pub fn reduce(&self, mut values: Vec<f64>) -> f64 {
        match self.weights {
            Some(w) => {
                for (v, wi) in values.iter_mut().zip(w) {
                    *v *= wi;
                }
                pairwise_sum(&values)
            }
            None => pairwise_sum(&values) / values.len() as f64,
        }
    }
}

/// Representation of the law `P` of `X`.
pub trait DistributionOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// `count` independent draws; deterministic in `seed`.
    fn draw(&self, seed: u64, count: usize) -> Sample;

    /// Quadrature nodes, when the law has a rule.
    fn nodes(&self) -> Option<NodeView<'_>>;
}

impl DistributionOracle for Sample {
    fn dim(&self) -> usize {
        Sample::dim(self)
    }

    /// Resampling with replacement from the rows.
    fn draw(&self, seed: u64, count: usize) -> Sample {
        let n = self.n() as u64;
        let mut data = Vec::with_capacity(count * Sample::dim(self));
        for i in 0..count {
            let r = (crate::law::counter_u64(seed, i as u64) % n) as usize;
            data.extend_from_slice(self.row(r));
        }
        Sample::from_row_major(data, Sample::dim(self)).expect("rows are finite")
    }

    fn nodes(&self) -> Option<NodeView<'_>> {
        Some(NodeView {
            points: self.as_slice(),
            dim: Sample::dim(self),
            weights: None,
        })
    }
}

/// Layer means `eta_1, ..., eta_{k+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaChain {
    /// `means[j - 1]` is `eta_j`, of dimension `m_{j-1}`.
    pub means: Vec<Vec<f64>>,
}

impl EtaChain {
    /// `eta_j`, `j` in `1..=k+1`.
    pub fn eta(&self, j: usize) -> &[f64] {
        &self.means[j - 1]
    }

    /// `eta_{j+1}` as the argument of layer `j`; empty for the innermost layer.
    pub fn input_of(&self, j: usize) -> &[f64] {
        self.means.get(j).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The functional value `eta_1`.
    pub fn value(&self) -> &[f64] {
        &self.means[0]
    }
}

/// Innermost-first evaluation of the chain against a set of nodes.
pub(crate) fn chain_on_nodes(spec: &CompositeSpec, nodes: &NodeView<'_>) -> Result<EtaChain> {
    let k = spec.k();
    let mut means = vec![Vec::new(); k + 1];
    for j in (1..=k + 1).rev() {
        let layer = spec.layer(j);
        let input: Vec<f64> = if j == k + 1 { Vec::new() } else { means[j].clone() };
        means[j - 1] = nodes.expect(layer.out_dim, j, |x| layer.eval(&input, x))?;
    }
    Ok(EtaChain { means })
}

fn check_oracle_dim(spec: &CompositeSpec, dim: usize) -> Result<()> {
    if dim != spec.m() {
        return Err(Error::Dimension(format!(
            "law has dimension {dim}, spec expects {}",
            spec.m()
        )));
    }
    Ok(())
}

/// Exact nested means `eta_{k+1} = E f_{k+1}(X)`, `eta_j = E f_j(eta_{j+1}, X)`.
///
/// Uses the oracle's quadrature; without one, falls back to
/// [`FALLBACK_DRAWS`] draws at seed 0.
pub fn eval_exact_chain(spec: &CompositeSpec, oracle: &dyn DistributionOracle) -> Result<EtaChain> {
    ensure_valid(spec)?;
    check_oracle_dim(spec, oracle.dim())?;
    match oracle.nodes() {
        Some(nodes) => chain_on_nodes(spec, &nodes),
        None => {
            let draws = oracle.draw(0, FALLBACK_DRAWS);
            let nodes = draws.nodes().expect("samples always have nodes");
            chain_on_nodes(spec, &nodes)
        }
    }
}

pub type DirectionFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// One component `d_j` of a perturbation direction.
#[derive(Clone)]
pub enum DirectionComponent {
    Constant(Vec<f64>),
    Function(DirectionFn),
}

impl fmt::Debug for DirectionComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectionComponent::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            DirectionComponent::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl DirectionComponent {
    fn at(&self, eta: &[f64]) -> Vec<f64> {
        match self {
            DirectionComponent::Constant(v) => v.clone(),
            DirectionComponent::Function(f) => f(eta),
        }
    }
}

/// Perturbation `d = (d_1, ..., d_k, d_{k+1})`; `d_{k+1}` must be constant.
#[derive(Debug, Clone)]
pub struct Direction {
    pub components: Vec<DirectionComponent>,
}

impl Direction {
    /// Flat direction from one constant vector per layer.
    pub fn constant(parts: Vec<Vec<f64>>) -> Self {
        Direction {
            components: parts.into_iter().map(DirectionComponent::Constant).collect(),
        }
    }

    /// Unit perturbation of coordinate `coord` in layer `layer`, zero elsewhere.
    pub fn unit(sig: &DimSignature, layer: usize, coord: usize) -> Self {
        let parts = sig
            .dims
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let mut v = vec![0.0; d];
                if i + 1 == layer {
                    v[coord] = 1.0;
                }
                v
            })
            .collect();
        Direction::constant(parts)
    }
}

/// `xi_1(d)` from `xi_{k+1} = d_{k+1}`,
/// `xi_j = E[J_j(eta_{j+1}, X)] xi_{j+1} + d_j(eta_{j+1})`.
///
/// Requires a declared Jacobian on every layer `j <= k`.
pub fn propagate_direction(
    spec: &CompositeSpec,
    chain: &EtaChain,
    oracle: &dyn DistributionOracle,
    dir: &Direction,
) -> Result<Vec<f64>> {
    ensure_valid(spec)?;
    check_oracle_dim(spec, oracle.dim())?;
    let k = spec.k();
    if dir.components.len() != k + 1 {
        return Err(Error::Dimension(format!(
            "direction has {} components, expected {}",
            dir.components.len(),
            k + 1
        )));
    }
    if let Some(j) = (1..=k).find(|&j| !spec.layer(j).has_jacobian()) {
        return Err(Error::MissingJacobian(j));
    }
    let fallback;
    let nodes = match oracle.nodes() {
        Some(n) => n,
        None => {
            fallback = oracle.draw(0, FALLBACK_DRAWS);
            fallback.nodes().expect("samples always have nodes")
        }
    };
    let mut xi = dir.components[k].at(&[]);
    check_len(&xi, spec.signature.dims[k], k + 1)?;
    for j in (1..=k).rev() {
        let layer = spec.layer(j);
        let eta = chain.input_of(j);
        let (rows, cols) = (layer.out_dim, layer.eta_dim);
        let flat = nodes.expect(rows * cols, j, |x| {
            layer
                .jacobian(eta, x)
                .expect("checked above")
                .as_slice()
                .to_vec()
        })?;
        let mean_jac = DMatrix::from_column_slice(rows, cols, &flat);
        let d = dir.components[j - 1].at(eta);
        check_len(&d, rows, j)?;
        let next = mean_jac * DVector::from_vec(xi) + DVector::from_vec(d);
        xi = next.as_slice().to_vec();
    }
    Ok(xi)
}

fn check_len(v: &[f64], expected: usize, layer: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension(format!(
            "direction component {layer} has length {}, expected {expected}",
            v.len()
        )));
    }
    Ok(())
}
