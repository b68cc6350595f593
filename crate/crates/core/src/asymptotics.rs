//! Delta-method asymptotics for plug-in estimators.
//!
//! In the differentiable case `sqrt(n) (rho_hat - rho)` is asymptotically
//! `N(0, C^T Sigma C)` where `Sigma` is the covariance of the stacked layer
//! evaluations `(f_1(eta_2, X), ..., f_k(eta_{k+1}, X), f_{k+1}(X))` and
//! `C^T = (I, C_1^T, ..., C_k^T)` with `C_r^T = E[J_1] ... E[J_r]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::composite::{ensure_valid, CompositeSpec, DistributionOracle, EtaChain, NodeView};
use crate::error::{Error, Result};
use crate::estimators::EstimateReport;
use crate::law::std_normal_quantile;
use crate::sample::Sample;

/// Relative tolerance below which a negative eigenvalue is clipped to zero.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Plug-in covariance of the stacked layer evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaEstimate {
    /// `M x M`, blocks ordered by layer `1, ..., k+1`.
    pub full: DMatrix<f64>,
    /// Block sizes `(m_0, ..., m_k)`.
    pub block_dims: Vec<usize>,
}

impl SigmaEstimate {
    fn offset(&self, a: usize) -> usize {
        self.block_dims[..a - 1].iter().sum()
    }

    /// Block `(a, b)`, shape `m_{a-1} x m_{b-1}`, for layers `a, b` in `1..=k+1`.
    pub fn block(&self, a: usize, b: usize) -> DMatrix<f64> {
        let (ra, rb) = (self.offset(a), self.offset(b));
        self.full
            .view((ra, rb), (self.block_dims[a - 1], self.block_dims[b - 1]))
            .into_owned()
    }
}

/// Expected Jacobians and their running products.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMatrices {
    /// `E[J_j(eta_{j+1}, X)]` for `j = 1..=k`, shape `m_{j-1} x m_j`.
    pub jacobian_means: Vec<DMatrix<f64>>,
    /// `C_r^T = E[J_1] ... E[J_r]` for `r = 1..=k`, shape `m_0 x m_r`.
    pub c_transposed: Vec<DMatrix<f64>>,
    /// `(I, C_1^T, ..., C_k^T)`, shape `m_0 x M`.
    pub stacked: DMatrix<f64>,
    /// Layers whose Jacobian came from central differences.
    pub finite_difference_layers: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticReport {
    pub sigma: SigmaEstimate,
    pub chains: ChainMatrices,
    /// `C^T Sigma C`, shape `m_0 x m_0`.
    pub limit_cov: DMatrix<f64>,
    pub n: usize,
    pub level: f64,
    pub intervals: Vec<Interval>,
}

fn with_nodes<T>(
    oracle: &dyn DistributionOracle,
    f: impl FnOnce(&NodeView<'_>) -> Result<T>,
) -> Result<T> {
    match oracle.nodes() {
        Some(n) => f(&n),
        None => {
            let draws = oracle.draw(0, crate::composite::FALLBACK_DRAWS);
            f(&draws.nodes().expect("samples always have nodes"))
        }
    }
}

fn check_chain(spec: &CompositeSpec, chain: &EtaChain) -> Result<()> {
    let ok = chain.means.len() == spec.k() + 1
        && chain
            .means
            .iter()
            .zip(&spec.signature.dims)
            .all(|(m, &d)| m.len() == d);
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension("chain does not match the spec signature".into()))
    }
}

/// Covariance `(1/n) sum_i (Z_i - Z_bar)(Z_i - Z_bar)^T` of the stacked
/// evaluations `Z_i` at the plug-in chain point.
///
/// `oracle` is normally the sample itself; a law oracle gives the
/// population covariance at `chain`.
pub fn plugin_sigma(
    spec: &CompositeSpec,
    oracle: &dyn DistributionOracle,
    chain: &EtaChain,
) -> Result<SigmaEstimate> {
    ensure_valid(spec)?;
    check_chain(spec, chain)?;
    let dims = spec.signature.dims.clone();
    let total: usize = dims.iter().sum();
    let k = spec.k();
    let full = with_nodes(oracle, |nodes| {
        let n = nodes.len();
        if n < 2 {
            return Err(Error::InsufficientSample { n, required: 2 });
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); total];
        for i in 0..n {
            let x = nodes.point(i);
            let mut c = 0;
            for j in 1..=k + 1 {
                let v = spec.layer(j).eval(chain.input_of(j), x);
                for val in v {
                    if !val.is_finite() {
                        return Err(Error::NonFinite { layer: j, index: Some(i) });
                    }
                    cols[c].push(val);
                    c += 1;
                }
            }
        }
        let means: Vec<f64> = cols.iter().map(|c| nodes.reduce(c.clone())).collect();
        let centered: Vec<Vec<f64>> = cols
            .iter()
            .zip(&means)
            .map(|(c, m)| c.iter().map(|v| v - m).collect())
            .collect();
        let mut full = DMatrix::zeros(total, total);
        for a in 0..total {
            for b in a..total {
                let prods: Vec<f64> = centered[a]
                    .iter()
                    .zip(&centered[b])
                    .map(|(x, y)| x * y)
                    .collect();
                let v = nodes.reduce(prods);
                full[(a, b)] = v;
                full[(b, a)] = v;
            }
        }
        Ok(full)
    })?;
    Ok(SigmaEstimate {
        full: repair_psd(full)?,
        block_dims: dims,
    })
}

/// Symmetrize; clip small negative eigenvalues, reject large ones.
pub fn repair_psd(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (&m + m.transpose()) * 0.5;
    if sym.nrows() == 0 {
        return Ok(sym);
    }
    let trace = sym.trace();
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(sym);
    }
    if min < -PSD_TOLERANCE * trace.abs() {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            trace,
        });
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok((&rebuilt + rebuilt.transpose()) * 0.5)
}

/// Expected Jacobians at the plug-in chain and the products `C_r^T`.
///
/// Layers without a declared Jacobian use central differences when
/// `allow_finite_differences` is set, and are listed in the result.
pub fn chain_matrices(
    spec: &CompositeSpec,
    oracle: &dyn DistributionOracle,
    chain: &EtaChain,
    allow_finite_differences: bool,
) -> Result<ChainMatrices> {
    ensure_valid(spec)?;
    check_chain(spec, chain)?;
    let k = spec.k();
    let dims = &spec.signature.dims;
    let m0 = dims[0];
    let mut fd_layers = Vec::new();
    let jacobian_means = with_nodes(oracle, |nodes| {
        (1..=k)
            .map(|j| {
                let layer = spec.layer(j);
                if !layer.has_jacobian() {
                    if !allow_finite_differences {
                        return Err(Error::MissingJacobian(j));
                    }
                    fd_layers.push(j);
                }
                let eta = chain.input_of(j);
                let (rows, cols) = (layer.out_dim, layer.eta_dim);
                let flat = nodes.expect(rows * cols, j, |x| {
                    layer.jacobian_or_fd(eta, x).as_slice().to_vec()
                })?;
                Ok(DMatrix::from_column_slice(rows, cols, &flat))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut c_transposed: Vec<DMatrix<f64>> = Vec::with_capacity(k);
    for (r, jm) in jacobian_means.iter().enumerate() {
        let next = match c_transposed.last() {
            None => jm.clone(),
            Some(prev) => prev * jm,
        };
        debug_assert_eq!(next.shape(), (m0, dims[r + 1]));
        c_transposed.push(next);
    }
    let total: usize = dims.iter().sum();
    let mut stacked = DMatrix::zeros(m0, total);
    stacked.view_mut((0, 0), (m0, m0)).copy_from(&DMatrix::identity(m0, m0));
    let mut col = m0;
    for ct in &c_transposed {
        stacked.view_mut((0, col), ct.shape()).copy_from(ct);
        col += ct.ncols();
    }
    Ok(ChainMatrices {
        jacobian_means,
        c_transposed,
        stacked,
        finite_difference_layers: fd_layers,
    })
}

/// `C^T Sigma C`.
pub fn limit_covariance(sigma: &SigmaEstimate, chains: &ChainMatrices) -> Result<DMatrix<f64>> {
    if chains.stacked.ncols() != sigma.full.nrows() {
        return Err(Error::Dimension(format!(
            "chain matrix has {} columns, covariance is {}x{}",
            chains.stacked.ncols(),
            sigma.full.nrows(),
            sigma.full.ncols()
        )));
    }
    let v = &chains.stacked * &sigma.full * chains.stacked.transpose();
    Ok((&v + v.transpose()) * 0.5)
}

/// `w^T (C^T Sigma C) w` for a contrast vector `w`.
pub fn contrast_variance(
    sigma: &SigmaEstimate,
    chains: &ChainMatrices,
    contrast: &[f64],
) -> Result<f64> {
    let cov = limit_covariance(sigma, chains)?;
    quadratic_form(&cov, contrast)
}

pub fn quadratic_form(cov: &DMatrix<f64>, w: &[f64]) -> Result<f64> {
    if w.len() != cov.nrows() {
        return Err(Error::Dimension(format!(
            "contrast has length {}, covariance is {}x{}",
            w.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let w = DVector::from_column_slice(w);
    Ok((w.transpose() * cov * &w)[(0, 0)])
}

/// Joint limit covariance of estimators computed on independent samples of
/// sizes `n_i`, normalized to `n = min n_i`.
pub fn independent_joint_covariance(parts: &[(DMatrix<f64>, usize)]) -> Result<(DMatrix<f64>, usize)> {
    let n = parts
        .iter()
        .map(|(_, n)| *n)
        .min()
        .ok_or_else(|| Error::InvalidParameter("no components".into()))?;
    let total: usize = parts.iter().map(|(c, _)| c.nrows()).sum();
    let mut out = DMatrix::zeros(total, total);
    let mut at = 0;
    for (cov, ni) in parts {
        if cov.nrows() != cov.ncols() {
            return Err(Error::Dimension("component covariance must be square".into()));
        }
        let scaled = cov * (n as f64 / *ni as f64);
        out.view_mut((at, at), cov.shape()).copy_from(&scaled);
        at += cov.nrows();
    }
    Ok((out, n))
}

/// Two-sided normal quantile `z_{1 - alpha/2}` for confidence `level`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    Ok(std_normal_quantile(0.5 + 0.5 * level))
}

/// `value_i +- z sqrt(limit_cov_ii / n)`.
pub fn confidence_interval(
    estimate: &EstimateReport,
    report: &AsymptoticReport,
    level: f64,
) -> Result<Vec<Interval>> {
    intervals_for(&estimate.value, &report.limit_cov, report.n, level)
}

fn intervals_for(value: &[f64], cov: &DMatrix<f64>, n: usize, level: f64) -> Result<Vec<Interval>> {
    let z = normal_critical_value(level)?;
    if cov.nrows() != value.len() {
        return Err(Error::Dimension("limit covariance does not match the estimate".into()));
    }
    if n == 0 {
        return Err(Error::InsufficientSample { n, required: 1 });
    }
    Ok(value
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let half = z * (cov[(i, i)].max(0.0) / n as f64).sqrt();
            Interval {
                lower: v - half,
                upper: v + half,
                half_width: half,
            }
        })
        .collect())
}

/// Full plug-in report at the estimate's own chain.
pub fn asymptotic_report(
    spec: &CompositeSpec,
    sample: &Sample,
    estimate: &EstimateReport,
    level: f64,
) -> Result<AsymptoticReport> {
    let sigma = plugin_sigma(spec, sample, &estimate.chain)?;
    let chains = chain_matrices(spec, sample, &estimate.chain, true)?;
    let limit_cov = limit_covariance(&sigma, &chains)?;
    let intervals = intervals_for(&estimate.value, &limit_cov, sample.n(), level)?;
    Ok(AsymptoticReport {
        sigma,
        chains,
        limit_cov,
        n: sample.n(),
        level,
        intervals,
    })
}
