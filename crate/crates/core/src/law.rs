//! Known laws for `X`: counter-based samplers plus quadrature rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::composite::{DistributionOracle, NodeView};
use crate::error::{Error, Result};
use crate::quadrature::{composite_gauss_legendre, gauss_legendre_on, standard_normal_rule};
use crate::sample::Sample;

/// Panels of the composite rule for a scalar normal law on `mean +- 10 std`.
pub const NORMAL_PANELS: usize = 4096;
/// Panels of the composite rule for a scalar uniform law.
pub const UNIFORM_PANELS: usize = 1024;
/// Gauss–Legendre nodes per panel.
pub const PANEL_NODES: usize = 8;
/// Nodes per coordinate inside product laws: Gauss–Hermite for normal
/// factors, Gauss–Legendre for uniform ones.
pub const FACTOR_NODES: usize = 200;
/// Largest tensor rule built for product laws; beyond it the oracle samples.
pub const MAX_TENSOR_NODES: usize = 4_000_000;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based 64-bit stream: draw `i` is a pure function of `(seed, i)`.
pub fn counter_u64(seed: u64, i: u64) -> u64 {
    mix64(mix64(seed) ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03))
}

/// Seed for replication `r` of a study seeded with `seed`.
pub fn derive_seed(seed: u64, r: u64) -> u64 {
    counter_u64(seed ^ 0xA076_1D64_78BD_642F, r)
}

/// Uniform on the open interval `(0, 1)`.
pub fn counter_unit(seed: u64, i: u64) -> f64 {
    ((counter_u64(seed, i) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of the standard normal CDF on `(0, 1)`.
pub fn std_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// A law of `X`. Scalar laws may be combined into independent products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    Normal { mean: f64, std: f64 },
    Uniform { a: f64, b: f64 },
    /// `x1` with probability `w`, `x2` otherwise.
    TwoPoint { x1: f64, x2: f64, w: f64 },
    /// Finite law on scalar atoms.
    Discrete { atoms: Vec<f64>, weights: Vec<f64> },
    /// Independent coordinates.
    Product { factors: Vec<Law> },
}

impl Law {
    /// Normal law given by mean and variance.
    pub fn normal_var(mean: f64, variance: f64) -> Law {
        Law::Normal {
            mean,
            std: variance.sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Law::Normal { mean, std } => {
                if !(mean.is_finite() && *std > 0.0 && std.is_finite()) {
                    return Err(bad(format!("normal needs finite mean and std > 0, got ({mean}, {std})")));
                }
            }
            Law::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(bad(format!("uniform needs a < b, got ({a}, {b})")));
                }
            }
            Law::TwoPoint { x1, x2, w } => {
                if !(x1.is_finite() && x2.is_finite() && *w > 0.0 && *w < 1.0) {
                    return Err(bad(format!("two-point needs w in (0, 1), got {w}")));
                }
            }
            Law::Discrete { atoms, weights } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    return Err(bad("discrete law needs matching non-empty atoms and weights".into()));
                }
                let total: f64 = weights.iter().sum();
                if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
                    return Err(bad("discrete weights must be nonnegative and sum to 1".into()));
                }
            }
            Law::Product { factors } => {
                if factors.is_empty() {
                    return Err(bad("product law needs at least one factor".into()));
                }
                for f in factors {
                    f.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Law::Product { factors } => factors.iter().map(Law::dim).sum(),
            _ => 1,
        }
    }

    fn scalar_factors(&self) -> Vec<&Law> {
        match self {
            Law::Product { factors } => factors.iter().flat_map(Law::scalar_factors).collect(),
            other => vec![other],
        }
    }

    /// Map a uniform variate to a draw of a scalar law (inverse CDF).
    fn quantile_at(&self, u: f64) -> f64 {
        match self {
            Law::Normal { mean, std } => mean + std * std_normal_quantile(u),
            Law::Uniform { a, b } => a + (b - a) * u,
            Law::TwoPoint { x1, x2, w } => {
                if u < *w {
                    *x1
                } else {
                    *x2
                }
            }
            Law::Discrete { atoms, weights } => {
                let mut acc = 0.0;
                for (a, w) in atoms.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().expect("validated non-empty")
            }
            Law::Product { .. } => unreachable!("products are flattened"),
        }
    }

    /// Quadrature rule of a scalar law. Alone, continuous laws get a fine
    /// composite rule so that kinked integrands stay accurate; as product
    /// factors they get a single Gauss rule to keep the tensor small.
    fn rule(&self, alone: bool) -> (Vec<f64>, Vec<f64>) {
        match self {
            Law::Normal { mean, std } if alone => {
                let r = composite_gauss_legendre(-10.0, 10.0, NORMAL_PANELS, PANEL_NODES);
                let w = r.nodes.iter().zip(&r.weights).map(|(z, w)| w * std_normal_pdf(*z)).collect();
                (r.nodes.iter().map(|z| mean + std * z).collect(), w)
            }
            Law::Normal { mean, std } => {
                let r = standard_normal_rule(FACTOR_NODES);
                (r.nodes.iter().map(|z| mean + std * z).collect(), r.weights)
            }
            Law::Uniform { a, b } => {
                let r = if alone {
                    composite_gauss_legendre(*a, *b, UNIFORM_PANELS, PANEL_NODES)
                } else {
                    gauss_legendre_on(FACTOR_NODES, *a, *b)
                };
                let scale = 1.0 / (b - a);
                (r.nodes, r.weights.iter().map(|w| w * scale).collect())
            }
            Law::TwoPoint { x1, x2, w } => (vec![*x1, *x2], vec![*w, 1.0 - w]),
            Law::Discrete { atoms, weights } => (atoms.clone(), weights.clone()),
            Law::Product { .. } => unreachable!("products are flattened"),
        }
    }

    /// Draw `n` observations; row `i`, coordinate `c` uses counter `i * m + c`.
    pub fn sample(&self, seed: u64, n: usize) -> Sample {
        let factors = self.scalar_factors();
        let m = factors.len();
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            for (c, f) in factors.iter().enumerate() {
                data.push(f.quantile_at(counter_unit(seed, (i * m + c) as u64)));
            }
        }
        Sample::from_row_major(data, m).expect("laws produce finite draws")
    }

    /// Oracle with a precomputed quadrature rule.
    pub fn oracle(&self) -> Result<LawOracle> {
        self.validate()?;
        let factors = self.scalar_factors();
        let alone = factors.len() == 1;
        let rules: Vec<(Vec<f64>, Vec<f64>)> = factors.iter().map(|f| f.rule(alone)).collect();
        let total = rules
            .iter()
            .try_fold(1usize, |acc, (n, _)| acc.checked_mul(n.len()))
            .unwrap_or(usize::MAX);
        let tensor = if total <= MAX_TENSOR_NODES {
            Some(tensor_rule(&rules))
        } else {
            None
        };
        Ok(LawOracle {
            law: self.clone(),
            dim: factors.len(),
            tensor,
        })
    }
}

fn bad(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

fn tensor_rule(rules: &[(Vec<f64>, Vec<f64>)]) -> (Vec<f64>, Vec<f64>) {
    let dim = rules.len();
    let mut points: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = vec![1.0];
    let mut count = 1usize;
    for (d, (nodes, ws)) in rules.iter().enumerate() {
        let mut next_points = Vec::with_capacity(count * nodes.len() * (d + 1));
        let mut next_weights = Vec::with_capacity(count * nodes.len());
        for i in 0..count {
            for (x, w) in nodes.iter().zip(ws) {
                next_points.extend_from_slice(&points[i * d..(i + 1) * d]);
                next_points.push(*x);
                next_weights.push(weights[i] * w);
            }
        }
        points = next_points;
        weights = next_weights;
        count *= nodes.len();
    }
    debug_assert_eq!(points.len(), count * dim);
    (points, weights)
}

/// A [`Law`] with its quadrature rule built once.
#[derive(Debug, Clone)]
pub struct LawOracle {
    pub law: Law,
    dim: usize,
    tensor: Option<(Vec<f64>, Vec<f64>)>,
}

impl DistributionOracle for LawOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&self, seed: u64, count: usize) -> Sample {
        self.law.sample(seed, count)
    }

    fn nodes(&self) -> Option<NodeView<'_>> {
        self.tensor.as_ref().map(|(p, w)| NodeView {
            points: p,
            dim: self.dim,
            weights: Some(w),
        })
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Law::Normal { mean, std } => write!(f, "normal:{mean},{std}"),
            Law::Uniform { a, b } => write!(f, "uniform:{a},{b}"),
            Law::TwoPoint { x1, x2, w } => write!(f, "two-point:{x1},{x2},{w}"),
            Law::Discrete { atoms, weights } => {
                let pairs: Vec<String> = atoms
                    .iter()
                    .zip(weights)
                    .map(|(a, w)| format!("{a}@{w}"))
                    .collect();
                write!(f, "discrete:{}", pairs.join(","))
            }
            Law::Product { factors } => {
                let parts: Vec<String> = factors.iter().map(|l| l.to_string()).collect();
                write!(f, "product:{}", parts.join("|"))
            }
        }
    }
}

/// Parses `normal:MEAN,STD`, `normal-var:MEAN,VAR`, `uniform:A,B`,
/// `two-point:X1,X2,W`, `discrete:A1@W1,A2@W2,...` and
/// `product:LAW|LAW|...`.
impl FromStr for Law {
    type Err = Error;

    fn from_str(s: &str) -> Result<Law> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| bad(format!("law `{s}` lacks a `kind:` prefix")))?;
        let nums = |want: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("law `{s}`: {e}")))?;
            if v.len() != want {
                return Err(bad(format!("law `{s}` needs {want} numbers")));
            }
            Ok(v)
        };
        let law = match kind.trim() {
            "normal" => {
                let v = nums(2)?;
                Law::Normal { mean: v[0], std: v[1] }
            }
            "normal-var" => {
                let v = nums(2)?;
                Law::normal_var(v[0], v[1])
            }
            "uniform" => {
                let v = nums(2)?;
                Law::Uniform { a: v[0], b: v[1] }
            }
            "two-point" => {
                let v = nums(3)?;
                Law::TwoPoint { x1: v[0], x2: v[1], w: v[2] }
            }
            "discrete" => {
                let mut atoms = Vec::new();
                let mut weights = Vec::new();
                for part in rest.split(',') {
                    let (a, w) = part
                        .split_once('@')
                        .ok_or_else(|| bad(format!("discrete atom `{part}` needs `value@weight`")))?;
                    atoms.push(a.trim().parse().map_err(|e| bad(format!("{e}")))?);
                    weights.push(w.trim().parse().map_err(|e| bad(format!("{e}")))?);
                }
                Law::Discrete { atoms, weights }
            }
            "product" => Law::Product {
                factors: rest.split('|').map(str::parse).collect::<Result<_>>()?,
            },
            other => return Err(bad(format!("unknown law kind `{other}`"))),
        };
        law.validate()?;
        Ok(law)
    }
}
