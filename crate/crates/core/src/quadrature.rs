//! Gauss quadrature rules and deterministic summation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .collect();
        pairwise_sum(&terms)
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
///
/// Roots are found by Newton iteration on the three-term recurrence, starting
/// from the Chebyshev-like guess `cos(pi (i - 1/4) / (n + 1/2))`.
pub fn gauss_legendre(n: usize) -> Rule1d {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule1d { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Rule1d {
    let base = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Rule1d {
        nodes: base.nodes.iter().map(|t| mid + half * t).collect(),
        weights: base.weights.iter().map(|w| w * half).collect(),
    }
}

/// `panels` equal panels on `[a, b]` with a `per_panel`-node Gauss–Legendre
/// rule on each. Kinks then cost only the panel that contains them.
pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize, per_panel: usize) -> Rule1d {
    assert!(panels >= 1, "rule needs at least one panel");
    let base = gauss_legendre(per_panel);
    let w = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * per_panel);
    let mut weights = Vec::with_capacity(panels * per_panel);
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * w;
        for (x, wt) in base.nodes.iter().zip(&base.weights) {
            nodes.push(mid + 0.5 * w * x);
            weights.push(0.5 * w * wt);
        }
    }
    Rule1d { nodes, weights }
}

/// Physicists' Gauss–Hermite rule for the weight `exp(-x^2)`.
///
/// Starting nodes are the eigenvalues of the Jacobi matrix; each is then
/// polished by Newton steps on the orthonormal recurrence, which also gives
/// the weights.
pub fn gauss_hermite(n: usize) -> Rule1d {
    assert!(n >= 1, "rule needs at least one node");
    let pim4 = PI.powf(-0.25);
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let mut guesses: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    guesses.sort_by(|a, b| a.total_cmp(b));
    let mut nodes: Vec<f64> = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (i, &z0) in guesses.iter().enumerate() {
        // Solve the lower half and mirror it, so the rule is symmetric.
        let mirror = n - 1 - i;
        if mirror < i {
            nodes.push(-nodes[mirror]);
            weights.push(weights[mirror]);
            continue;
        }
        if mirror == i {
            let (_, d) = hermite_orthonormal(n, 0.0, pim4);
            nodes.push(0.0);
            weights.push(2.0 / (d * d));
            continue;
        }
        let mut z = z0;
        for _ in 0..8 {
            let (p, d) = hermite_orthonormal(n, z, pim4);
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = hermite_orthonormal(n, z, pim4);
        nodes.push(z);
        weights.push(2.0 / (d * d));
    }
    Rule1d { nodes, weights }
}

fn hermite_orthonormal(n: usize, x: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = x * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    let d = (2.0 * n as f64).sqrt() * p2;
    (p1, d)
}

/// Gauss–Hermite rule for the standard normal law: nodes `sqrt(2) x`,
/// weights normalized to sum to one.
pub fn standard_normal_rule(n: usize) -> Rule1d {
    let base = gauss_hermite(n);
    let scale = 1.0 / PI.sqrt();
    Rule1d {
        nodes: base.nodes.iter().map(|x| x * std::f64::consts::SQRT_2).collect(),
        weights: base.weights.iter().map(|w| w * scale).collect(),
    }
}

/// Pairwise (cascade) summation with a fixed split order, so the result
/// depends only on the input order and not on how work was scheduled.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 64, 1000] {
            let rule = gauss_legendre(n);
            assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-12, "n={n}");
            let deg = (2 * n - 1).min(9) as i32;
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            assert!((rule.integrate(|x| x.powi(deg)) - exact).abs() < 1e-12, "n={n}");
        }
        let rule = gauss_legendre(64);
        assert!((rule.integrate(|x| x.powi(8)) - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule_resolves_kinks() {
        let rule = composite_gauss_legendre(-1.0, 2.0, 300, 8);
        let v = rule.integrate(|x| (x - 0.123_456).max(0.0).powi(2));
        assert!((v - (2.0f64 - 0.123_456).powi(3) / 3.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn legendre_maps_to_interval() {
        let rule = gauss_legendre_on(10, 0.0, 3.0);
        assert!((rule.integrate(|x| x * x) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_moments_of_standard_normal() {
        for n in [4usize, 20, 64, 200] {
            let rule = standard_normal_rule(n);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12, "n={n}");
            assert!(rule.integrate(|x| x).abs() < 1e-12);
            assert!((rule.integrate(|x| x * x) - 1.0).abs() < 1e-11, "n={n}");
            assert!((rule.integrate(|x| x.powi(4)) - 3.0).abs() < 1e-10, "n={n}");
            for w in rule.nodes.windows(2) {
                assert!(w[0] < w[1]);
            }
        }
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
