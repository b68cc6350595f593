//! Acceptance criteria, one `PASS`/`FAIL` line each, followed by the
//! sample-size properties that share the n = 200 design. The process exits
//! with status 1 when any line fails.

use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use composite_risk::harness::{
    estimates_csv, reference_for, run_replications, summarize_distribution, PlanConfig,
    ReplicationConfig, Statistic,
};
use composite_risk::law::LawOracle;
use composite_risk::measures::HigherOrderFamily;
use composite_risk::quadrature::{gauss_legendre, Rule1d};
use composite_risk::{
    asymptotic_report, check_strong_identity, estimate_empirical, eval_exact_chain,
    make_mean_semideviation, minimize_scalar, optimal_value_clt_variance, plugin_sigma,
    systemic_value, uniform_kernel_powermax, Aggregation, BandwidthSchedule, CompositeSpec,
    DimSignature, KernelFamily, KernelSpec, Law, Layer, MeasureConfig, MeasureParams,
    ObjectiveSource, OuterMeasure, Sample, ScalarProblem,
};

const N: usize = 200;
const R: usize = 1000;
const KS_LIMIT: f64 = 0.08;

static FAILURES: AtomicUsize = AtomicUsize::new(0);

fn report(label: &str, name: &str, pass: bool, detail: &str) {
    println!("{label} {}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    if !pass {
        FAILURES.fetch_add(1, Ordering::SeqCst);
    }
}

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    report(&format!("criterion {id}"), name, pass, detail);
}

fn property(name: &str, pass: bool, detail: &str) {
    report("property", name, pass, detail);
}

fn law_x() -> Law {
    Law::normal_var(10.0, 3.0)
}

fn law_y() -> Law {
    Law::normal_var(20.0, 5.0)
}

fn higher_order() -> MeasureConfig {
    MeasureConfig::HigherOrder { c: 20.0, p: 2.0 }
}

fn uniform_plan() -> PlanConfig {
    PlanConfig::new(KernelFamily::Uniform, BandwidthSchedule::Silverman)
}

fn exact_solve(oracle: &LawOracle) -> (f64, f64) {
    let family = HigherOrderFamily { c: 20.0, p: 2.0 };
    let problem = ScalarProblem {
        family: &family,
        bracket: (0.0, 60.0),
        source: ObjectiveSource::Exact(oracle),
    };
    let r = minimize_scalar(&problem, 1e-8).unwrap();
    (r.u_hat, r.theta)
}

fn criterion_1_higher_order_exact_solve() {
    let start = Instant::now();
    let oracle = law_x().oracle().unwrap();
    let (u, theta) = exact_solve(&oracle);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = (u - 14.5048).abs() <= 1e-3 && (theta - 15.5163).abs() <= 1e-3 && elapsed < 1.0;
    verdict(
        1,
        "higher-order exact solve",
        pass,
        &format!("u_hat = {u:.6}, theta = {theta:.6}, {elapsed:.3} s"),
    );
}

/// `E_Z[(x + h Z - u)_+^p]` for `Z ~ U[-1, 1]` by Gauss–Legendre on each side
/// of the kink.
fn convolution_oracle(values: &[f64], u: f64, p: f64, h: f64, base: &Rule1d) -> f64 {
    let mut total = 0.0;
    for &x in values {
        let kink = ((u - x) / h).clamp(-1.0, 1.0);
        let f = |z: f64| 0.5 * (x + h * z - u).max(0.0).powf(p);
        for (a, b) in [(-1.0, kink), (kink, 1.0)] {
            if b > a {
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                total += half * base.integrate(|t| f(mid + half * t));
            }
        }
    }
    total / values.len() as f64
}

fn criterion_2_closed_form_kernel() {
    let start = Instant::now();
    let mut state = 0x5EED_u64;
    let mut unit = move || {
        state = composite_risk::law::counter_u64(state, 1);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let base = gauss_legendre(1000);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = 1 + (unit() * 5.0) as usize;
        let values: Vec<f64> = (0..n).map(|_| 10.0 * unit() - 5.0).collect();
        let u = 10.0 * unit() - 5.0;
        let p = 1.0 + 1e-3 + 3.0 * unit();
        let h = 0.01 + 2.0 * unit();
        let closed = uniform_kernel_powermax(&values, u, p, h).unwrap();
        let quad = convolution_oracle(&values, u, p, h, &base);
        worst = worst.max((closed - quad).abs() / quad.abs().max(1.0));
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        2,
        "closed-form uniform kernel",
        worst <= 1e-8 && elapsed < 10.0,
        &format!("max error {worst:.2e} over 10^4 probes, {elapsed:.2} s"),
    );
}

fn criterion_3_limit_standard_deviations() {
    let family = HigherOrderFamily { c: 20.0, p: 2.0 };
    let mut parts = Vec::new();
    let mut pass = true;
    for (law, target) in [(law_x(), 16.032), (law_y(), 20.6972)] {
        let oracle = law.oracle().unwrap();
        let (u, _) = exact_solve(&oracle);
        let sd = optimal_value_clt_variance(&family, &oracle, u).unwrap().sqrt();
        pass &= (sd - target).abs() <= 0.05;
        parts.push(format!("{law}: sqrt(v) = {sd:.5} (target {target})"));
    }
    verdict(3, "optimal-value limit deviations", pass, &parts.join("; "));
}

fn criterion_4_difference_of_risks() {
    let (_, rx) = exact_solve(&law_x().oracle().unwrap());
    let (_, ry) = exact_solve(&law_y().oracle().unwrap());
    let diff = rx - ry;
    let exact_ok = (diff + 11.6052).abs() <= 2e-3;
    let config = ReplicationConfig {
        statistic: Statistic::Difference {
            first: higher_order(),
            second: higher_order(),
        },
        laws: vec![law_x(), law_y()],
        n: N,
        replications: R,
        seed: 52,
        plan: Some(uniform_plan()),
    };
    let reference = reference_for(&config).unwrap();
    let table = run_replications(&config, 8).unwrap();
    let summary = summarize_distribution(&table.estimates, &reference, None).unwrap();
    let ks = summary.ks.unwrap_or(f64::INFINITY);
    verdict(
        4,
        "difference of risks",
        exact_ok && ks < KS_LIMIT,
        &format!(
            "exact difference {diff:.5}; simulated mean {:.4}, std {:.4} vs reference N({:.4}, {:.4}^2), KS {ks:.4} (limit {KS_LIMIT})",
            summary.mean,
            summary.std,
            reference.mean,
            reference.variance.sqrt()
        ),
    );
}

fn criterion_5_systemic_risk() {
    let (_, rx) = exact_solve(&law_x().oracle().unwrap());
    let (_, ry) = exact_solve(&law_y().oracle().unwrap());
    let outer = OuterMeasure::MeanSemideviation { kappa: 0.5, p: 2.0 };
    let agg = Aggregation::new(vec![0.5, 0.5], outer).unwrap();
    let value = systemic_value(&[rx, ry], &agg).unwrap();
    let exact_ok = (value - 23.3704).abs() <= 2e-3;
    let config = ReplicationConfig {
        statistic: Statistic::Single {
            measure: MeasureConfig::Systemic {
                components: vec![higher_order(), higher_order()],
                weights: vec![0.5, 0.5],
                outer,
            },
        },
        laws: vec![law_x(), law_y()],
        n: N,
        replications: R,
        seed: 53,
        plan: Some(uniform_plan()),
    };
    let table = run_replications(&config, 8).unwrap();
    let mean = table.estimates.iter().sum::<f64>() / R as f64;
    let var = table.estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (R - 1) as f64;
    let se = (var / R as f64).sqrt();
    let z = (mean - value) / se;
    verdict(
        5,
        "systemic risk",
        exact_ok && z.abs() <= 3.0,
        &format!("exact value {value:.5}; simulated mean {mean:.4} is {z:.1} standard errors ({se:.4}) away"),
    );
}

/// KS distance of standardized errors to N(0, 1) and the ratio of the mean
/// plug-in limit variance to `n Var(rho_hat)`.
fn clt_check(spec: &CompositeSpec, law: &Law, seed: u64) -> (f64, f64) {
    let oracle = law.oracle().unwrap();
    let exact = eval_exact_chain(spec, &oracle).unwrap();
    let sigma = plugin_sigma(spec, &oracle, &exact).unwrap();
    let chains = composite_risk::chain_matrices(spec, &oracle, &exact, true).unwrap();
    let v = composite_risk::limit_covariance(&sigma, &chains).unwrap()[(0, 0)];
    let rho = exact.value()[0];
    let mut z = Vec::with_capacity(R);
    let mut plugin = 0.0;
    let mut errs = Vec::with_capacity(R);
    for r in 0..R {
        let s = law.sample(composite_risk::law::derive_seed(seed, r as u64), N);
        let est = estimate_empirical(spec, &s).unwrap();
        let rep = asymptotic_report(spec, &s, &est, 0.95).unwrap();
        plugin += rep.limit_cov[(0, 0)] / R as f64;
        let e = (N as f64).sqrt() * (est.value[0] - rho);
        errs.push(e);
        z.push(e / v.sqrt());
    }
    z.sort_by(|a, b| a.total_cmp(b));
    let ks = composite_risk::harness::ks_distance(&z, 0.0, 1.0);
    let m = errs.iter().sum::<f64>() / R as f64;
    let rep_var = errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (R - 1) as f64;
    (ks, plugin / rep_var)
}

fn criterion_6_clt_properties() {
    let mean = CompositeSpec::new(
        "mean",
        DimSignature::new(1, vec![1]),
        vec![Layer::innermost(1, 1, |x| vec![x[0]])],
    );
    let msd = make_mean_semideviation(&MeasureParams::mean_semideviation(0.5, 2.0)).unwrap();
    let (ks0, ratio0) = clt_check(&mean, &Law::Normal { mean: 0.0, std: 1.0 }, 61);
    let (ks1, ratio1) = clt_check(&msd, &law_x(), 62);
    let pass = ks0 < KS_LIMIT
        && ks1 < KS_LIMIT
        && (ratio0 - 1.0).abs() <= 0.1
        && (ratio1 - 1.0).abs() <= 0.1;
    verdict(
        6,
        "CLT properties",
        pass,
        &format!(
            "mean: KS {ks0:.4}, variance ratio {ratio0:.3}; mean-semideviation: KS {ks1:.4}, variance ratio {ratio1:.3}"
        ),
    );
}

/// `f1 = eta * x + x^2`, `f2 = sin(eta) + x`, `f3 = x^3` on a discrete sample.
fn nested_fixture() -> CompositeSpec {
    CompositeSpec::new(
        "fixture",
        DimSignature::new(1, vec![1, 1, 1]),
        vec![
            Layer::scalar(1, |e, x| e * x[0] + x[0] * x[0]).with_scalar_derivative(|_, x| x[0]),
            Layer::scalar(2, |e, x| e.sin() + x[0]).with_scalar_derivative(|e, _| e.cos()),
            Layer::innermost(3, 1, |x| vec![x[0].powi(3)]),
        ],
    )
}

fn criterion_7_brute_force_equivalence() {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in 2..=6usize {
        for shift in 0..4 {
            let xs: Vec<f64> = (0..n).map(|i| ((i * 7 + shift * 3) % 11) as f64 / 4.0 - 1.0).collect();
            let sample = Sample::from_values(&xs).unwrap();
            let nf = n as f64;
            // Fully nested sums.
            let e3 = xs.iter().map(|x| x.powi(3)).sum::<f64>() / nf;
            let e2 = xs.iter().map(|x| e3.sin() + x).sum::<f64>() / nf;
            let e1 = xs.iter().map(|x| e2 * x + x * x).sum::<f64>() / nf;
            let spec = nested_fixture();
            let est = estimate_empirical(&spec, &sample).unwrap();
            worst = worst.max((est.value[0] - e1).abs());
            // Stacked covariance with 1/n normalization.
            let z: Vec<[f64; 3]> = xs.iter().map(|x| [e2 * x + x * x, e3.sin() + x, x.powi(3)]).collect();
            let mean = [e1, e2, e3];
            let sigma = plugin_sigma(&spec, &sample, &est.chain).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    let c = z.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / nf;
                    worst = worst.max((sigma.full[(a, b)] - c).abs());
                }
            }
            // k = 1 prefix of the same chain.
            let short = CompositeSpec::new(
                "short",
                DimSignature::new(1, vec![1, 1]),
                vec![
                    Layer::scalar(1, |e, x| e.sin() + x[0]).with_scalar_derivative(|e, _| e.cos()),
                    Layer::innermost(2, 1, |x| vec![x[0].powi(3)]),
                ],
            );
            worst = worst.max((estimate_empirical(&short, &sample).unwrap().value[0] - e2).abs());
            cases += 1;
        }
    }
    verdict(
        7,
        "brute-force equivalence",
        worst <= 1e-13,
        &format!("{cases} fixtures, max deviation {worst:.1e}"),
    );
}

fn criterion_8_identity_check() {
    let mut wrong = Vec::new();
    let mut checked = 0;
    let schedules = [
        (BandwidthSchedule::Silverman, false),
        (BandwidthSchedule::Power { a: 1.0, gamma: 0.2 }, false),
        (BandwidthSchedule::Power { a: 1.0, gamma: 0.5 }, false),
        (BandwidthSchedule::Power { a: 2.0, gamma: 0.5 + 1e-9 }, true),
        (BandwidthSchedule::Power { a: 0.5, gamma: 0.6 }, true),
        (BandwidthSchedule::Power { a: 1.0, gamma: 1.5 }, true),
    ];
    for family in [KernelFamily::Uniform, KernelFamily::Gaussian, KernelFamily::Epanechnikov] {
        for p in [1.0, 2.0, 3.0] {
            let kernel = KernelSpec::new(family, 1, p).unwrap();
            for (schedule, expected) in &schedules {
                let d = check_strong_identity(schedule, &kernel, p);
                checked += 1;
                if d.passes != *expected {
                    wrong.push(format!("{family}/{schedule}/p={p}"));
                }
            }
        }
    }
    verdict(
        8,
        "identity check",
        wrong.is_empty(),
        &format!("{checked} cases, wrong: {wrong:?}"),
    );
}

fn criterion_9_determinism() {
    let config = ReplicationConfig {
        statistic: Statistic::Single {
            measure: higher_order(),
        },
        laws: vec![law_x()],
        n: N,
        replications: 64,
        seed: 9,
        plan: Some(uniform_plan()),
    };
    let outputs: Vec<String> = [1, 4, 16]
        .iter()
        .map(|&w| estimates_csv(&run_replications(&config, w).unwrap()))
        .collect();
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    verdict(
        9,
        "determinism across workers",
        same,
        &format!("{} bytes per table, identical for 1, 4 and 16 workers: {same}", outputs[0].len()),
    );
}

fn optimal_value_study(plan: Option<PlanConfig>, seed: u64) -> ReplicationConfig {
    ReplicationConfig {
        statistic: Statistic::Single {
            measure: higher_order(),
        },
        laws: vec![law_x()],
        n: N,
        replications: R,
        seed,
        plan,
    }
}

fn optimal_value_clt() {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, plan, seed) in [("empirical", None, 71), ("uniform kernel", Some(uniform_plan()), 72)] {
        let config = optimal_value_study(plan, seed);
        let reference = reference_for(&config).unwrap();
        let table = run_replications(&config, 8).unwrap();
        let summary = summarize_distribution(&table.estimates, &reference, None).unwrap();
        let ks = summary.ks.unwrap_or(f64::INFINITY);
        pass &= ks < KS_LIMIT;
        parts.push(format!(
            "{name}: KS {ks:.4}, bias {:.4}, std {:.4} vs {:.4}",
            summary.bias,
            summary.std,
            reference.variance.sqrt()
        ));
    }
    property("optimal-value CLT at n = 200", pass, &parts.join("; "));
}

fn optimal_value_study_mean() {
    let table = run_replications(&optimal_value_study(None, 5), 8).unwrap();
    let mean = table.estimates.iter().sum::<f64>() / R as f64;
    let tol = 3.0 * (16.032 / (N as f64).sqrt()) / (R as f64).sqrt();
    property(
        "optimal-value study mean",
        (mean - 15.5163).abs() <= tol,
        &format!("mean {mean:.5}, target 15.5163 +- {tol:.4}"),
    );
}

fn main() {
    let checks: [(&str, fn()); 11] = [
        ("criterion 1", criterion_1_higher_order_exact_solve),
        ("criterion 2", criterion_2_closed_form_kernel),
        ("criterion 3", criterion_3_limit_standard_deviations),
        ("criterion 4", criterion_4_difference_of_risks),
        ("criterion 5", criterion_5_systemic_risk),
        ("criterion 6", criterion_6_clt_properties),
        ("criterion 7", criterion_7_brute_force_equivalence),
        ("criterion 8", criterion_8_identity_check),
        ("criterion 9", criterion_9_determinism),
        ("property", optimal_value_clt),
        ("property", optimal_value_study_mean),
    ];
    panic::set_hook(Box::new(|_| {}));
    for (label, check) in checks {
        if let Err(e) = panic::catch_unwind(AssertUnwindSafe(check)) {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            report(label, "panicked", false, &msg);
        }
    }
    let failed = FAILURES.load(Ordering::SeqCst);
    println!("{failed} of {} checks failed", checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
