use composite_risk::law::{counter_unit, derive_seed};
use composite_risk::quadrature::gauss_legendre;
use composite_risk::{
    estimate_empirical, estimate_mixed, eval_exact_chain, make_mean_semideviation,
    uniform_kernel_powermax, BandwidthSchedule, CompositeSpec, DimSignature, KernelFamily,
    KernelSpec, Law, Layer, MeasureParams, Sample, SmoothingPlan,
};
use rayon::prelude::*;

fn msd() -> CompositeSpec {
    make_mean_semideviation(&MeasureParams::mean_semideviation(0.5, 2.0)).unwrap()
}

fn fixed_h(family: KernelFamily, layers: &[usize], h: f64) -> SmoothingPlan {
    SmoothingPlan::new(
        layers.iter().copied(),
        KernelSpec::new(family, 1, 2.0).unwrap(),
        BandwidthSchedule::Power { a: h, gamma: 0.0 },
    )
}

fn normal_sample(seed: u64, n: usize) -> Sample {
    Law::normal_var(10.0, 3.0).sample(seed, n)
}

#[test]
fn empty_plan_is_bit_identical() {
    let sample = normal_sample(5, 64);
    let spec = msd();
    let plan = SmoothingPlan::empirical(1);
    let a = estimate_empirical(&spec, &sample).unwrap();
    let b = estimate_mixed(&spec, &sample, &plan).unwrap();
    assert_eq!(a.value[0].to_bits(), b.value[0].to_bits());
    assert_eq!(a.chain, b.chain);
}

#[test]
fn constant_and_two_point_samples() {
    let spec = msd();
    let constant = Sample::from_values(&[3.0; 50]).unwrap();
    assert_eq!(estimate_empirical(&spec, &constant).unwrap().value[0], 3.0);
    let two = Sample::from_values(&[0.0, 2.0]).unwrap();
    let want = 1.0 + 0.5 * 0.5f64.sqrt();
    assert!((estimate_empirical(&spec, &two).unwrap().value[0] - want).abs() < 1e-15);
    let tiny = estimate_mixed(&spec, &two, &fixed_h(KernelFamily::Uniform, &[2], 1e-8)).unwrap();
    assert!((tiny.value[0] - want).abs() < 1e-6);
}

#[test]
fn smoothing_a_single_point_tail() {
    let u = 0.7;
    let spec = CompositeSpec::new(
        "tail",
        DimSignature::new(1, vec![1]),
        vec![Layer::innermost(1, 1, move |x| vec![(x[0] - u).max(0.0).powi(2)])],
    );
    let sample = Sample::from_values(&[u]).unwrap();
    let mut plan = fixed_h(KernelFamily::Uniform, &[1], 1.0);
    plan.convolution_nodes = 400;
    let v = estimate_mixed(&spec, &sample, &plan).unwrap().value[0];
    assert!((v - 1.0 / 6.0).abs() < 1e-6, "{v}");
    assert!((uniform_kernel_powermax(&[u], u, 2.0, 1.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
}

#[test]
fn closed_form_hand_values() {
    let v = uniform_kernel_powermax(&[5.0], 0.0, 2.0, 0.1).unwrap();
    let want = (5.1f64.powi(3) - 4.9f64.powi(3)) / (2.0 * 3.0 * 0.1);
    assert!((v - want).abs() < 1e-12);
    assert!((v - 25.00333).abs() < 1e-5);
    assert_eq!(uniform_kernel_powermax(&[-1.0, 0.4, 0.9], 1.0, 2.5, 0.1).unwrap(), 0.0);
}

fn convolution(values: &[f64], u: f64, p: f64, h: f64) -> f64 {
    let rule = gauss_legendre(1000);
    values
        .iter()
        .map(|&x| {
            let kink = ((u - x) / h).clamp(-1.0, 1.0);
            let mut total = 0.0;
            for (a, b) in [(-1.0, kink), (kink, 1.0)] {
                if b > a {
                    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
                    total += half
                        * rule.integrate(|t| 0.5 * (x + h * (mid + half * t) - u).max(0.0).powf(p));
                }
            }
            total
        })
        .sum::<f64>()
        / values.len() as f64
}

#[test]
fn closed_form_matches_convolution_quadrature() {
    for probe in 0..200u64 {
        let at = |i: u64| counter_unit(77, 8 * probe + i);
        let values: Vec<f64> = (0..5).map(|i| 4.0 * at(i) - 2.0).collect();
        let u = 2.0 * at(5) - 1.0;
        let h = 0.01 + 1.5 * at(6);
        let p = 1.0 + 2.0 * at(7).max(1e-3);
        let closed = uniform_kernel_powermax(&values, u, p, h).unwrap();
        let quad = convolution(&values, u, p, h);
        assert!((closed - quad).abs() < 1e-8, "u {u}, h {h}, p {p}: {closed} vs {quad}");
    }
}

#[test]
fn closed_form_dominates_empirical_tail_mean() {
    for probe in 0..300u64 {
        let at = |i: u64| counter_unit(91, 16 * probe + i);
        let values: Vec<f64> = (0..10).map(|i| 6.0 * at(i) - 3.0).collect();
        let u = 4.0 * at(10) - 2.0;
        let h = 0.01 + at(11);
        let p = 2.0 + at(12);
        let smoothed = uniform_kernel_powermax(&values, u, p, h).unwrap();
        let empirical = values.iter().map(|x| (x - u).max(0.0).powf(p)).sum::<f64>() / 10.0;
        assert!(smoothed >= empirical - 1e-12, "{smoothed} < {empirical}");
    }
}

#[test]
fn small_bandwidth_errors_shrink() {
    let spec = CompositeSpec::new(
        "lipschitz",
        DimSignature::new(1, vec![1, 1]),
        vec![
            Layer::scalar(1, |eta, x| (eta * x[0]).sin() + x[0].abs())
                .with_scalar_derivative(|eta, x| x[0] * (eta * x[0]).cos()),
            Layer::innermost(2, 1, |x| vec![x[0].cos()]),
        ],
    );
    let sample = Law::normal_var(0.0, 1.0).sample(3, 40);
    let empirical = estimate_empirical(&spec, &sample).unwrap();
    for family in [KernelFamily::Uniform, KernelFamily::Gaussian, KernelFamily::Epanechnikov] {
        let errors: Vec<f64> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|&h| {
                let est = estimate_mixed(&spec, &sample, &fixed_h(family, &[1, 2], h)).unwrap();
                est.chain
                    .means
                    .iter()
                    .zip(&empirical.chain.means)
                    .map(|(a, b)| (a[0] - b[0]).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{family:?}: {errors:?}");
        assert!(errors[2] < 1e-6);
    }
}

#[test]
fn estimates_ignore_row_order() {
    let sample = normal_sample(11, 57);
    let perm: Vec<usize> = (0..57).map(|i| (i * 23 + 5) % 57).collect();
    let shuffled = sample.permuted(&perm);
    let spec = msd();
    let plan = SmoothingPlan::new([2], KernelSpec::new(KernelFamily::Uniform, 1, 2.0).unwrap(), BandwidthSchedule::Silverman);
    let a = estimate_empirical(&spec, &sample).unwrap().value[0];
    let b = estimate_empirical(&spec, &shuffled).unwrap().value[0];
    assert!((a - b).abs() < 1e-12);
    let a = estimate_mixed(&spec, &sample, &plan).unwrap().value[0];
    let b = estimate_mixed(&spec, &shuffled, &plan).unwrap().value[0];
    assert!((a - b).abs() < 1e-12);
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

#[test]
fn msd_error_shrinks_per_decade() {
    let spec = msd();
    let truth = eval_exact_chain(&spec, &Law::normal_var(10.0, 3.0).oracle().unwrap())
        .unwrap()
        .value()[0];
    let medians: Vec<f64> = [100usize, 1_000, 10_000]
        .iter()
        .map(|&n| {
            let errs: Vec<f64> = (0..200u64)
                .into_par_iter()
                .map(|r| {
                    let s = normal_sample(derive_seed(2024, r), n);
                    (estimate_empirical(&spec, &s).unwrap().value[0] - truth).abs()
                })
                .collect();
            median(errs)
        })
        .collect();
    println!("median errors {medians:?}");
    assert!(medians[0] / medians[1] >= 2.5 && medians[1] / medians[2] >= 2.5, "{medians:?}");
}
