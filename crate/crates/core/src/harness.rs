//! Seeded replication studies and distribution summaries.
//!
//! Replication `r` draws its observations from the stream
//! `derive_seed(seed, r)`, so a table does not depend on the number of
//! workers or on the order in which replications finish.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::asymptotics::{chain_matrices, limit_covariance, plugin_sigma};
use crate::composite::{eval_exact_chain, CompositeSpec, DistributionOracle};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_empirical, estimate_mixed, BandwidthSchedule, KernelFamily, KernelSpec, SmoothingPlan,
    DEFAULT_CONVOLUTION_NODES,
};
use crate::law::{counter_u64, derive_seed, std_normal_cdf, std_normal_pdf, Law};
use crate::measures::{
    make_higher_order_family, quantile_sorted, stack_components, systemic_limit, systemic_value,
    Aggregation, LimitSummary, MeasureConfig, MeasureParams,
};
use crate::optimize::{minimize_scalar, ObjectiveSource, ScalarFamily, ScalarProblem, DEFAULT_TOL};
use crate::sample::Sample;

/// Draws of the limit law used for systemic reference variances.
pub const SYSTEMIC_LIMIT_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub law: Law,
    pub seed: u64,
}

/// `n` draws from `config.law`.
pub fn sample(config: &SamplerConfig, n: usize) -> Result<Sample> {
    config.law.validate()?;
    if n == 0 {
        return Err(Error::InsufficientSample { n, required: 1 });
    }
    Ok(config.law.sample(config.seed, n))
}

/// Kernel smoothing requested for an estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub kernel: KernelFamily,
    pub bandwidth: BandwidthSchedule,
    /// Smoothed layers; each measure's power-max layer when absent.
    pub smooth_layers: Option<Vec<usize>>,
    pub convolution_nodes: usize,
}

impl PlanConfig {
    pub fn new(kernel: KernelFamily, bandwidth: BandwidthSchedule) -> Self {
        PlanConfig {
            kernel,
            bandwidth,
            smooth_layers: None,
            convolution_nodes: DEFAULT_CONVOLUTION_NODES,
        }
    }

    pub fn plan_for(&self, measure: &MeasureConfig) -> Result<SmoothingPlan> {
        let layers = self
            .smooth_layers
            .clone()
            .unwrap_or_else(|| measure.default_smoothed_layers());
        let kernel = KernelSpec::new(self.kernel, measure.dim(), measure.moment_order().max(1.0))?;
        let mut plan = SmoothingPlan::new(layers, kernel, self.bandwidth);
        plan.convolution_nodes = self.convolution_nodes;
        Ok(plan)
    }
}

/// What a replication computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    /// One measure; systemic measures aggregate their components.
    Single { measure: MeasureConfig },
    /// `first(X) - second(Y)`.
    Difference {
        first: MeasureConfig,
        second: MeasureConfig,
    },
}

impl Statistic {
    /// Measures that read observations, in law-slot order.
    fn slots(&self) -> Vec<&MeasureConfig> {
        match self {
            Statistic::Single {
                measure: MeasureConfig::Systemic { components, .. },
            } => components.iter().collect(),
            Statistic::Single { measure } => vec![measure],
            Statistic::Difference { first, second } => vec![first, second],
        }
    }
}

/// Full description of a replication study; echoed into summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationConfig {
    pub statistic: Statistic,
    /// One law shared by every slot, or one law per slot.
    pub laws: Vec<Law>,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// Kernel smoothing; empirical plug-in when absent.
    pub plan: Option<PlanConfig>,
}

impl ReplicationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("n must be >= 2, got {}", self.n)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        match &self.statistic {
            Statistic::Single { measure } => measure.validate()?,
            Statistic::Difference { first, second } => {
                for m in [first, second] {
                    if matches!(m, MeasureConfig::Systemic { .. }) {
                        return Err(Error::InvalidParameter(
                            "differences take non-systemic measures".into(),
                        ));
                    }
                    m.validate()?;
                }
            }
        }
        let slots = self.statistic.slots();
        if self.laws.len() != 1 && self.laws.len() != slots.len() {
            return Err(Error::InvalidParameter(format!(
                "expected 1 or {} laws, got {}",
                slots.len(),
                self.laws.len()
            )));
        }
        for (i, m) in slots.iter().enumerate() {
            let law = &self.laws[law_slot(i, self.laws.len())];
            law.validate()?;
            if law.dim() != m.dim() {
                return Err(Error::Dimension(format!(
                    "law `{law}` has dimension {}, measure needs {}",
                    law.dim(),
                    m.dim()
                )));
            }
        }
        Ok(())
    }
}

fn law_slot(i: usize, laws: usize) -> usize {
    if laws == 1 {
        0
    } else {
        i
    }
}

/// Observations for replication `r`: law `i` is drawn with seed
/// `counter_u64(derive_seed(seed, r), i)`.
pub fn replication_samples(config: &ReplicationConfig, r: usize) -> Vec<Sample> {
    let seed_r = derive_seed(config.seed, r as u64);
    config
        .laws
        .iter()
        .enumerate()
        .map(|(i, law)| law.sample(counter_u64(seed_r, i as u64), config.n))
        .collect()
}

/// Plug-in value of a non-systemic measure on one sample.
pub fn evaluate_measure(measure: &MeasureConfig, sample: &Sample, plan: Option<&PlanConfig>) -> Result<f64> {
    let smoothing = plan.map(|p| p.plan_for(measure)).transpose()?;
    match measure {
        MeasureConfig::HigherOrder { c, p } => {
            let family = make_higher_order_family(&MeasureParams::higher_order(*c, *p))?;
            let bracket = family.default_bracket(&sample.column(0));
            let source = match &smoothing {
                Some(plan) => ObjectiveSource::Mixed(sample, plan),
                None => ObjectiveSource::Empirical(sample),
            };
            let problem = ScalarProblem {
                family: &family,
                bracket,
                source,
            };
            Ok(minimize_scalar(&problem, DEFAULT_TOL)?.theta)
        }
        MeasureConfig::Systemic { .. } => Err(Error::InvalidParameter(
            "systemic measures need one sample per component".into(),
        )),
        other => {
            let spec = other.composite()?.expect("composite measure");
            let report = match &smoothing {
                Some(plan) => estimate_mixed(&spec, sample, plan)?,
                None => estimate_empirical(&spec, sample)?,
            };
            Ok(report.value[0])
        }
    }
}

/// Value of `statistic` on one sample per law.
pub fn evaluate_statistic(statistic: &Statistic, samples: &[Sample], plan: Option<&PlanConfig>) -> Result<f64> {
    let pick = |i: usize| &samples[law_slot(i, samples.len())];
    match statistic {
        Statistic::Single {
            measure: MeasureConfig::Systemic {
                components,
                weights,
                outer,
            },
        } => {
            let risks = components
                .iter()
                .enumerate()
                .map(|(i, m)| evaluate_measure(m, pick(i), plan))
                .collect::<Result<Vec<_>>>()?;
            systemic_value(&risks, &Aggregation::new(weights.clone(), *outer)?)
        }
        Statistic::Single { measure } => evaluate_measure(measure, pick(0), plan),
        Statistic::Difference { first, second } => {
            Ok(evaluate_measure(first, pick(0), plan)? - evaluate_measure(second, pick(1), plan)?)
        }
    }
}

/// A measure reduced to a fixed composite at its (possibly optimized)
/// decision, which is all the first-order limit depends on.
#[derive(Debug, Clone)]
pub struct Linearized {
    pub value: f64,
    pub spec: CompositeSpec,
    pub minimizer: Option<f64>,
}

/// Value and linearizing composite of a non-systemic measure under `oracle`.
///
/// A [`Sample`] oracle gives the empirical plug-in, a law oracle the
/// population quantities.
pub fn linearize(measure: &MeasureConfig, oracle: &dyn DistributionOracle) -> Result<Linearized> {
    match measure {
        MeasureConfig::HigherOrder { c, p } => {
            let family = make_higher_order_family(&MeasureParams::higher_order(*c, *p))?;
            let support = match oracle.nodes() {
                Some(nodes) => (0..nodes.len()).map(|i| nodes.point(i)[0]).collect::<Vec<_>>(),
                None => oracle.draw(0, crate::composite::FALLBACK_DRAWS).column(0),
            };
            let problem = ScalarProblem {
                family: &family,
                bracket: family.default_bracket(&support),
                source: ObjectiveSource::Exact(oracle),
            };
            let r = minimize_scalar(&problem, DEFAULT_TOL)?;
            Ok(Linearized {
                value: r.theta,
                spec: family.at(r.u_hat),
                minimizer: Some(r.u_hat),
            })
        }
        MeasureConfig::Systemic { .. } => Err(Error::InvalidParameter(
            "systemic measures are linearized per component".into(),
        )),
        other => {
            let spec = other.composite()?.expect("composite measure");
            let value = eval_exact_chain(&spec, oracle)?.value()[0];
            Ok(Linearized {
                value,
                spec,
                minimizer: None,
            })
        }
    }
}

/// Component values and their joint limit covariance.
///
/// With one oracle the components share observations and are stacked into
/// one composite; otherwise they are independent and the covariance is
/// block diagonal.
pub fn joint_limit(
    measures: &[&MeasureConfig],
    oracles: &[&dyn DistributionOracle],
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let pick = |i: usize| oracles[law_slot(i, oracles.len())];
    let lins = measures
        .iter()
        .enumerate()
        .map(|(i, m)| linearize(m, pick(i)))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = lins.iter().map(|l| l.value).collect();
    let l = lins.len();
    if oracles.len() == 1 {
        let oracle = oracles[0];
        let m = oracle.dim();
        let specs: Vec<CompositeSpec> = lins.into_iter().map(|l| l.spec).collect();
        let coords = vec![(0..m).collect::<Vec<_>>(); l];
        let stacked = stack_components(&specs, &coords, m)?;
        return Ok((values, limit_cov_of(&stacked, oracle)?));
    }
    let mut cov = DMatrix::zeros(l, l);
    for (i, lin) in lins.iter().enumerate() {
        cov[(i, i)] = limit_cov_of(&lin.spec, pick(i))?[(0, 0)];
    }
    Ok((values, cov))
}

fn limit_cov_of(spec: &CompositeSpec, oracle: &dyn DistributionOracle) -> Result<DMatrix<f64>> {
    let chain = eval_exact_chain(spec, oracle)?;
    let sigma = plugin_sigma(spec, oracle, &chain)?;
    let chains = chain_matrices(spec, oracle, &chain, true)?;
    limit_covariance(&sigma, &chains)
}

/// First-order limit of a statistic: value, `n`-free limit variance and,
/// for systemic measures, the sampled limit law.
#[derive(Debug, Clone, Serialize)]
pub struct StatisticLimit {
    pub value: f64,
    pub limit_variance: f64,
    pub components: Vec<f64>,
    #[serde(skip)]
    pub component_cov: DMatrix<f64>,
    pub systemic: Option<LimitSummary>,
}

/// Limit of `statistic` under one oracle per law slot (or one shared).
pub fn statistic_limit(statistic: &Statistic, oracles: &[&dyn DistributionOracle]) -> Result<StatisticLimit> {
    let slots = statistic.slots();
    let (components, cov) = joint_limit(&slots, oracles)?;
    let (value, limit_variance, systemic) = match statistic {
        Statistic::Single {
            measure: MeasureConfig::Systemic { weights, outer, .. },
        } => {
            let agg = Aggregation::new(weights.clone(), *outer)?;
            let summary = systemic_limit(&agg, &components, &cov, SYSTEMIC_LIMIT_DRAWS, 0)?;
            (systemic_value(&components, &agg)?, summary.variance, Some(summary))
        }
        Statistic::Single { .. } => (components[0], cov[(0, 0)], None),
        Statistic::Difference { .. } => (
            components[0] - components[1],
            cov[(0, 0)] + cov[(1, 1)] - 2.0 * cov[(0, 1)],
            None,
        ),
    };
    Ok(StatisticLimit {
        value,
        limit_variance,
        components,
        component_cov: cov,
        systemic,
    })
}

/// Normal reference for a table: exact value and limit variance over `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalReference {
    pub mean: f64,
    pub variance: f64,
}

/// Reference law of the statistic at sample size `config.n`.
pub fn reference_for(config: &ReplicationConfig) -> Result<NormalReference> {
    config.validate()?;
    let oracles = config
        .laws
        .iter()
        .map(Law::oracle)
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn DistributionOracle> = oracles.iter().map(|o| o as &dyn DistributionOracle).collect();
    let limit = statistic_limit(&config.statistic, &refs)?;
    Ok(NormalReference {
        mean: limit.value,
        variance: limit.limit_variance / config.n as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationTable {
    /// Estimate of replication `r` at index `r`.
    pub estimates: Vec<f64>,
    pub config: ReplicationConfig,
}

/// Run `config.replications` independent replications on `workers` threads.
pub fn run_replications(config: &ReplicationConfig, workers: usize) -> Result<ReplicationTable> {
    config.validate()?;
    if workers == 0 {
        return Err(Error::InvalidParameter("workers must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<f64>> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| {
                let samples = replication_samples(config, r);
                evaluate_statistic(&config.statistic, &samples, config.plan.as_ref())
            })
            .collect()
    });
    let estimates = results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Replication {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationTable {
        estimates,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub density: f64,
    pub reference_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub mean: f64,
    pub bias: f64,
    pub std: f64,
    /// Two-sided Kolmogorov–Smirnov distance to the reference normal; absent
    /// when either side has zero variance.
    pub ks: Option<f64>,
    pub degenerate: bool,
    pub reference: NormalReference,
    pub histogram: Vec<HistogramBin>,
}

/// Histogram, moments and KS distance of `values` against `reference`.
///
/// Without an explicit bin count, the Freedman–Diaconis width is used and
/// the count is clamped to `10..=100`.
pub fn summarize_distribution(
    values: &[f64],
    reference: &NormalReference,
    bins: Option<usize>,
) -> Result<DistributionSummary> {
    let r = values.len();
    if r < 2 {
        return Err(Error::InsufficientSample { n: r, required: 2 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("replication table has non-finite entries".into()));
    }
    if bins == Some(0) {
        return Err(Error::InvalidParameter("bins must be >= 1".into()));
    }
    let rf = r as f64;
    let mean = crate::quadrature::pairwise_sum(values) / rf;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let std = (crate::quadrature::pairwise_sum(&sq) / (rf - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (lo, hi) = (sorted[0], sorted[r - 1]);
    let ref_sd = reference.variance.max(0.0).sqrt();
    let degenerate = std == 0.0 || ref_sd == 0.0;
    let ks = (!degenerate).then(|| ks_distance(&sorted, reference.mean, ref_sd));

    let count = bins.unwrap_or_else(|| {
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let width = 2.0 * iqr / rf.cbrt();
        if width > 0.0 {
            (((hi - lo) / width).ceil() as usize).clamp(10, 100)
        } else {
            10
        }
    });
    let (left, width) = if hi > lo {
        (lo, (hi - lo) / count as f64)
    } else {
        (lo - 0.5, 1.0 / count as f64)
    };
    let mut counts = vec![0usize; count];
    for v in &sorted {
        let b = (((v - left) / width).floor() as usize).min(count - 1);
        counts[b] += 1;
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let l = left + b as f64 * width;
            let centre = l + 0.5 * width;
            HistogramBin {
                left: l,
                right: l + width,
                density: c as f64 / (rf * width),
                reference_density: if ref_sd > 0.0 {
                    std_normal_pdf((centre - reference.mean) / ref_sd) / ref_sd
                } else {
                    0.0
                },
            }
        })
        .collect();
    Ok(DistributionSummary {
        count: r,
        mean,
        bias: mean - reference.mean,
        std,
        ks,
        degenerate,
        reference: *reference,
        histogram,
    })
}

/// `sup_x |F_R(x) - Phi((x - mean) / sd)|` for sorted data.
pub fn ks_distance(sorted: &[f64], mean: f64, sd: f64) -> f64 {
    let r = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = std_normal_cdf((x - mean) / sd);
            ((i + 1) as f64 / r - f).max(f - i as f64 / r)
        })
        .fold(0.0, f64::max)
}

/// Float rendered with 17 significant digits.
pub fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

struct F17(f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serde_json::value::RawValue::from_string(f17(self.0))
                .expect("formatted float is valid JSON")
                .serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

/// `replication,value` rows.
pub fn estimates_csv(table: &ReplicationTable) -> String {
    let mut out = String::from("replication,value\n");
    for (r, v) in table.estimates.iter().enumerate() {
        let _ = writeln!(out, "{r},{}", f17(*v));
    }
    out
}

/// The estimates as a JSON array.
pub fn estimates_json(table: &ReplicationTable) -> String {
    let vals: Vec<F17> = table.estimates.iter().map(|v| F17(*v)).collect();
    serde_json::to_string(&vals).expect("serializable")
}

/// `bin_left,bin_right,density,reference_density` rows.
pub fn histogram_csv(summary: &DistributionSummary) -> String {
    let mut out = String::from("bin_left,bin_right,density,reference_density\n");
    for b in &summary.histogram {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            f17(b.left),
            f17(b.right),
            f17(b.density),
            f17(b.reference_density)
        );
    }
    out
}

/// Summary JSON with the generating configuration echoed.
pub fn summary_json(summary: &DistributionSummary, config: &ReplicationConfig) -> String {
    #[derive(Serialize)]
    struct Reference {
        mean: F17,
        variance: F17,
    }
    #[derive(Serialize)]
    struct Out<'a> {
        count: usize,
        mean: F17,
        bias: F17,
        std: F17,
        ks: Option<F17>,
        degenerate: bool,
        reference: Reference,
        config: &'a ReplicationConfig,
    }
    let out = Out {
        count: summary.count,
        mean: F17(summary.mean),
        bias: F17(summary.bias),
        std: F17(summary.std),
        ks: summary.ks.map(F17),
        degenerate: summary.degenerate,
        reference: Reference {
            mean: F17(summary.reference.mean),
            variance: F17(summary.reference.variance),
        },
        config,
    };
    serde_json::to_string_pretty(&out).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msd_config(replications: usize) -> ReplicationConfig {
        ReplicationConfig {
            statistic: Statistic::Single {
                measure: MeasureConfig::MeanSemideviation { kappa: 0.5, p: 2.0 },
            },
            laws: vec![Law::Normal { mean: 0.0, std: 1.0 }],
            n: 50,
            replications,
            seed: 7,
            plan: None,
        }
    }

    #[test]
    fn single_replication_matches_direct_call() {
        let cfg = msd_config(1);
        let table = run_replications(&cfg, 1).unwrap();
        let law = &cfg.laws[0];
        let direct = law.sample(counter_u64(derive_seed(7, 0), 0), 50);
        let v = evaluate_measure(&MeasureConfig::MeanSemideviation { kappa: 0.5, p: 2.0 }, &direct, None).unwrap();
        assert_eq!(table.estimates, vec![v]);
    }

    #[test]
    fn zero_replications_is_a_config_error() {
        let err = run_replications(&msd_config(0), 1).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn constant_table_is_degenerate() {
        let reference = NormalReference { mean: 1.0, variance: 0.0 };
        let s = summarize_distribution(&[1.0; 20], &reference, None).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.ks, None);
        assert_eq!(s.bias, 0.0);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let values: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
        let reference = NormalReference { mean: 5.0, variance: 8.0 };
        let s = summarize_distribution(&values, &reference, None).unwrap();
        let mass: f64 = s.histogram.iter().map(|b| b.density * (b.right - b.left)).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!((10..=100).contains(&s.histogram.len()));
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let r = 1000;
        let sorted: Vec<f64> = (0..r)
            .map(|i| crate::law::std_normal_quantile((i as f64 + 0.5) / r as f64))
            .collect();
        assert!(ks_distance(&sorted, 0.0, 1.0) <= 0.5 / r as f64 + 1e-9);
    }

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(f17(0.1), "1.0000000000000001e-1");
        let v: f64 = f17(std::f64::consts::PI).parse().unwrap();
        assert_eq!(v, std::f64::consts::PI);
    }

    #[test]
    fn law_count_must_match_slots() {
        let mut cfg = msd_config(2);
        cfg.statistic = Statistic::Difference {
            first: MeasureConfig::Mean,
            second: MeasureConfig::Mean,
        };
        cfg.laws = vec![Law::Normal { mean: 0.0, std: 1.0 }; 3];
        assert!(cfg.validate().unwrap_err().is_config());
    }
}
