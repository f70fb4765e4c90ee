//! Synthetic level-shift experiments: injection, confusion counts, rates,
//! the one-scale baseline, and the repeated-set simulation study.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::detect::{detect, DetectionConfig, Standardization};
use crate::error::{invalid, Error, Result};
use crate::fgn::{FgnGenerator, LrdModel, TimeSeries};
use crate::pyramid::{Method, ScaleConfig};
use crate::rng::{derive_seed, substream};
use crate::threshold::{
    compute_threshold, single_scale_threshold, sorted_quantile, ThresholdKind, ThresholdQuery,
    ThresholdResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StartSpec {
    /// 1-based start index.
    Fixed(usize),
    /// Start drawn uniformly from `1..=max`.
    Uniform { max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DurationSpec {
    Fixed(usize),
    /// Exponential with the given mean, rounded to the nearest integer ≥ 1.
    Exponential {
        mean: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub start: StartSpec,
    pub duration: DurationSpec,
    pub delta: f64,
    pub seed: u64,
}

impl InjectionSpec {
    fn validate(&self) -> Result<()> {
        match self.start {
            StartSpec::Fixed(0) => return Err(invalid("start", "indices are 1-based")),
            StartSpec::Uniform { max: 0 } => {
                return Err(invalid("start-max", "must be at least 1"))
            }
            _ => {}
        }
        match self.duration {
            DurationSpec::Fixed(0) => return Err(invalid("duration", "must be at least 1")),
            DurationSpec::Exponential { mean } if !(mean > 0.0 && mean.is_finite()) => {
                return Err(invalid("duration-mean", format!("{mean} must be positive")))
            }
            _ => {}
        }
        if !self.delta.is_finite() {
            return Err(invalid("delta", "must be finite"));
        }
        Ok(())
    }
}

/// A series with an injected level shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub series: TimeSeries,
    /// Shifted times, 1-based and increasing.
    pub truth: Vec<usize>,
    pub start: usize,
    /// Drawn duration before clipping to the series end.
    pub duration: usize,
}

/// Adds `delta` on `[a₀, a₀ + duration)`, clipped to the series.
pub fn inject(series: &TimeSeries, spec: &InjectionSpec) -> Result<Injection> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    spec.validate()?;
    let mut rng = substream(spec.seed, 0);
    let start = match spec.start {
        StartSpec::Fixed(a) => a,
        StartSpec::Uniform { max } => rng.random_range(1..=max),
    };
    let duration = match spec.duration {
        DurationSpec::Fixed(d) => d,
        DurationSpec::Exponential { mean } => {
            let exp = Exp::new(1.0 / mean).map_err(|e| invalid("duration-mean", e.to_string()))?;
            (exp.sample(&mut rng).round() as usize).max(1)
        }
    };
    let n = series.len();
    if start > n {
        return Err(invalid(
            "start",
            format!("start {start} lies beyond the series end {n}"),
        ));
    }
    let end = start.saturating_add(duration).min(n + 1);
    let mut values = series.values.clone();
    for v in &mut values[start - 1..end - 1] {
        *v += spec.delta;
    }
    Ok(Injection {
        series: TimeSeries {
            values,
            origin: series.origin,
        },
        truth: (start..end).collect(),
        start,
        duration,
    })
}

/// Counts of the four detection outcomes.
///
/// `u`: regular, declared regular; `v`: regular, declared outlier;
/// `t`: outlier, declared regular; `s`: outlier, declared outlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConfusionCounts {
    pub u: usize,
    pub v: usize,
    pub t: usize,
    pub s: usize,
}

impl ConfusionCounts {
    /// Declared outliers.
    pub fn r(&self) -> usize {
        self.v + self.s
    }

    pub fn m(&self) -> usize {
        self.u + self.v + self.t + self.s
    }

    /// Regular observations.
    pub fn m0(&self) -> usize {
        self.u + self.v
    }
}

pub fn confusion(flags: &[usize], truth: &[usize], n: usize) -> Result<ConfusionCounts> {
    let mask = |idx: &[usize], name: &'static str| -> Result<Vec<bool>> {
        let mut m = vec![false; n + 1];
        for &i in idx {
            if i == 0 || i > n {
                return Err(invalid(name, format!("index {i} is outside 1..={n}")));
            }
            m[i] = true;
        }
        Ok(m)
    };
    let flagged = mask(flags, "flags")?;
    let outlier = mask(truth, "truth")?;
    let mut c = ConfusionCounts::default();
    for i in 1..=n {
        match (outlier[i], flagged[i]) {
            (false, false) => c.u += 1,
            (false, true) => c.v += 1,
            (true, false) => c.t += 1,
            (true, true) => c.s += 1,
        }
    }
    Ok(c)
}

/// Discovery rates; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub tdr: Option<f64>,
    pub fdr: Option<f64>,
    pub fnr: Option<f64>,
}

pub fn metrics(c: &ConfusionCounts) -> MetricSummary {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    MetricSummary {
        tdr: ratio(c.s, c.m() - c.m0()),
        fdr: ratio(c.v, c.r()),
        fnr: ratio(c.t, c.m() - c.r()),
    }
}

/// Flags `|Y₁(t)| > Φ⁻¹(1 − α/2)` on an already standardized series.
pub fn naive_baseline(series: &TimeSeries, alpha: f64) -> Result<Vec<usize>> {
    let c = single_scale_threshold(alpha)?.value;
    Ok(series
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > c)
        .map(|(i, _)| i + 1)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Mrad,
    Naive,
}

impl Detector {
    pub const ALL: [Detector; 2] = [Detector::Mrad, Detector::Naive];

    pub fn name(&self) -> &'static str {
        match self {
            Detector::Mrad => "mrad",
            Detector::Naive => "naive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sets: usize,
    pub sims_per_set: usize,
    pub n: usize,
    pub hurst: f64,
    pub start: StartSpec,
    pub duration: DurationSpec,
    pub delta: f64,
    pub alpha: f64,
    pub num_scales: usize,
    pub base: usize,
    pub method: Method,
    pub threshold: ThresholdKind,
    pub mc_reps: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Length 2^15 fGn with H = 0.9, start uniform on `1..=2^14`, duration
    /// exponential with mean 4000, unit shift, α = 0.05 and 15 dyadic NOWA
    /// scales with the Monte-Carlo threshold.
    pub fn reference(sets: usize, sims_per_set: usize, seed: u64) -> Self {
        Self {
            sets,
            sims_per_set,
            n: 1 << 15,
            hurst: 0.9,
            start: StartSpec::Uniform { max: 1 << 14 },
            duration: DurationSpec::Exponential { mean: 4000.0 },
            delta: 1.0,
            alpha: 0.05,
            num_scales: 15,
            base: 2,
            method: Method::Nowa,
            threshold: ThresholdKind::MonteCarlo,
            mc_reps: crate::threshold::DEFAULT_MC_REPS,
            seed,
        }
    }
}

/// Within-set averages for one detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub set_id: usize,
    pub detector: Detector,
    pub tdr: Option<f64>,
    pub fdr: Option<f64>,
    pub fnr: Option<f64>,
    /// Mean of (first flagged shifted time − start) over simulations that
    /// flagged anything inside the shift.
    pub mean_start_delay: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    /// `None` when no value is defined.
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().flatten().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable_by(f64::total_cmp);
        Some(Self {
            q1: sorted_quantile(&v, 0.25),
            median: sorted_quantile(&v, 0.5),
            q3: sorted_quantile(&v, 0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSummary {
    pub detector: Detector,
    pub tdr: Option<Quartiles>,
    pub fdr: Option<Quartiles>,
    pub fnr: Option<Quartiles>,
    pub mean_start_delay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub threshold: ThresholdResult,
    /// Ordered by set, then detector.
    pub sets: Vec<SetMetrics>,
}

impl ExperimentReport {
    pub fn for_detector(&self, detector: Detector) -> impl Iterator<Item = &SetMetrics> {
        self.sets.iter().filter(move |s| s.detector == detector)
    }

    pub fn summary(&self, detector: Detector) -> DetectorSummary {
        let rows: Vec<&SetMetrics> = self.for_detector(detector).collect();
        DetectorSummary {
            detector,
            tdr: Quartiles::of(rows.iter().map(|r| r.tdr)),
            fdr: Quartiles::of(rows.iter().map(|r| r.fdr)),
            fnr: Quartiles::of(rows.iter().map(|r| r.fnr)),
            mean_start_delay: mean_defined(rows.iter().map(|r| r.mean_start_delay)),
        }
    }

    /// `set_id,detector,tdr,fdr,fnr`; undefined rates are empty fields.
    pub fn to_csv(&self) -> String {
        let field = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("set_id,detector,tdr,fdr,fnr\n");
        for r in &self.sets {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.set_id,
                r.detector.name(),
                field(r.tdr),
                field(r.fdr),
                field(r.fnr)
            ));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let detectors: Vec<DetectorSummary> =
            Detector::ALL.iter().map(|&d| self.summary(d)).collect();
        json!({
            "config": self.config,
            "threshold": self.threshold,
            "detectors": detectors,
        })
    }
}

fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

struct SimOutcome {
    mrad: MetricSummary,
    naive: MetricSummary,
    mrad_delay: Option<f64>,
    naive_delay: Option<f64>,
}

/// Runs `sets × sims_per_set` simulations and averages the per-simulation
/// rates within each set.
///
/// Simulation `g = set · sims_per_set + sim` draws its background from
/// `substream(seed, g)` and its injection from `derive_seed(seed, g)`, so
/// the report does not depend on thread scheduling. The background has unit
/// variance and is tested unstandardized.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.sets == 0 || config.sims_per_set == 0 {
        return Err(invalid("sets", "sets and sims per set must be at least 1"));
    }
    let model = LrdModel::standard(config.hurst)?;
    let scales = ScaleConfig::new(config.base, config.num_scales, config.hurst)?;
    if scales.largest_window() > config.n {
        return Err(Error::SeriesTooShort {
            required: scales.largest_window(),
            actual: config.n,
        });
    }
    let threshold = compute_threshold(&ThresholdQuery {
        alpha: config.alpha,
        num_scales: config.num_scales,
        hurst: config.hurst,
        base: config.base,
        kind: config.threshold,
        mc_reps: config.mc_reps,
        seed: derive_seed(config.seed, u64::MAX),
    })?;
    let detection = DetectionConfig::new(scales, config.method, threshold)?
        .with_standardization(Standardization::None);
    let generator = FgnGenerator::new(model, config.n)?;

    let total = config.sets * config.sims_per_set;
    let outcomes: Vec<SimOutcome> = (0..total)
        .into_par_iter()
        .map(|g| -> Result<SimOutcome> {
            let background =
                TimeSeries::new(generator.sample(&mut substream(config.seed, g as u64)));
            let injected = inject(
                &background,
                &InjectionSpec {
                    start: config.start,
                    duration: config.duration,
                    delta: config.delta,
                    seed: derive_seed(config.seed, g as u64),
                },
            )?;
            let mrad_flags = detect(&injected.series, &detection)?.flags;
            let naive_flags = naive_baseline(&injected.series, config.alpha)?;
            // A zero shift leaves no true outliers to score against.
            let truth: &[usize] = if config.delta == 0.0 {
                &[]
            } else {
                &injected.truth
            };
            let score = |flags: &[usize]| -> Result<(MetricSummary, Option<f64>)> {
                let counts = confusion(flags, truth, config.n)?;
                let delay = if truth.is_empty() {
                    None
                } else {
                    start_delay(flags, &injected)
                };
                Ok((metrics(&counts), delay))
            };
            let (mrad, mrad_delay) = score(&mrad_flags)?;
            let (naive, naive_delay) = score(&naive_flags)?;
            Ok(SimOutcome {
                mrad,
                naive,
                mrad_delay,
                naive_delay,
            })
        })
        .collect::<Result<_>>()?;

    let mut sets = Vec::with_capacity(config.sets * 2);
    for (set_id, chunk) in outcomes.chunks(config.sims_per_set).enumerate() {
        for detector in Detector::ALL {
            let pick = |o: &SimOutcome| match detector {
                Detector::Mrad => (o.mrad, o.mrad_delay),
                Detector::Naive => (o.naive, o.naive_delay),
            };
            sets.push(SetMetrics {
                set_id,
                detector,
                tdr: mean_defined(chunk.iter().map(|o| pick(o).0.tdr)),
                fdr: mean_defined(chunk.iter().map(|o| pick(o).0.fdr)),
                fnr: mean_defined(chunk.iter().map(|o| pick(o).0.fnr)),
                mean_start_delay: mean_defined(chunk.iter().map(|o| pick(o).1)),
            });
        }
    }

    Ok(ExperimentReport {
        config: *config,
        threshold,
        sets,
    })
}

fn start_delay(flags: &[usize], injection: &Injection) -> Option<f64> {
    let last = *injection.truth.last()?;
    flags
        .iter()
        .find(|&&f| f >= injection.start && f <= last)
        .map(|&f| (f - injection.start) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(start: usize, duration: usize, delta: f64) -> InjectionSpec {
        InjectionSpec {
            start: StartSpec::Fixed(start),
            duration: DurationSpec::Fixed(duration),
            delta,
            seed: 0,
        }
    }

    #[test]
    fn inject_fixed() {
        let out = inject(&vec![0.0; 10].into(), &fixed(3, 3, 1.0)).unwrap();
        assert_eq!(out.truth, vec![3, 4, 5]);
        assert_eq!(
            out.series.values,
            vec![0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn inject_zero_delta_keeps_series() {
        let s: TimeSeries = vec![0.5, -1.0, 2.0, 0.0].into();
        let out = inject(&s, &fixed(2, 2, 0.0)).unwrap();
        assert_eq!(out.series, s);
        assert_eq!(out.truth, vec![2, 3]);
    }

    #[test]
    fn inject_clips_at_end() {
        let out = inject(&vec![0.0; 5].into(), &fixed(4, 10, 2.0)).unwrap();
        assert_eq!(out.truth, vec![4, 5]);
        assert_eq!(out.duration, 10);
    }

    #[test]
    fn inject_errors() {
        let s: TimeSeries = vec![0.0; 5].into();
        assert!(inject(&s, &fixed(0, 1, 1.0)).is_err());
        assert!(inject(&s, &fixed(1, 0, 1.0)).is_err());
        assert!(inject(&s, &fixed(6, 1, 1.0)).is_err());
        assert!(inject(&TimeSeries::new(vec![]), &fixed(1, 1, 1.0)).is_err());
    }

    #[test]
    fn inject_is_deterministic() {
        let spec = InjectionSpec {
            start: StartSpec::Uniform { max: 50 },
            duration: DurationSpec::Exponential { mean: 10.0 },
            delta: 1.0,
            seed: 17,
        };
        let s: TimeSeries = vec![0.0; 100].into();
        assert_eq!(inject(&s, &spec).unwrap(), inject(&s, &spec).unwrap());
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(
            confusion(&[4, 7], &[3, 4, 5], 10).unwrap(),
            ConfusionCounts {
                u: 6,
                v: 1,
                t: 2,
                s: 1
            }
        );
        assert_eq!(
            confusion(&[], &[], 5).unwrap(),
            ConfusionCounts {
                u: 5,
                v: 0,
                t: 0,
                s: 0
            }
        );
        let all: Vec<usize> = (1..=5).collect();
        assert_eq!(
            confusion(&all, &all, 5).unwrap(),
            ConfusionCounts {
                u: 0,
                v: 0,
                t: 0,
                s: 5
            }
        );
        assert!(confusion(&[6], &[], 5).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionCounts {
            u: 6,
            v: 1,
            t: 2,
            s: 1,
        });
        assert!((m.tdr.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.fdr, Some(0.5));
        assert_eq!(m.fnr, Some(0.25));
        let none = metrics(&ConfusionCounts {
            u: 4,
            v: 0,
            t: 0,
            s: 0,
        });
        assert_eq!(none.tdr, None);
        assert_eq!(none.fdr, None);
        assert_eq!(none.fnr, Some(0.0));
    }

    #[test]
    fn naive_examples() {
        assert!(naive_baseline(&vec![0.0; 10].into(), 0.05)
            .unwrap()
            .is_empty());
        assert_eq!(naive_baseline(&vec![3.0].into(), 0.05).unwrap(), vec![1]);
        assert_eq!(
            naive_baseline(&vec![0.0, -2.0, 1.9].into(), 0.05).unwrap(),
            vec![2]
        );
    }

    #[test]
    fn quartiles_skip_undefined() {
        let q = Quartiles::of([Some(1.0), None, Some(3.0), Some(2.0)]).unwrap();
        assert_eq!(q.median, 2.0);
        assert!(Quartiles::of([None, None]).is_none());
    }
}
