//! The pointwise multiscale test, the per-cell p-value map and interval
//! reporting.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fgn::{sample_variance, TimeSeries};
use crate::normal;
use crate::pyramid::{Method, Pyramid, ScaleConfig};
use crate::threshold::ThresholdResult;

/// How the raw series is brought to zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Standardization {
    /// Use the values as given.
    #[default]
    None,
    /// Subtract the sample mean and divide by the sample standard deviation.
    SampleMoments,
    /// Use statistics from elsewhere, typically a training segment.
    Provided { mean: f64, std: f64 },
}

/// Returns `((x − mean)/std, mean, std)`.
pub fn standardize(series: &TimeSeries, mode: Standardization) -> Result<(TimeSeries, f64, f64)> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let (mean, std) = match mode {
        Standardization::None => return Ok((series.clone(), 0.0, 1.0)),
        Standardization::SampleMoments => {
            let n = series.len() as f64;
            let mean = series.values.iter().sum::<f64>() / n;
            let std = sample_variance(&series.values).sqrt();
            if !(std > 0.0) {
                return Err(Error::ZeroVariance);
            }
            (mean, std)
        }
        Standardization::Provided { mean, std } => {
            if !(std > 0.0 && std.is_finite()) || !mean.is_finite() {
                return Err(invalid("std", format!("{std} must be positive and finite")));
            }
            (mean, std)
        }
    };
    let values = series.values.iter().map(|x| (x - mean) / std).collect();
    Ok((
        TimeSeries {
            values,
            origin: series.origin,
        },
        mean,
        std,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub scales: ScaleConfig,
    pub method: Method,
    pub threshold: ThresholdResult,
    pub standardization: Standardization,
}

impl DetectionConfig {
    pub fn new(scales: ScaleConfig, method: Method, threshold: ThresholdResult) -> Result<Self> {
        if !(threshold.value > 0.0) {
            return Err(invalid("threshold", "must be positive"));
        }
        Ok(Self {
            scales,
            method,
            threshold,
            standardization: Standardization::None,
        })
    }

    pub fn with_standardization(mut self, mode: Standardization) -> Self {
        self.standardization = mode;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// `max_k |Y_k(t)|` over available scales, index `t − 1`.
    pub statistic: Vec<f64>,
    /// Flagged times (1-based, increasing).
    pub flags: Vec<usize>,
    /// Scale achieving the maximum for each entry of `flags`.
    pub argmax_scale: Vec<usize>,
    pub threshold: ThresholdResult,
    pub pyramid: Pyramid,
}

impl DetectionResult {
    pub fn len(&self) -> usize {
        self.statistic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statistic.is_empty()
    }

    pub fn flag_rate(&self) -> f64 {
        self.flags.len() as f64 / self.statistic.len() as f64
    }

    pub fn pvalue_map(&self) -> PValueMap {
        pvalue_map(&self.pyramid)
    }
}

/// Runs the test at every time of the series.
///
/// Times where fewer than `M` scales exist (SWA warm-up, NOWA partial
/// blocks) are tested over the scales present, still against the full-`M`
/// threshold.
pub fn detect(series: &TimeSeries, config: &DetectionConfig) -> Result<DetectionResult> {
    let (standardized, _, _) = standardize(series, config.standardization)?;
    let pyramid = Pyramid::build(&standardized, config.scales, config.method)?;
    let c = config.threshold.value;

    let mut statistic = Vec::with_capacity(pyramid.len());
    let mut flags = Vec::new();
    let mut argmax_scale = Vec::new();
    for t in 1..=pyramid.len() {
        let (stat, scale) = pyramid.max_abs_at(t).expect("scale 1 is always present");
        statistic.push(stat);
        if stat > c {
            flags.push(t);
            argmax_scale.push(scale);
        }
    }

    Ok(DetectionResult {
        statistic,
        flags,
        argmax_scale,
        threshold: config.threshold,
        pyramid,
    })
}

/// Marginal two-sided p-values `2(1 − Φ(|Y_k|))` per pyramid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueMap {
    method: Method,
    len: usize,
    windows: Vec<usize>,
    cells: Vec<Vec<f64>>,
}

impl PValueMap {
    pub fn num_scales(&self) -> usize {
        self.cells.len()
    }

    /// Length of the scale-1 time axis.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Cell values of one scale, in pyramid order.
    pub fn cells(&self, scale: usize) -> &[f64] {
        &self.cells[scale - 1]
    }

    /// p-value of the cell of `scale` covering time `t`; `None` if absent.
    pub fn get(&self, scale: usize, t: usize) -> Option<f64> {
        if t == 0 || t > self.len {
            return None;
        }
        let window = self.windows[scale - 1];
        let cells = &self.cells[scale - 1];
        match self.method {
            Method::Nowa => cells.get((t - 1) / window).copied(),
            Method::Swa => t.checked_sub(window).and_then(|i| cells.get(i)).copied(),
        }
    }
}

pub fn pvalue_map(pyramid: &Pyramid) -> PValueMap {
    PValueMap {
        method: pyramid.method(),
        len: pyramid.len(),
        windows: pyramid.levels().iter().map(|l| l.window).collect(),
        cells: pyramid
            .levels()
            .iter()
            .map(|l| {
                l.values
                    .iter()
                    .map(|&v| normal::two_sided_pvalue(v))
                    .collect()
            })
            .collect(),
    }
}

/// A run of flagged times `[start, end)` and its most frequent argmax scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub peak_scale: usize,
}

/// Merges flags separated by at most `gap_tolerance` unflagged times.
pub fn flags_to_intervals(result: &DetectionResult, gap_tolerance: usize) -> Vec<Interval> {
    merge_flags(&result.flags, &result.argmax_scale, gap_tolerance)
}

pub fn merge_flags(flags: &[usize], scales: &[usize], gap_tolerance: usize) -> Vec<Interval> {
    debug_assert_eq!(flags.len(), scales.len());
    let mut out = Vec::new();
    let mut i = 0;
    while i < flags.len() {
        let mut j = i;
        while j + 1 < flags.len() && flags[j + 1] - flags[j] - 1 <= gap_tolerance {
            j += 1;
        }
        out.push(Interval {
            start: flags[i],
            end: flags[j] + 1,
            peak_scale: modal_scale(&scales[i..=j]),
        });
        i = j + 1;
    }
    out
}

// Most frequent scale; the smallest wins ties.
fn modal_scale(scales: &[usize]) -> usize {
    let max = scales.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &s in scales {
        counts[s] += 1;
    }
    let mut best = 0;
    for (s, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = s;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threshold::asymptotic_threshold;

    fn config(method: Method, c: f64) -> DetectionConfig {
        DetectionConfig::new(
            ScaleConfig::new(2, 3, 0.8).unwrap(),
            method,
            ThresholdResult::fixed(c).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn standardize_modes() {
        let s: TimeSeries = vec![3.0; 10].into();
        assert_eq!(
            standardize(&s, Standardization::SampleMoments).unwrap_err(),
            Error::ZeroVariance
        );
        let s: TimeSeries = vec![1.0, 3.0, 5.0].into();
        let (out, mean, std) = standardize(
            &s,
            Standardization::Provided {
                mean: 1.0,
                std: 2.0,
            },
        )
        .unwrap();
        assert_eq!((mean, std), (1.0, 2.0));
        assert_eq!(out.values, vec![0.0, 1.0, 2.0]);
        let (out, mean, std) = standardize(&s, Standardization::SampleMoments).unwrap();
        assert_eq!((mean, std), (3.0, 2.0));
        assert_eq!(out.values, vec![-1.0, 0.0, 1.0]);
        assert!(standardize(&TimeSeries::new(vec![]), Standardization::None).is_err());
        assert!(standardize(
            &s,
            Standardization::Provided {
                mean: 0.0,
                std: 0.0
            }
        )
        .is_err());
    }

    #[test]
    fn zero_series_has_no_flags() {
        for method in [Method::Nowa, Method::Swa] {
            let r = detect(&vec![0.0; 64].into(), &config(method, 1.0)).unwrap();
            assert!(r.flags.is_empty());
            assert!(r.statistic.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn spike_is_flagged() {
        let mut x = vec![0.0; 64];
        x[20] = 10.0;
        let c = asymptotic_threshold(0.05, 3).unwrap();
        let cfg =
            DetectionConfig::new(ScaleConfig::new(2, 3, 0.8).unwrap(), Method::Swa, c).unwrap();
        let r = detect(&x.into(), &cfg).unwrap();
        assert!(r.flags.contains(&21));
        let at = r.flags.iter().position(|&f| f == 21).unwrap();
        assert_eq!(r.argmax_scale[at], 1);
    }

    #[test]
    fn tie_does_not_reject() {
        let r = detect(&vec![2.0; 8].into(), &config(Method::Swa, 2.0).clone()).unwrap();
        // Scale 1 equals the threshold exactly; coarser scales exceed it.
        assert!(!r.flags.contains(&1));
        assert!(r.flags.contains(&2));
    }

    #[test]
    fn pvalues() {
        let x = vec![0.0, 1.959964, -1.959964, 0.0];
        let p = pvalue_map(
            &Pyramid::build(&x.into(), ScaleConfig::new(2, 2, 0.5).unwrap(), Method::Swa).unwrap(),
        );
        assert_eq!(p.get(1, 1), Some(1.0));
        assert!((p.get(1, 2).unwrap() - 0.05).abs() < 1e-8);
        assert_eq!(p.get(1, 2), p.get(1, 3));
        assert_eq!(p.get(2, 1), None);
        assert!(p.get(2, 2).is_some());
        assert_eq!(p.get(1, 5), None);
    }

    #[test]
    fn intervals() {
        let merge = |f: &[usize], g| merge_flags(f, &vec![1; f.len()], g);
        assert_eq!(
            merge(&[5, 6, 7], 0),
            vec![Interval {
                start: 5,
                end: 8,
                peak_scale: 1
            }]
        );
        assert_eq!(
            merge(&[5, 9], 3),
            vec![Interval {
                start: 5,
                end: 10,
                peak_scale: 1
            }]
        );
        assert_eq!(merge(&[5, 9], 2).len(), 2);
        assert!(merge(&[], 4).is_empty());
        let iv = merge_flags(&[1, 2, 3, 4], &[3, 2, 2, 3], 0);
        assert_eq!(iv[0].peak_scale, 2);
    }
}
