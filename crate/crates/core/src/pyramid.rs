//! Multiscale aggregation of a scale-1 series.
//!
//! Scale `k` aggregates windows of `L_k = b^(k-1)` samples and divides the
//! window sum by `L_k^H`, so fGn input with matching `H` yields N(0, 1)
//! marginals at every scale. NOWA uses disjoint blocks and SWA uses the
//! backward window ending at each time.
//!
//! Both builders compute window sums recursively from the scale below
//! (`b` sub-sums per window, added in time order). At times that are
//! multiples of a block length the two methods therefore add exactly the
//! same numbers in the same order and agree bit for bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fgn::TimeSeries;

/// Aggregation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Non-overlapping window aggregation.
    Nowa,
    /// Sliding (backward) window aggregation.
    Swa,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Nowa => "nowa",
            Method::Swa => "swa",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nowa" => Ok(Method::Nowa),
            "swa" => Ok(Method::Swa),
            other => Err(invalid("method", format!("unknown method `{other}`"))),
        }
    }
}

/// Base, number of scales and normalization exponent.
///
/// The exponent may differ from the data's true Hurst parameter. It is
/// accepted in `(0, 1]`; an exponent of 1 turns the levels into plain
/// window means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    base: usize,
    num_scales: usize,
    hurst: f64,
}

impl ScaleConfig {
    pub fn new(base: usize, num_scales: usize, hurst: f64) -> Result<Self> {
        if base < 2 {
            return Err(invalid("base", format!("{base} is below 2")));
        }
        if num_scales == 0 {
            return Err(invalid("scales", "must be at least 1"));
        }
        let exponent =
            u32::try_from(num_scales - 1).map_err(|_| invalid("scales", "too many scales"))?;
        if base.checked_pow(exponent).is_none() {
            return Err(invalid(
                "scales",
                format!("{base}^{} overflows the window length", num_scales - 1),
            ));
        }
        if !(hurst > 0.0 && hurst <= 1.0) {
            return Err(invalid("hurst", format!("{hurst} is outside (0, 1]")));
        }
        Ok(Self {
            base,
            num_scales,
            hurst,
        })
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn num_scales(&self) -> usize {
        self.num_scales
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Window length `L_k` of scale `k` (1-based).
    pub fn window(&self, scale: usize) -> usize {
        debug_assert!(scale >= 1 && scale <= self.num_scales);
        self.base.pow((scale - 1) as u32)
    }

    /// `L_M`, the longest window.
    pub fn largest_window(&self) -> usize {
        self.window(self.num_scales)
    }

    /// `L_k^H`.
    pub fn normalizer(&self, scale: usize) -> f64 {
        (self.window(scale) as f64).powf(self.hurst)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let required = self.largest_window();
        if len < required {
            return Err(Error::SeriesTooShort {
                required,
                actual: len,
            });
        }
        Ok(())
    }
}

/// One scale of a pyramid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub scale: usize,
    pub window: usize,
    /// Scale-1 time of the first sample covered by `values[0]` (NOWA) or the
    /// time of `values[0]` itself (SWA).
    pub start: usize,
    pub values: Vec<f64>,
}

/// The multiscale series `Y_k` for `k = 1..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pyramid {
    method: Method,
    config: ScaleConfig,
    len: usize,
    levels: Vec<Level>,
}

impl Pyramid {
    pub fn build(series: &TimeSeries, config: ScaleConfig, method: Method) -> Result<Self> {
        match method {
            Method::Nowa => build_nowa(series, config),
            Method::Swa => build_swa(series, config),
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn config(&self) -> &ScaleConfig {
        &self.config
    }

    /// Length of the underlying scale-1 series.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Level for 1-based `scale`.
    pub fn level(&self, scale: usize) -> &Level {
        &self.levels[scale - 1]
    }

    /// Value of `scale` that covers scale-1 time `t`, if that cell exists.
    pub fn value_at(&self, scale: usize, t: usize) -> Option<f64> {
        if t == 0 || t > self.len {
            return None;
        }
        let level = &self.levels[scale - 1];
        match self.method {
            Method::Nowa => level.values.get((t - 1) / level.window).copied(),
            Method::Swa => t
                .checked_sub(level.window)
                .and_then(|i| level.values.get(i))
                .copied(),
        }
    }

    /// `(scale, value)` for every scale with a valid cell at time `t`.
    pub fn column_at(&self, t: usize) -> Vec<(usize, f64)> {
        (1..=self.levels.len())
            .filter_map(|k| self.value_at(k, t).map(|v| (k, v)))
            .collect()
    }

    /// `max_k |Y_k(t)|` over the available scales, with the scale achieving
    /// it (the smallest one on ties).
    pub fn max_abs_at(&self, t: usize) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for k in 1..=self.levels.len() {
            if let Some(v) = self.value_at(k, t) {
                let a = v.abs();
                if best.is_none_or(|(b, _)| a > b) {
                    best = Some((a, k));
                }
            }
        }
        best
    }
}

/// Non-overlapping window aggregation; trailing partial blocks are dropped.
pub fn build_nowa(series: &TimeSeries, config: ScaleConfig) -> Result<Pyramid> {
    config.check_len(series.len())?;
    let b = config.base;
    let mut sums: Vec<f64> = series.values.clone();
    let mut levels = Vec::with_capacity(config.num_scales);
    for k in 1..=config.num_scales {
        if k > 1 {
            sums = sums
                .chunks_exact(b)
                .map(|block| block.iter().fold(0.0, |acc, &v| acc + v))
                .collect();
        }
        levels.push(normalized_level(&config, k, 1, &sums));
    }
    Ok(Pyramid {
        method: Method::Nowa,
        config,
        len: series.len(),
        levels,
    })
}

/// Sliding window aggregation; scale `k` starts at time `L_k`.
pub fn build_swa(series: &TimeSeries, config: ScaleConfig) -> Result<Pyramid> {
    config.check_len(series.len())?;
    let n = series.len();
    let b = config.base;
    // sums[i] is the raw window sum ending at time i + window.
    let mut sums: Vec<f64> = series.values.clone();
    let mut levels = Vec::with_capacity(config.num_scales);
    for k in 1..=config.num_scales {
        let window = config.window(k);
        if k > 1 {
            let sub = config.window(k - 1);
            // Window of length b·sub ending at t is the b sub-windows ending
            // at t - (b-1)·sub, ..., t - sub, t.
            let count = n - window + 1;
            sums = (0..count)
                .map(|i| (0..b).fold(0.0, |acc, j| acc + sums[i + j * sub]))
                .collect();
        }
        levels.push(normalized_level(&config, k, window, &sums));
    }
    Ok(Pyramid {
        method: Method::Swa,
        config,
        len: n,
        levels,
    })
}

fn normalized_level(config: &ScaleConfig, scale: usize, start: usize, sums: &[f64]) -> Level {
    let norm = config.normalizer(scale);
    Level {
        scale,
        window: config.window(scale),
        start,
        values: sums.iter().map(|s| s / norm).collect(),
    }
}

const REFRESH_INTERVAL: u64 = 1 << 20;

/// Online SWA state: a ring of the last `L_M` samples and one running
/// window sum per scale.
#[derive(Debug, Clone)]
pub struct StreamState {
    config: ScaleConfig,
    ring: Vec<f64>,
    sums: Vec<f64>,
    windows: Vec<usize>,
    normalizers: Vec<f64>,
    seen: u64,
}

impl StreamState {
    pub fn new(config: ScaleConfig) -> Self {
        let windows: Vec<usize> = (1..=config.num_scales).map(|k| config.window(k)).collect();
        let normalizers = (1..=config.num_scales)
            .map(|k| config.normalizer(k))
            .collect();
        Self {
            config,
            ring: vec![0.0; config.largest_window()],
            sums: vec![0.0; config.num_scales],
            windows,
            normalizers,
            seen: 0,
        }
    }

    pub fn config(&self) -> &ScaleConfig {
        &self.config
    }

    pub fn samples_seen(&self) -> u64 {
        self.seen
    }

    /// Raw (unnormalized) running sum of `scale`.
    pub fn window_sum(&self, scale: usize) -> f64 {
        self.sums[scale - 1]
    }

    /// Consumes one sample and returns the SWA column at the new time.
    pub fn push(&mut self, sample: f64) -> Vec<(usize, f64)> {
        self.advance(sample);
        self.column()
    }

    /// Like [`push`](Self::push) but only returns `max_k |Y_k|` and its scale.
    pub fn push_max_abs(&mut self, sample: f64) -> (f64, usize) {
        self.advance(sample);
        let mut best = (f64::NEG_INFINITY, 1);
        for (k, v) in self.column() {
            if v.abs() > best.0 {
                best = (v.abs(), k);
            }
        }
        best
    }

    fn advance(&mut self, sample: f64) {
        self.seen += 1;
        let t = self.seen;
        let cap = self.ring.len() as u64;
        for (sum, &window) in self.sums.iter_mut().zip(&self.windows) {
            *sum += sample;
            let window = window as u64;
            if t > window {
                *sum -= self.ring[((t - window - 1) % cap) as usize];
            }
        }
        self.ring[((t - 1) % cap) as usize] = sample;

        if t.is_multiple_of(REFRESH_INTERVAL) {
            self.refresh();
        }
    }

    // Recomputes every running sum from the ring to discard drift.
    fn refresh(&mut self) {
        let t = self.seen;
        let cap = self.ring.len() as u64;
        for (sum, &window) in self.sums.iter_mut().zip(&self.windows) {
            let available = (window as u64).min(t);
            *sum = (t + 1 - available..=t)
                .map(|s| self.ring[((s - 1) % cap) as usize])
                .sum();
        }
    }

    fn column(&self) -> Vec<(usize, f64)> {
        self.windows
            .iter()
            .enumerate()
            .take_while(|(_, &w)| self.seen >= w as u64)
            .map(|(i, _)| (i + 1, self.sums[i] / self.normalizers[i]))
            .collect()
    }
}
