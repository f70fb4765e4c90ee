//! Fractional Gaussian noise: the background law, exact synthesis, and a
//! rough Hurst estimate for command-line convenience.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::substream;

/// Hurst parameter and marginal standard deviation of an fGn background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrdModel {
    hurst: f64,
    sigma: f64,
}

impl LrdModel {
    pub fn new(hurst: f64, sigma: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(invalid("hurst", format!("{hurst} is outside (0, 1)")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("{sigma} must be positive")));
        }
        Ok(Self { hurst, sigma })
    }

    /// Unit-variance model.
    pub fn standard(hurst: f64) -> Result<Self> {
        Self::new(hurst, 1.0)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// An ordered run of observations.
///
/// `origin` is the index of the first value; indices reported by the
/// detector are positions `1..=len` and coincide with absolute indices when
/// `origin == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub origin: usize,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, origin: 1 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl From<Vec<f64>> for TimeSeries {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

/// Autocovariance γ(h) of fGn.
pub fn fgn_acf(model: &LrdModel, h: u64) -> f64 {
    let two_h = 2.0 * model.hurst;
    let var = model.sigma * model.sigma;
    match h {
        0 => var,
        1 => 0.5 * (2f64.powf(two_h) - 2.0) * var,
        _ => {
            // h^{2H} [(1 + 1/h)^{2H} - 2 + (1 - 1/h)^{2H}], written with
            // expm1/ln1p so the second difference does not cancel.
            let h = h as f64;
            let x = 1.0 / h;
            let second = (two_h * x.ln_1p()).exp_m1() + (two_h * (-x).ln_1p()).exp_m1();
            0.5 * h.powf(two_h) * second * var
        }
    }
}

/// Covariance of fractional Brownian motion at times `s` and `t`.
pub fn fbm_cov(model: &LrdModel, s: f64, t: f64) -> f64 {
    let two_h = 2.0 * model.hurst;
    0.5 * (s.powf(two_h) + t.powf(two_h) - (s - t).abs().powf(two_h)) * model.sigma * model.sigma
}

/// Exact fGn sampler by circulant embedding.
///
/// The autocovariance of length `n` is embedded in a circulant of size
/// `2N` with `N = n.next_power_of_two()`. Its eigenvalues are computed once;
/// each path then costs one FFT.
#[derive(Clone)]
pub struct FgnGenerator {
    model: LrdModel,
    n: usize,
    sqrt_eigen: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FgnGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FgnGenerator")
            .field("model", &self.model)
            .field("n", &self.n)
            .field("embedding", &self.sqrt_eigen.len())
            .finish()
    }
}

impl FgnGenerator {
    pub fn new(model: LrdModel, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        let half = n.next_power_of_two();
        let size = 2 * half;

        let mut row: Vec<Complex<f64>> = Vec::with_capacity(size);
        row.extend((0..=half).map(|h| Complex::new(fgn_acf(&model, h as u64), 0.0)));
        row.extend(
            (1..half)
                .rev()
                .map(|h| Complex::new(fgn_acf(&model, h as u64), 0.0)),
        );

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        fft.process(&mut row);

        let largest = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let tolerance = 1e-10 * largest.max(f64::MIN_POSITIVE);
        let mut sqrt_eigen = Vec::with_capacity(size);
        for (index, c) in row.iter().enumerate() {
            if c.re < -tolerance {
                return Err(Error::NegativeEigenvalue { index, value: c.re });
            }
            sqrt_eigen.push((c.re.max(0.0) / size as f64).sqrt());
        }

        Ok(Self {
            model,
            n,
            sqrt_eigen,
            fft,
        })
    }

    pub fn model(&self) -> &LrdModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Draws one path of length `n`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = self
            .sqrt_eigen
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        buf.truncate(self.n);
        buf.into_iter().map(|c| c.re).collect()
    }
}

/// Synthesizes `n` samples of fGn, bit-identical for identical arguments.
pub fn synthesize_fgn(model: &LrdModel, n: usize, seed: u64) -> Result<TimeSeries> {
    let generator = FgnGenerator::new(*model, n)?;
    let mut rng = substream(seed, 0);
    Ok(TimeSeries::new(generator.sample(&mut rng)))
}

/// Largest length accepted by [`cholesky_fgn`].
pub const CHOLESKY_MAX_LEN: usize = 1024;

/// fGn by Cholesky factorization of the full Toeplitz covariance.
///
/// Quadratic memory and cubic time; kept as an independent cross-check of
/// the FFT sampler.
pub fn cholesky_fgn<R: Rng + ?Sized>(model: &LrdModel, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 || n > CHOLESKY_MAX_LEN {
        return Err(invalid("n", format!("must be in 1..={CHOLESKY_MAX_LEN}")));
    }
    let acf: Vec<f64> = (0..n).map(|h| fgn_acf(model, h as u64)).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| acf[i.abs_diff(j)]);
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Factorization("fGn covariance is not positive definite".into()))?;
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((chol.l() * z).iter().copied().collect())
}

/// Aggregated-variance Hurst estimate.
///
/// For every block size `m` the sample variance of the non-overlapping block
/// means is computed; the slope of log-variance against log-`m` gives
/// `Ĥ = 1 + slope / 2`, clamped to `[0.01, 0.99]`. The estimator is biased
/// low for strongly dependent series and is never used by the test itself.
pub fn estimate_hurst(series: &TimeSeries, block_sizes: &[usize]) -> Result<f64> {
    let Some(&largest) = block_sizes.last() else {
        return Err(invalid("block_sizes", "must not be empty"));
    };
    if block_sizes[0] == 0 || block_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(
            "block_sizes",
            "must be strictly increasing and at least 1",
        ));
    }
    let required = largest.saturating_mul(4);
    if series.len() < required {
        return Err(Error::SeriesTooShort {
            required,
            actual: series.len(),
        });
    }

    let mut points = Vec::with_capacity(block_sizes.len());
    for &m in block_sizes {
        let means: Vec<f64> = series
            .values
            .chunks_exact(m)
            .map(|block| block.iter().sum::<f64>() / m as f64)
            .collect();
        let var = sample_variance(&means);
        if var > 0.0 {
            points.push(((m as f64).ln(), var.ln()));
        }
    }
    if points.is_empty() {
        return Err(Error::ZeroVariance);
    }
    if points.len() < 2 {
        return Err(invalid(
            "block_sizes",
            "need at least two block sizes with non-zero variance",
        ));
    }

    let slope = least_squares_slope(&points);
    Ok((1.0 + slope / 2.0).clamp(0.01, 0.99))
}

pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Powers of two leaving at least 128 blocks at the largest size, or at
/// least 4 blocks when the series is too short for that.
pub fn default_block_sizes(len: usize) -> Vec<usize> {
    let powers = |min_blocks: usize| -> Vec<usize> {
        std::iter::successors(Some(1usize), |m| m.checked_mul(2))
            .take_while(|&m| m.saturating_mul(min_blocks) <= len)
            .collect()
    };
    let sizes = powers(128);
    if sizes.len() >= 3 {
        sizes
    } else {
        powers(4)
    }
}
