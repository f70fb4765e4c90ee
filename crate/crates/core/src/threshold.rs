//! Family-wise critical values for the max-over-scales statistic, and the
//! power functions of the two-scale test.
//!
//! At a fixed time the SWA values across scales form a stationary Gaussian
//! sequence whose correlation depends only on the ratio of window lengths.
//! The Monte-Carlo threshold simulates that sequence once and applies to
//! every time index.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normal;
use crate::rng::{derive_seed, substream};

/// Default number of Monte-Carlo replicates.
pub const DEFAULT_MC_REPS: usize = 1_000_000;

/// Smallest replicate count accepted for Monte-Carlo thresholds.
pub const MIN_MC_REPS: usize = 10_000;

// Replicates per random substream. Fixed, so output does not depend on the
// number of worker threads.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdKind {
    /// `Φ⁻¹(1 − α/2)`, the one-scale two-sided critical value.
    SingleScale,
    /// `Φ⁻¹((1 − α)^{1/(2m)})`.
    Asymptotic,
    /// Empirical quantile of `max_k |Z_k|` under the cross-scale law.
    MonteCarlo,
}

impl fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdKind::SingleScale => "single-scale",
            ThresholdKind::Asymptotic => "asymptotic",
            ThresholdKind::MonteCarlo => "monte-carlo",
        })
    }
}

impl FromStr for ThresholdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single-scale" | "single" => Ok(Self::SingleScale),
            "asymptotic" => Ok(Self::Asymptotic),
            "monte-carlo" | "improved" => Ok(Self::MonteCarlo),
            other => Err(invalid("kind", format!("unknown threshold kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdQuery {
    pub alpha: f64,
    pub num_scales: usize,
    pub hurst: f64,
    pub base: usize,
    pub kind: ThresholdKind,
    pub mc_reps: usize,
    pub seed: u64,
}

impl ThresholdQuery {
    pub fn new(alpha: f64, num_scales: usize, hurst: f64, kind: ThresholdKind) -> Self {
        Self {
            alpha,
            num_scales,
            hurst,
            base: 2,
            kind,
            mc_reps: DEFAULT_MC_REPS,
            seed: 0,
        }
    }

    pub fn with_base(mut self, base: usize) -> Self {
        self.base = base;
        self
    }

    pub fn with_mc(mut self, reps: usize, seed: u64) -> Self {
        self.mc_reps = reps;
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.num_scales == 0 {
            return Err(invalid("scales", "must be at least 1"));
        }
        if self.kind == ThresholdKind::MonteCarlo {
            check_hurst(self.hurst)?;
            if self.base < 2 {
                return Err(invalid("base", format!("{} is below 2", self.base)));
            }
            if self.mc_reps < MIN_MC_REPS {
                return Err(invalid(
                    "mc-reps",
                    format!("{} is below the minimum of {MIN_MC_REPS}", self.mc_reps),
                ));
            }
        }
        Ok(())
    }
}

/// A critical value and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub value: f64,
    pub kind: ThresholdKind,
    /// Monte-Carlo standard error; zero for closed forms.
    pub se: f64,
    pub alpha: f64,
    pub num_scales: usize,
    /// Replicates behind a Monte-Carlo value; zero for closed forms.
    pub mc_reps: usize,
}

impl ThresholdResult {
    /// A caller-supplied critical value.
    pub fn fixed(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(invalid("threshold", format!("{value} must be positive")));
        }
        Ok(Self {
            value,
            kind: ThresholdKind::SingleScale,
            se: 0.0,
            alpha: 2.0 * normal::sf(value),
            num_scales: 1,
            mc_reps: 0,
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} is outside (0, 1)")))
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(invalid("hurst", format!("{hurst} is outside (0, 1)")))
    }
}

/// Correlation between SWA values whose windows end at the same time and
/// have length ratio `ratio ≥ 1`:
/// `(1 + r^{2H} − (r − 1)^{2H}) / (2 r^H)`.
pub fn window_corr(hurst: f64, ratio: f64) -> f64 {
    let two_h = 2.0 * hurst;
    // r^{2H} - (r-1)^{2H} = -r^{2H} expm1(2H ln(1 - 1/r))
    let tail = -(two_h * (-1.0 / ratio).ln_1p()).exp_m1();
    0.5 * ratio.powf(-hurst) + 0.5 * ratio.powf(hurst) * tail
}

/// Correlation between scales `lag` apart for base `base`.
pub fn cross_scale_corr(hurst: f64, base: usize, lag: u32) -> f64 {
    if lag == 0 {
        return 1.0;
    }
    window_corr(hurst, (base as f64).powi(lag as i32))
}

/// The `m × m` correlation matrix of one SWA column.
pub fn scale_cov_matrix(hurst: f64, base: usize, m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(invalid("scales", "must be at least 1"));
    }
    check_hurst(hurst)?;
    let corr: Vec<f64> = (0..m as u32)
        .map(|lag| cross_scale_corr(hurst, base, lag))
        .collect();
    let matrix = DMatrix::from_fn(m, m, |i, j| corr[i.abs_diff(j)]);
    let smallest = smallest_eigenvalue(&matrix);
    if smallest < -1e-6 {
        return Err(Error::Factorization(format!(
            "cross-scale correlation has eigenvalue {smallest:e}"
        )));
    }
    Ok(matrix)
}

pub fn smallest_eigenvalue(matrix: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(matrix.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `Φ⁻¹(1 − α/2)`.
pub fn single_scale_threshold(alpha: f64) -> Result<ThresholdResult> {
    check_alpha(alpha)?;
    Ok(ThresholdResult {
        value: normal::inverse_cdf(1.0 - alpha / 2.0),
        kind: ThresholdKind::SingleScale,
        se: 0.0,
        alpha,
        num_scales: 1,
        mc_reps: 0,
    })
}

/// `Φ⁻¹((1 − α)^{1/(2m)})`, from asymptotic independence of the maximum and
/// minimum of the cross-scale sequence.
pub fn asymptotic_threshold(alpha: f64, m: usize) -> Result<ThresholdResult> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(invalid("scales", "must be at least 1"));
    }
    let p = ((1.0 - alpha).ln() / (2 * m) as f64).exp();
    Ok(ThresholdResult {
        value: normal::inverse_cdf(p),
        kind: ThresholdKind::Asymptotic,
        se: 0.0,
        alpha,
        num_scales: m,
        mc_reps: 0,
    })
}

/// Monte-Carlo ("improved") threshold.
pub fn improved_threshold(query: &ThresholdQuery) -> Result<ThresholdResult> {
    if query.kind != ThresholdKind::MonteCarlo {
        return Err(invalid(
            "kind",
            "improved threshold needs kind = monte-carlo",
        ));
    }
    query.validate()?;
    let sample = MaxAbsSample::simulate(
        query.hurst,
        query.base,
        query.num_scales,
        query.mc_reps,
        query.seed,
    )?;
    Ok(sample.threshold(query.alpha))
}

/// Dispatches on `query.kind`.
pub fn compute_threshold(query: &ThresholdQuery) -> Result<ThresholdResult> {
    query.validate()?;
    match query.kind {
        ThresholdKind::SingleScale => single_scale_threshold(query.alpha),
        ThresholdKind::Asymptotic => asymptotic_threshold(query.alpha, query.num_scales),
        ThresholdKind::MonteCarlo => improved_threshold(query),
    }
}

/// Sampling factor `A` with `A Aᵀ = Σ`.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    dim: usize,
    // Row-major, dim × dim.
    factor: Vec<f64>,
    lower: bool,
}

impl GaussianFactor {
    /// Cholesky factor when `Σ` is comfortably positive definite, otherwise
    /// the symmetric square root from the eigen-decomposition with tiny
    /// negative eigenvalues clamped to zero.
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || cov.ncols() != dim {
            return Err(Error::Factorization(
                "covariance must be square and non-empty".into(),
            ));
        }
        if let Some(chol) = cov.clone().cholesky() {
            let l = chol.l();
            let min_pivot = (0..dim).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
            if min_pivot > 1e-6 {
                let factor = (0..dim * dim)
                    .map(|idx| l[(idx / dim, idx % dim)])
                    .collect();
                return Ok(Self {
                    dim,
                    factor,
                    lower: true,
                });
            }
        }
        let eig = SymmetricEigen::new(cov.clone());
        let smallest = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if smallest < -1e-6 {
            return Err(Error::Factorization(format!(
                "covariance has eigenvalue {smallest:e}"
            )));
        }
        let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        let a = &eig.eigenvectors * root;
        let factor = (0..dim * dim)
            .map(|idx| a[(idx / dim, idx % dim)])
            .collect();
        Ok(Self {
            dim,
            factor,
            lower: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes `A z` into `out`, drawing `z` from `rng`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.factor[i * self.dim..(i + 1) * self.dim];
            let end = if self.lower { i + 1 } else { self.dim };
            *o = row[..end].iter().zip(&z[..end]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Runs `reps` replicates of `A z + mean` and maps each draw through `stat`.
/// Replicates are grouped in fixed chunks, chunk `c` using `substream(seed, c)`.
fn simulate<F>(factor: &GaussianFactor, mean: &[f64], reps: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = factor.dim();
    let chunks = reps.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(reps - c * CHUNK);
            let mut rng = substream(seed, c as u64);
            let mut z = vec![0.0; dim];
            let mut x = vec![0.0; dim];
            (0..count)
                .map(|_| {
                    factor.sample_into(&mut rng, &mut z, &mut x);
                    for (xi, mi) in x.iter_mut().zip(mean) {
                        *xi += mi;
                    }
                    stat(&x)
                })
                .collect()
        })
        .collect();
    per_chunk.concat()
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Sorted Monte-Carlo draws of `max_k |Z_k|` for one `(H, b, m)`; any
/// number of α levels can be read off the same sample.
#[derive(Debug, Clone)]
pub struct MaxAbsSample {
    sorted: Vec<f64>,
    num_scales: usize,
}

impl MaxAbsSample {
    pub fn simulate(
        hurst: f64,
        base: usize,
        num_scales: usize,
        reps: usize,
        seed: u64,
    ) -> Result<Self> {
        if reps < 2 {
            return Err(invalid("mc-reps", "need at least two replicates"));
        }
        let cov = scale_cov_matrix(hurst, base, num_scales)?;
        let factor = GaussianFactor::new(&cov)?;
        let mean = vec![0.0; num_scales];
        let mut sorted = simulate(&factor, &mean, reps, seed, max_abs);
        sorted.sort_unstable_by(f64::total_cmp);
        Ok(Self { sorted, num_scales })
    }

    pub fn reps(&self) -> usize {
        self.sorted.len()
    }

    pub fn draws(&self) -> &[f64] {
        &self.sorted
    }

    /// Empirical `p`-quantile with linear interpolation between order
    /// statistics.
    pub fn quantile(&self, p: f64) -> f64 {
        sorted_quantile(&self.sorted, p)
    }

    /// `(1 − α)`-quantile plus its standard error.
    pub fn threshold(&self, alpha: f64) -> ThresholdResult {
        let p = 1.0 - alpha;
        ThresholdResult {
            value: self.quantile(p),
            kind: ThresholdKind::MonteCarlo,
            se: quantile_standard_error(&self.sorted, p),
            alpha,
            num_scales: self.num_scales,
            mc_reps: self.sorted.len(),
        }
    }

    /// Fraction of draws strictly above `c`.
    pub fn exceedance(&self, c: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v <= c);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `sqrt(p(1 − p)/n) / f(q_p)`, with the density at the quantile estimated by
/// a difference quotient of order statistics over a Hall–Sheather bandwidth.
fn quantile_standard_error(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len() as f64;
    let z = normal::inverse_cdf(p);
    let z_975 = normal::inverse_cdf(0.975);
    let bandwidth = n.powf(-1.0 / 3.0)
        * z_975.powf(2.0 / 3.0)
        * (1.5 * normal::pdf(z).powi(2) / (2.0 * z * z + 1.0)).powf(1.0 / 3.0);
    let lo = (p - bandwidth).max(1.0 / n);
    let hi = (p + bandwidth).min(1.0 - 1.0 / n);
    if hi <= lo {
        return 0.0;
    }
    let sparsity = (sorted_quantile(sorted, hi) - sorted_quantile(sorted, lo)) / (hi - lo);
    sparsity * (p * (1.0 - p) / n).sqrt()
}

/// Two-scale expansion `C₀ − φ(C₀) C₀² H² L^{2(H−1)} / (2√(1−α))`.
pub fn two_scale_expansion(alpha: f64, hurst: f64, window: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if window < 2 {
        return Err(invalid("window", "must be at least 2"));
    }
    let c0 = two_scale_limit(alpha);
    let l = window as f64;
    Ok(c0
        - normal::pdf(c0) * c0 * c0 * hurst * hurst * l.powf(2.0 * (hurst - 1.0))
            / (2.0 * (1.0 - alpha).sqrt()))
}

/// `C₀ = Φ⁻¹((1 + √(1−α))/2)`, the two-scale threshold for independent scales.
pub fn two_scale_limit(alpha: f64) -> f64 {
    normal::inverse_cdf((1.0 + (1.0 - alpha).sqrt()) / 2.0)
}

/// `1 − [Φ(C − μ) − Φ(−C − μ)]`: probability that `|N(μ, 1)| > C`.
pub fn power_single_scale(threshold: f64, shift: f64) -> f64 {
    normal::sf(threshold - shift) + normal::cdf(-threshold - shift)
}

/// Mean of the scale-`L` value when `K` of its `L` samples carry shift δ.
pub fn shifted_mean(delta: f64, hurst: f64, window: u64, shifted: u64) -> f64 {
    shifted as f64 * delta / (window as f64).powf(hurst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerQuery {
    pub alpha: f64,
    pub delta: f64,
    pub hurst: f64,
    /// Window length `L` of the coarse scale.
    pub window: u64,
    /// Number of shifted samples `K` inside the coarse window.
    pub shifted: u64,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub power: f64,
    pub se: f64,
    /// Two-scale Monte-Carlo critical value used for the rejection region.
    pub threshold: ThresholdResult,
    /// Correlation between the scale-1 and scale-`L` values.
    pub correlation: f64,
}

/// Monte-Carlo power of the two-scale test `max(|Y₁|, |Y_L|) > C`.
///
/// The threshold is the two-scale Monte-Carlo critical value at level α
/// (drawn from `derive_seed(seed, 0)`); the power draws use means
/// `(δ, Kδ/L^H)` and `derive_seed(seed, 1)`.
pub fn power_two_scale(query: &PowerQuery) -> Result<PowerEstimate> {
    check_alpha(query.alpha)?;
    check_hurst(query.hurst)?;
    if query.window < 2 {
        return Err(invalid("window", "must be at least 2"));
    }
    if query.shifted == 0 || query.shifted > query.window {
        return Err(invalid("shifted", "must be in 1..=window"));
    }
    if query.reps < MIN_MC_REPS {
        return Err(invalid("reps", format!("must be at least {MIN_MC_REPS}")));
    }
    let base = usize::try_from(query.window).map_err(|_| invalid("window", "too large"))?;
    let threshold = improved_threshold(
        &ThresholdQuery::new(query.alpha, 2, query.hurst, ThresholdKind::MonteCarlo)
            .with_base(base)
            .with_mc(query.reps, derive_seed(query.seed, 0)),
    )?;

    let cov = scale_cov_matrix(query.hurst, base, 2)?;
    let correlation = cov[(0, 1)];
    let factor = GaussianFactor::new(&cov)?;
    let mean = [
        query.delta,
        shifted_mean(query.delta, query.hurst, query.window, query.shifted),
    ];
    let c = threshold.value;
    let hits = simulate(
        &factor,
        &mean,
        query.reps,
        derive_seed(query.seed, 1),
        |x| {
            if max_abs(x) > c {
                1.0
            } else {
                0.0
            }
        },
    );
    let power = hits.iter().sum::<f64>() / query.reps as f64;
    Ok(PowerEstimate {
        power,
        se: (power * (1.0 - power) / query.reps as f64).sqrt(),
        threshold,
        correlation,
    })
}

/// Leading-order power difference `f(α, δ)` between the two-scale test and
/// the average of the two one-scale tests, for `α ∈ [0, 1)`.
pub fn power_gap(alpha: f64, delta: f64) -> f64 {
    let c_alpha = normal::inverse_cdf(1.0 - alpha / 2.0);
    let c0 = two_scale_limit(alpha);
    let band = |c: f64| normal::cdf(c - delta) - normal::cdf(-c - delta);
    band(c_alpha) + (1.0 - alpha) - 2.0 * (1.0 - alpha).sqrt() * band(c0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corr_examples() {
        assert_eq!(cross_scale_corr(0.9, 2, 0), 1.0);
        assert!((cross_scale_corr(0.5, 2, 1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((cross_scale_corr(0.9, 2, 1) - 0.9330329915368074).abs() < 1e-14);
        assert!((cross_scale_corr(0.9, 2, 2) - 0.8473170205499339).abs() < 1e-14);
        assert!((window_corr(0.7, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn corr_matches_direct_formula() {
        for &h in &[0.55, 0.7, 0.9] {
            for &b in &[2usize, 3, 10] {
                for lag in 1..6u32 {
                    let r = (b as f64).powi(lag as i32);
                    let direct =
                        (1.0 + r.powf(2.0 * h) - (r - 1.0).powf(2.0 * h)) / (2.0 * r.powf(h));
                    assert!((cross_scale_corr(h, b, lag) - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn corr_large_lag_expansion() {
        for &h in &[0.6, 0.75, 0.9] {
            let k = 20;
            let expansion = h * 2f64.powf(k as f64 * (h - 1.0)) + 2f64.powf(-(k as f64) * h) / 2.0;
            let ratio = cross_scale_corr(h, 2, k) / expansion;
            assert!((ratio - 1.0).abs() < 1e-3, "H={h} ratio={ratio}");
        }
    }

    #[test]
    fn matrix_shape() {
        let one = scale_cov_matrix(0.7, 2, 1).unwrap();
        assert_eq!(one, DMatrix::from_element(1, 1, 1.0));
        let two = scale_cov_matrix(0.5, 2, 2).unwrap();
        assert!((two[(0, 1)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(two[(0, 1)], two[(1, 0)]);

        let big = scale_cov_matrix(0.9, 2, 15).unwrap();
        assert!(smallest_eigenvalue(&big) >= -1e-10);
        for i in 0..15 {
            assert_eq!(big[(i, i)], 1.0);
            for j in i + 1..15 {
                assert!(big[(i, j)] > 0.0 && big[(i, j)] < 1.0);
                if j > i + 1 {
                    assert!(big[(i, j)] < big[(i, j - 1)]);
                }
            }
        }
    }

    #[test]
    fn asymptotic_values() {
        let cases = [
            (0.05, 1, 1.954508327213992),
            (0.05, 2, 2.234002475225012),
            (0.05, 15, 2.927532701616291),
            (0.01, 15, 3.40160651448077),
        ];
        for (a, m, want) in cases {
            let got = asymptotic_threshold(a, m).unwrap().value;
            assert!((got - want).abs() < 1e-9, "{a} {m}: {got}");
        }
        assert!(asymptotic_threshold(0.0, 3).is_err());
        assert!(asymptotic_threshold(0.05, 0).is_err());
    }

    #[test]
    fn single_scale_value() {
        let t = single_scale_threshold(0.05).unwrap();
        assert!((t.value - 1.959963984540054).abs() < 1e-12);
        assert!(single_scale_threshold(1.0).is_err());
    }

    #[test]
    fn improved_rejects_bad_queries() {
        let q = ThresholdQuery::new(0.05, 3, 0.8, ThresholdKind::MonteCarlo).with_mc(100, 0);
        assert!(improved_threshold(&q).is_err());
        let q = ThresholdQuery::new(0.05, 3, 0.8, ThresholdKind::Asymptotic);
        assert!(improved_threshold(&q).is_err());
        let q = ThresholdQuery::new(0.05, 3, 1.0, ThresholdKind::MonteCarlo).with_mc(20_000, 0);
        assert!(improved_threshold(&q).is_err());
    }

    #[test]
    fn improved_single_scale_reduces_to_normal_quantile() {
        let q = ThresholdQuery::new(0.05, 1, 0.8, ThresholdKind::MonteCarlo).with_mc(200_000, 5);
        let t = improved_threshold(&q).unwrap();
        assert!((t.value - 1.959963984540054).abs() < 2.0 * t.se, "{t:?}");
        assert!(t.se > 0.0 && t.se < 0.02);
    }

    #[test]
    fn improved_is_deterministic() {
        let q = ThresholdQuery::new(0.05, 4, 0.8, ThresholdKind::MonteCarlo).with_mc(20_000, 99);
        assert_eq!(
            improved_threshold(&q).unwrap(),
            improved_threshold(&q).unwrap()
        );
    }

    #[test]
    fn factor_reproduces_covariance() {
        let cov = scale_cov_matrix(0.8, 2, 5).unwrap();
        let f = GaussianFactor::new(&cov).unwrap();
        let a = DMatrix::from_row_slice(5, 5, &f.factor);
        assert!((a.clone() * a.transpose() - &cov).abs().max() < 1e-12);
        // Singular matrix falls back to the eigen route.
        let singular = DMatrix::from_element(3, 3, 1.0);
        let f = GaussianFactor::new(&singular).unwrap();
        assert!(!f.lower);
        let a = DMatrix::from_row_slice(3, 3, &f.factor);
        assert!((a.clone() * a.transpose() - singular).abs().max() < 1e-12);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(sorted_quantile(&xs, 0.0), 1.0);
        assert_eq!(sorted_quantile(&xs, 1.0), 4.0);
        assert!((sorted_quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn expansion_values() {
        let c0 = two_scale_limit(0.05);
        assert!((c0 - 2.236476644557792).abs() < 1e-12);
        let e = two_scale_expansion(0.05, 0.5, 100).unwrap();
        assert!((e - 2.236266772844403).abs() < 1e-12);
        assert!(two_scale_expansion(0.05, 0.5, 1).is_err());
    }

    #[test]
    fn single_scale_power() {
        assert!((power_single_scale(1.96, 0.0) - 0.04999579029644087).abs() < 1e-12);
        assert!((power_single_scale(1.96, 1.0) - 0.17006580267857587).abs() < 1e-12);
        assert!((power_single_scale(1.96, 40.0) - 1.0).abs() < 1e-15);
        assert!((power_single_scale(1.96, -40.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gap_at_zero_alpha_is_exactly_zero() {
        for d in [0.1, 0.5, 1.0, 2.0] {
            assert_eq!(power_gap(0.0, d), 0.0);
        }
    }

    #[test]
    fn gap_values() {
        // 40-digit evaluations of the displayed expression.
        let cases = [
            (0.005, 0.1, 3.1957407e-5),
            (0.005, 1.0, 0.007583953),
            (0.01, 2.0, 0.1356661),
            (0.001, 0.5, 0.00023721445),
        ];
        for (a, d, want) in cases {
            let got = power_gap(a, d);
            assert!(((got - want) / want).abs() < 1e-6, "f({a},{d}) = {got}");
        }
    }

    #[test]
    fn power_query_validation() {
        let q = PowerQuery {
            alpha: 0.05,
            delta: 1.0,
            hurst: 0.9,
            window: 16,
            shifted: 17,
            reps: 20_000,
            seed: 0,
        };
        assert!(power_two_scale(&q).is_err());
        assert!(power_two_scale(&PowerQuery { shifted: 0, ..q }).is_err());
        assert!(power_two_scale(&PowerQuery {
            window: 1,
            shifted: 1,
            ..q
        })
        .is_err());
    }

    #[test]
    fn kind_parse() {
        assert_eq!(
            "improved".parse::<ThresholdKind>().unwrap(),
            ThresholdKind::MonteCarlo
        );
        assert_eq!(
            "asymptotic".parse::<ThresholdKind>().unwrap(),
            ThresholdKind::Asymptotic
        );
        assert!("exact".parse::<ThresholdKind>().is_err());
    }
}
