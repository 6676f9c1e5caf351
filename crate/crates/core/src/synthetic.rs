//! Ground-truth generators: exact fractional Gaussian noise and
//! block-correlated ensembles built from it.
//!
//! Estimators in this crate take level series and analyse their absolute
//! increments. To feed them a known fGn sample `g`, the generators emit the
//! levels `L(0) = BASE_LEVEL`, `L(i+1) = L(i) + g(i) + drift` with `drift`
//! large enough that every step is positive. The absolute increments are then
//! `g + drift`, and the drift vanishes when the profile removes the mean.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Column, RatePanel, TimeSeries};

pub const BASE_LEVEL: f64 = 3.0;
pub const MIN_FGN_LENGTH: usize = 16;

/// First date of every synthetic panel (a Thursday).
pub fn synthetic_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2007, 1, 4).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgnSpec {
    pub n: usize,
    pub hurst: f64,
    pub seed: u64,
    pub sigma: f64,
}

impl FgnSpec {
    pub fn new(n: usize, hurst: f64, seed: u64) -> Self {
        Self {
            n,
            hurst,
            seed,
            sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Hurst exponent must lie in (0, 1), got {}",
                self.hurst
            )));
        }
        if self.n < MIN_FGN_LENGTH {
            return Err(Error::InvalidParameter(format!(
                "fGn length must be at least {MIN_FGN_LENGTH}, got {}",
                self.n
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// `gamma(k) = (sigma²/2)(|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H})`.
pub fn fgn_autocovariance(k: usize, hurst: f64, sigma: f64) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * sigma * sigma * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Exact fGn sample by circulant embedding, falling back to
/// [`fgn_hosking`] if the embedding has a negative eigenvalue.
pub fn fgn_noise(spec: &FgnSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    match circulant_eigenvalues(spec) {
        Some(eig) => Ok(fgn_circulant(spec, &eig)),
        None => fgn_hosking(spec),
    }
}

/// Eigenvalues of the `2M`-circulant embedding, `M = n.next_power_of_two()`.
/// `None` if any is materially negative.
fn circulant_eigenvalues(spec: &FgnSpec) -> Option<Vec<f64>> {
    let m = spec.n.next_power_of_two();
    let len = 2 * m;
    let mut row: Vec<Complex<f64>> = Vec::with_capacity(len);
    for k in 0..=m {
        row.push(Complex::new(
            fgn_autocovariance(k, spec.hurst, spec.sigma),
            0.0,
        ));
    }
    for k in (1..m).rev() {
        row.push(Complex::new(
            fgn_autocovariance(k, spec.hurst, spec.sigma),
            0.0,
        ));
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut row);
    let max = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    let tol = 1e-10 * max.max(f64::MIN_POSITIVE);
    if row.iter().any(|c| c.re < -tol) {
        return None;
    }
    Some(row.into_iter().map(|c| c.re.max(0.0)).collect())
}

fn fgn_circulant(spec: &FgnSpec, eig: &[f64]) -> Vec<f64> {
    let len = eig.len();
    let m = len / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut w = vec![Complex::new(0.0, 0.0); len];
    w[0] = Complex::new(eig[0].sqrt() * rng.sample::<f64, _>(StandardNormal), 0.0);
    w[m] = Complex::new(eig[m].sqrt() * rng.sample::<f64, _>(StandardNormal), 0.0);
    for k in 1..m {
        let a = (eig[k] / 2.0).sqrt();
        let z = Complex::new(
            a * rng.sample::<f64, _>(StandardNormal),
            a * rng.sample::<f64, _>(StandardNormal),
        );
        w[k] = z;
        w[len - k] = z.conj();
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut w);
    let norm = (len as f64).sqrt();
    w[..spec.n].iter().map(|c| c.re / norm).collect()
}

/// Exact fGn sample by sequential conditioning (Durbin-Levinson). `O(n²)`.
pub fn fgn_hosking(spec: &FgnSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.n;
    let gamma: Vec<f64> = (0..n)
        .map(|k| fgn_autocovariance(k, spec.hurst, spec.sigma))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(n);
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut prev = Vec::with_capacity(n);
    let mut var = gamma[0];
    out.push(var.sqrt() * rng.sample::<f64, _>(StandardNormal));
    for t in 1..n {
        // update partial autocorrelations to order t
        let num = gamma[t]
            - phi
                .iter()
                .enumerate()
                .map(|(j, p)| p * gamma[t - 1 - j])
                .sum::<f64>();
        let kappa = num / var;
        prev.clear();
        prev.extend_from_slice(&phi);
        for j in 0..prev.len() {
            phi[j] = prev[j] - kappa * prev[prev.len() - 1 - j];
        }
        phi.push(kappa);
        var *= 1.0 - kappa * kappa;
        if var <= 0.0 {
            return Err(Error::InvalidParameter(
                "covariance not positive definite".into(),
            ));
        }
        let mean: f64 = phi
            .iter()
            .enumerate()
            .map(|(j, p)| p * out[t - 1 - j])
            .sum();
        out.push(mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal));
    }
    Ok(out)
}

/// `count` consecutive weekdays starting at `start` (moved forward off a
/// weekend).
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut d = start;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

/// Level series whose absolute increments are `noise + drift`.
pub fn levels_from_noise(
    id: impl Into<String>,
    noise: &[f64],
    start: NaiveDate,
) -> Result<TimeSeries> {
    let min = noise.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = noise.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    let drift = (-min).max(0.0) + spread;
    let mut values = Vec::with_capacity(noise.len() + 1);
    let mut level = BASE_LEVEL;
    values.push(level);
    for g in noise {
        level += g + drift;
        values.push(level);
    }
    TimeSeries::new(id, business_days(start, values.len()), values)
}

/// Level series of `spec.n + 1` observations driven by an fGn sample.
pub fn generate_fgn(spec: &FgnSpec) -> Result<TimeSeries> {
    let noise = fgn_noise(spec)?;
    levels_from_noise(format!("fgn_{}", spec.seed), &noise, synthetic_start())
}

/// SplitMix64 step; derives independent sub-seeds from one master seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Panel of `count` independent fGn-driven series `fgn00`, `fgn01`, ...
pub fn fgn_panel(count: usize, n: usize, hurst: f64, seed: u64) -> Result<RatePanel> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be positive".into()));
    }
    let width = digits(count);
    let series = (0..count)
        .map(|i| {
            let spec = FgnSpec::new(n, hurst, derive_seed(seed, i as u64));
            let noise = fgn_noise(&spec)?;
            levels_from_noise(format!("fgn{i:0width$}"), &noise, synthetic_start())
        })
        .collect::<Result<Vec<_>>>()?;
    panel_from_aligned(series)
}

fn digits(count: usize) -> usize {
    (count.saturating_sub(1)).to_string().len().max(2)
}

fn panel_from_aligned(series: Vec<TimeSeries>) -> Result<RatePanel> {
    let dates = series[0].dates().to_vec();
    let columns = series
        .into_iter()
        .map(|s| Column {
            id: s.id().to_string(),
            values: s.values().iter().copied().map(Some).collect(),
        })
        .collect();
    RatePanel::new(dates, columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub n_blocks: usize,
    pub block_size: usize,
    pub common_weight: f64,
    pub hurst: f64,
    pub n: usize,
    pub seed: u64,
}

impl BlockSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks < 2 || self.block_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 blocks of at least 2 members, got {}x{}",
                self.n_blocks, self.block_size
            )));
        }
        if !(0.0..=1.0).contains(&self.common_weight) {
            return Err(Error::InvalidParameter(format!(
                "common weight must lie in [0, 1], got {}",
                self.common_weight
            )));
        }
        FgnSpec::new(self.n, self.hurst, self.seed).validate()
    }
}

/// Members `b{block}:m{member}` = `w * common_b + (1 - w) * own` noise, each
/// turned into a level series.
pub fn generate_blocks(spec: &BlockSpec) -> Result<RatePanel> {
    spec.validate()?;
    let w = spec.common_weight;
    let bw = digits(spec.n_blocks);
    let mw = digits(spec.block_size);
    let mut series = Vec::with_capacity(spec.n_blocks * spec.block_size);
    let mut stream = 0u64;
    let next = |stream: &mut u64| {
        let s = derive_seed(spec.seed, *stream);
        *stream += 1;
        fgn_noise(&FgnSpec::new(spec.n, spec.hurst, s))
    };
    for b in 0..spec.n_blocks {
        let common = next(&mut stream)?;
        for m in 0..spec.block_size {
            let own = next(&mut stream)?;
            let mixed: Vec<f64> = common
                .iter()
                .zip(&own)
                .map(|(c, o)| w * c + (1.0 - w) * o)
                .collect();
            series.push(levels_from_noise(
                format!("b{b:0bw$}:m{m:0mw$}"),
                &mixed,
                synthetic_start(),
            )?);
        }
    }
    panel_from_aligned(series)
}

/// Block label of a `generate_blocks` member id.
pub fn block_of(id: &str) -> Option<&str> {
    id.split_once(':').map(|(b, _)| b)
}
