//! Hurst exponents from fluctuation functions, crossover detection, and
//! panel-wide exponent distributions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::{
    fluctuation, DetrendMethod, FluctuationFunction, ScaleGrid, DEFAULT_MAX_SCALE,
};
use crate::series::{series_profile, RatePanel};

/// Upper end of the default fit range.
pub const DEFAULT_FIT_MAX: usize = DEFAULT_MAX_SCALE;
pub const DEFAULT_BIN_WIDTH: f64 = 0.02;
pub const DEFAULT_MIN_IMPROVEMENT: f64 = 0.5;
pub const DEFAULT_MIN_SIDE_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub series_id: String,
    pub hurst: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub stderr: f64,
    /// Smallest and largest scale actually used.
    pub fit_range: (usize, usize),
    pub n_points: usize,
    /// Points inside the range dropped because `F(s) = 0`.
    pub n_excluded_zero: usize,
}

impl HurstEstimate {
    pub fn persistence(&self) -> Persistence {
        Persistence::classify(self.hurst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persistence {
    Antipersistent,
    Uncorrelated,
    Persistent,
}

impl Persistence {
    pub fn classify(hurst: f64) -> Self {
        Self::classify_within(hurst, 0.0)
    }

    /// Treats `|H - 0.5| <= band` as uncorrelated.
    pub fn classify_within(hurst: f64, band: f64) -> Self {
        if (hurst - 0.5).abs() <= band {
            Persistence::Uncorrelated
        } else if hurst < 0.5 {
            Persistence::Antipersistent
        } else {
            Persistence::Persistent
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Persistence::Antipersistent => "antipersistent",
            Persistence::Uncorrelated => "uncorrelated",
            Persistence::Persistent => "persistent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub sse: f64,
    pub sst: f64,
    pub sxx: f64,
}

pub(crate) fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateScales);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let sst = y.iter().map(|v| (v - my).powi(2)).sum();
    Ok(LineFit {
        slope,
        intercept,
        sse,
        sst,
        sxx,
    })
}

/// Positive points within `range` as `(scale, log10 s, log10 F)`, plus the
/// number of zero points skipped.
fn log_points(
    f: &FluctuationFunction,
    range: Option<(usize, usize)>,
) -> (Vec<(usize, f64, f64)>, usize) {
    let (lo, hi) = range.unwrap_or((0, usize::MAX));
    let mut zeros = 0;
    let pts = f
        .points
        .iter()
        .filter(|p| p.scale >= lo && p.scale <= hi)
        .filter(|p| {
            let keep = p.value > 0.0 && p.value.is_finite();
            zeros += usize::from(!keep);
            keep
        })
        .map(|p| (p.scale, (p.scale as f64).log10(), p.value.log10()))
        .collect();
    (pts, zeros)
}

/// Least-squares slope of `log10 F` against `log10 s` over the scales in
/// `range` (inclusive).
pub fn fit_hurst(f: &FluctuationFunction, range: Option<(usize, usize)>) -> Result<HurstEstimate> {
    let (pts, zeros) = log_points(f, range);
    if pts.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            found: pts.len(),
        });
    }
    let x: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let fit = ols(&x, &y)?;
    let r_squared = if fit.sst > 0.0 {
        (1.0 - fit.sse / fit.sst).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let dof = (pts.len() - 2) as f64;
    let stderr = (fit.sse / dof / fit.sxx).sqrt();
    Ok(HurstEstimate {
        series_id: f.series_id.clone(),
        hurst: fit.slope,
        intercept: fit.intercept,
        r_squared,
        stderr,
        fit_range: (pts[0].0, pts[pts.len() - 1].0),
        n_points: pts.len(),
        n_excluded_zero: zeros,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverConfig {
    pub min_side_points: usize,
    /// Required `1 - sse_piecewise / sse_single` to report a breakpoint.
    pub min_improvement: f64,
}

impl Default for CrossoverConfig {
    fn default() -> Self {
        Self {
            min_side_points: DEFAULT_MIN_SIDE_POINTS,
            min_improvement: DEFAULT_MIN_IMPROVEMENT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub breakpoint_scale: Option<usize>,
    /// Slopes of the best two-line split, reported even when the split is
    /// rejected.
    pub slope_left: f64,
    pub slope_right: f64,
    pub sse_single: f64,
    pub sse_piecewise: f64,
    pub improvement_ratio: f64,
}

/// Below this `sse_single / sst` a single line is treated as exact; pure
/// rounding residue would otherwise yield arbitrary improvement ratios.
const EXACT_FIT_RTOL: f64 = 1e-20;

/// Exhaustive two-regime search. Each interior scale is tried as the break;
/// the two lines share the break point.
pub fn detect_crossover(
    f: &FluctuationFunction,
    config: &CrossoverConfig,
) -> Result<CrossoverReport> {
    let k = config.min_side_points.max(2);
    let (pts, _) = log_points(f, None);
    if pts.len() < 2 * k + 1 {
        return Err(Error::TooFewPoints {
            needed: 2 * k + 1,
            found: pts.len(),
        });
    }
    let x: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let single = ols(&x, &y)?;

    let mut best: Option<(usize, LineFit, LineFit)> = None;
    // left = [0, b], right = [b, n): both need k points
    for b in (k - 1)..=(pts.len() - k) {
        let left = ols(&x[..=b], &y[..=b])?;
        let right = ols(&x[b..], &y[b..])?;
        let total = left.sse + right.sse;
        if best.as_ref().is_none_or(|(_, l, r)| total < l.sse + r.sse) {
            best = Some((b, left, right));
        }
    }
    let (b, left, right) = best.expect("at least one candidate");
    let sse_piecewise = (left.sse + right.sse).min(single.sse);
    let exact = single.sse <= EXACT_FIT_RTOL * single.sst.max(f64::MIN_POSITIVE);
    let improvement_ratio = if exact || single.sse <= 0.0 {
        0.0
    } else {
        1.0 - sse_piecewise / single.sse
    };
    Ok(CrossoverReport {
        breakpoint_scale: (improvement_ratio >= config.min_improvement).then_some(pts[b].0),
        slope_left: left.slope,
        slope_right: right.slope,
        sse_single: single.sse,
        sse_piecewise,
        improvement_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub min: f64,
    pub max: f64,
    pub mode_low: f64,
    pub mode_high: f64,
    pub mode_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFailure {
    pub series_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstDistribution {
    pub estimates: Vec<HurstEstimate>,
    pub failures: Vec<SeriesFailure>,
    pub histogram: Vec<HistogramBin>,
    pub summary: Option<HistogramSummary>,
}

impl HurstDistribution {
    /// `id,H,stderr,r2,s_lo,s_hi` rows.
    pub fn estimates_table(&self) -> String {
        let mut out = String::from("id,H,stderr,r2,s_lo,s_hi\n");
        for e in &self.estimates {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.series_id, e.hurst, e.stderr, e.r_squared, e.fit_range.0, e.fit_range.1
            ));
        }
        out
    }

    /// `bin_low,bin_high,count` rows.
    pub fn histogram_table(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for b in &self.histogram {
            out.push_str(&format!("{},{},{}\n", b.low, b.high, b.count));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionOptions {
    pub method: DetrendMethod,
    /// Defaults to [`ScaleGrid::default_for_length`].
    pub grid: Option<ScaleGrid>,
    pub fit_range: Option<(usize, usize)>,
    pub bin_width: f64,
}

impl Default for DistributionOptions {
    fn default() -> Self {
        Self {
            method: DetrendMethod::default(),
            grid: None,
            fit_range: Some((0, DEFAULT_FIT_MAX)),
            bin_width: DEFAULT_BIN_WIDTH,
        }
    }
}

/// Fluctuation function of every panel member.
pub fn panel_fluctuations(
    panel: &RatePanel,
    method: &DetrendMethod,
    grid: Option<&ScaleGrid>,
) -> Result<Vec<(String, Result<FluctuationFunction>)>> {
    if panel.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let series = panel.all_series()?;
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = ScaleGrid::default_for_length(panel.n_dates().saturating_sub(1))?;
            &default_grid
        }
    };
    let mut out: Vec<_> = series
        .par_iter()
        .map(|s| {
            let f = series_profile(s).and_then(|p| fluctuation(&p, grid, method));
            (s.id().to_string(), f)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// One estimate per member, sorted by id; members that cannot be fitted are
/// listed in `failures` instead of aborting the batch.
pub fn hurst_distribution(
    panel: &RatePanel,
    options: &DistributionOptions,
) -> Result<HurstDistribution> {
    if !(options.bin_width > 0.0 && options.bin_width.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bin width must be positive, got {}",
            options.bin_width
        )));
    }
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (id, f) in panel_fluctuations(panel, &options.method, options.grid.as_ref())? {
        match f.and_then(|f| fit_hurst(&f, options.fit_range)) {
            Ok(e) => estimates.push(e),
            Err(e) => failures.push(SeriesFailure {
                series_id: id,
                reason: e.to_string(),
            }),
        }
    }
    let values: Vec<f64> = estimates.iter().map(|e| e.hurst).collect();
    let (histogram, summary) = histogram(&values, options.bin_width);
    Ok(HurstDistribution {
        estimates,
        failures,
        histogram,
        summary,
    })
}

/// `k * width` with the representation noise of the product rounded away,
/// so 35 bins of 0.02 print as 0.7.
fn bin_edge(k: i64, width: f64) -> f64 {
    (k as f64 * width * 1e12).round() / 1e12 + 0.0
}

/// Bins `[k w, (k+1) w)` covering the data; ties for the mode go to the
/// lowest bin.
pub fn histogram(values: &[f64], width: f64) -> (Vec<HistogramBin>, Option<HistogramSummary>) {
    if values.is_empty() {
        return (Vec::new(), None);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = (min / width).floor() as i64;
    let last = (max / width).floor() as i64;
    let mut bins: Vec<HistogramBin> = (first..=last)
        .map(|k| HistogramBin {
            low: bin_edge(k, width),
            high: bin_edge(k + 1, width),
            count: 0,
        })
        .collect();
    let last_bin = bins.len() - 1;
    for v in values {
        let k = ((v / width).floor() as i64 - first) as usize;
        bins[k.min(last_bin)].count += 1;
    }
    let mode = bins.iter().fold(
        &bins[0],
        |best, b| if b.count > best.count { b } else { best },
    );
    let summary = HistogramSummary {
        min,
        max,
        mode_low: mode.low,
        mode_high: mode.high,
        mode_count: mode.count,
    };
    (bins, Some(summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::DetrendMethod;

    fn power_law(c: f64, h: f64, scales: &[usize]) -> FluctuationFunction {
        FluctuationFunction::from_points(
            "p",
            DetrendMethod::DFA1,
            scales.iter().map(|&s| (s, c * (s as f64).powf(h))),
        )
    }

    #[test]
    fn exact_power_law_fit() {
        let scales: Vec<usize> = (1..=10).map(|i| 10 * i).collect();
        let e = fit_hurst(&power_law(2.0, 0.83, &scales), None).unwrap();
        assert!((e.hurst - 0.83).abs() < 1e-12);
        assert!((e.r_squared - 1.0).abs() < 1e-12);
        assert!((e.intercept - 2f64.log10()).abs() < 1e-12);
        assert_eq!(e.n_points, 10);
        assert_eq!(e.fit_range, (10, 100));
        assert!(e.stderr < 1e-6);
    }

    #[test]
    fn range_restricts_points() {
        let scales: Vec<usize> = (1..=10).map(|i| 10 * i).collect();
        let e = fit_hurst(&power_law(1.0, 0.6, &scales), Some((25, 75))).unwrap();
        assert_eq!(e.fit_range, (30, 70));
        assert_eq!(e.n_points, 5);
    }

    #[test]
    fn zero_points_are_excluded_and_counted() {
        let mut f = power_law(1.0, 0.7, &[10, 20, 30, 40, 50]);
        f.points[1].value = 0.0;
        let e = fit_hurst(&f, None).unwrap();
        assert_eq!(e.n_points, 4);
        assert_eq!(e.n_excluded_zero, 1);
        assert!((e.hurst - 0.7).abs() < 1e-12);

        let zeros = FluctuationFunction::from_points(
            "z",
            DetrendMethod::DFA1,
            [(10, 0.0), (20, 0.0), (30, 0.0)],
        );
        assert!(matches!(
            fit_hurst(&zeros, None),
            Err(Error::TooFewPoints { found: 0, .. })
        ));
    }

    #[test]
    fn classification() {
        assert_eq!(Persistence::classify(0.5), Persistence::Uncorrelated);
        assert_eq!(Persistence::classify(0.3), Persistence::Antipersistent);
        assert_eq!(Persistence::classify(0.83), Persistence::Persistent);
        assert_eq!(
            Persistence::classify_within(0.52, 0.05),
            Persistence::Uncorrelated
        );
    }

    #[test]
    fn crossover_on_piecewise_law() {
        let mut scales = ScaleGrid::log_spaced(10, 1000, 25)
            .unwrap()
            .scales()
            .to_vec();
        scales.push(250);
        scales.sort_unstable();
        scales.dedup();
        let f = FluctuationFunction::from_points(
            "pw",
            DetrendMethod::DFA1,
            scales.iter().map(|&s| {
                let s = s as f64;
                let v = if s <= 250.0 {
                    s.powf(0.85)
                } else {
                    250f64.powf(0.85) * (s / 250.0).powf(0.5)
                };
                (s as usize, v)
            }),
        );
        let r = detect_crossover(&f, &CrossoverConfig::default()).unwrap();
        assert_eq!(r.breakpoint_scale, Some(250));
        assert!((r.slope_left - 0.85).abs() < 1e-6);
        assert!((r.slope_right - 0.5).abs() < 1e-6);
        assert!(r.sse_piecewise <= r.sse_single);
    }

    #[test]
    fn crossover_absent_on_single_law() {
        let scales = ScaleGrid::log_spaced(10, 1000, 25).unwrap();
        let f = power_law(3.0, 0.71, scales.scales());
        for threshold in [0.1, 0.5, 0.9] {
            let r = detect_crossover(
                &f,
                &CrossoverConfig {
                    min_side_points: 3,
                    min_improvement: threshold,
                },
            )
            .unwrap();
            assert_eq!(r.breakpoint_scale, None);
            assert_eq!(r.improvement_ratio, 0.0);
        }
    }

    #[test]
    fn crossover_needs_enough_points() {
        let f = power_law(1.0, 0.5, &[10, 20, 30, 40, 50, 60]);
        assert!(detect_crossover(&f, &CrossoverConfig::default()).is_err());
    }

    #[test]
    fn histogram_bins_and_mode() {
        let (bins, summary) = histogram(&[0.71, 0.75, 0.751, 0.79, 0.752], 0.02);
        let summary = summary.unwrap();
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 5);
        assert!(summary.mode_low <= 0.75 && 0.75 < summary.mode_high);
        assert_eq!(summary.mode_count, 3);
        assert_eq!(summary.min, 0.71);
        assert!(histogram(&[], 0.02).1.is_none());
    }
}
