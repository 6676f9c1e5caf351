//! Segment-wise detrended variance: the shared engine behind the auto
//! fluctuation function and the cross-correlation variance.
//!
//! A profile of length `n` is cut into `floor(n/s)` windows of length `s`
//! starting from the front and the same number starting from the back, so
//! every scale yields `2 * floor(n/s)` segments even when `s` divides `n`.
//! Each segment's local trend is removed and
//!
//! ```text
//! F(s) = sqrt( (1 / 2N_s) * sum_v F²(v) ),   F²(v) = (1/s) * sum_i residual_i²
//! ```
//!
//! i.e. `F` is the root of the mean segment variance.
//!
//! Trends come either from a least-squares polynomial fitted inside the
//! segment (DFA) or from a moving average of window `s` computed once over
//! the whole profile and truncated at its ends (DMA).

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Profile;

pub const DEFAULT_MIN_SCALE: usize = 10;
/// One trading year.
pub const DEFAULT_MAX_SCALE: usize = 250;
pub const DEFAULT_GRID_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaAlignment {
    /// Window centred on the point; for even `s` it reaches one step further
    /// forward than back.
    Centered,
    /// Window covering the `s` most recent points.
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetrendMethod {
    Dfa { order: usize },
    Dma { alignment: MaAlignment },
}

impl Default for DetrendMethod {
    fn default() -> Self {
        DetrendMethod::Dma {
            alignment: MaAlignment::Centered,
        }
    }
}

impl DetrendMethod {
    pub const DFA1: Self = DetrendMethod::Dfa { order: 1 };
    pub const DMA_CENTERED: Self = DetrendMethod::Dma {
        alignment: MaAlignment::Centered,
    };
    pub const DMA_BACKWARD: Self = DetrendMethod::Dma {
        alignment: MaAlignment::Backward,
    };

    /// Smallest scale the method can detrend.
    pub fn min_scale(&self) -> usize {
        match *self {
            DetrendMethod::Dfa { order } => order + 2,
            DetrendMethod::Dma { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DetrendMethod::Dfa { order: 0 } => {
                Err(Error::InvalidMethod("DFA order must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn validate_for_scale(&self, s: usize) -> Result<()> {
        self.validate()?;
        if s < self.min_scale() {
            return Err(Error::InvalidMethod(format!(
                "{self} needs scales of at least {}, got {s}",
                self.min_scale()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for DetrendMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetrendMethod::Dfa { order } => write!(f, "dfa{order}"),
            DetrendMethod::Dma {
                alignment: MaAlignment::Centered,
            } => f.write_str("dma-centered"),
            DetrendMethod::Dma {
                alignment: MaAlignment::Backward,
            } => f.write_str("dma-backward"),
        }
    }
}

impl FromStr for DetrendMethod {
    type Err = Error;

    /// Accepts `dfa`, `dfaN`, `dma`, `dma-centered`, `dma-backward`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let method = match lower.as_str() {
            "dma" | "dma-centered" | "dma-centred" => Self::DMA_CENTERED,
            "dma-backward" => Self::DMA_BACKWARD,
            "dfa" => Self::DFA1,
            other => match other.strip_prefix("dfa").map(str::parse::<usize>) {
                Some(Ok(order)) => DetrendMethod::Dfa { order },
                _ => return Err(Error::InvalidMethod(format!("unknown method `{s}`"))),
            },
        };
        method.validate()?;
        Ok(method)
    }
}

/// Strictly increasing list of segment lengths, counted in observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScaleGrid {
    scales: Vec<usize>,
}

impl ScaleGrid {
    pub fn new(scales: Vec<usize>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::InvalidGrid("no scales".into()));
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(
                "scales must be strictly increasing".into(),
            ));
        }
        if scales[0] < 2 {
            return Err(Error::InvalidGrid("scales must be at least 2".into()));
        }
        Ok(Self { scales })
    }

    /// `count` log-spaced integers from `min` to `max`, rounded, duplicates
    /// removed.
    pub fn log_spaced(min: usize, max: usize, count: usize) -> Result<Self> {
        if min < 2 || max < min || count == 0 {
            return Err(Error::InvalidGrid(format!(
                "cannot space {count} scales over [{min}, {max}]"
            )));
        }
        if count == 1 || min == max {
            return Self::new(vec![min]);
        }
        let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
        let mut scales: Vec<usize> = (0..count)
            .map(|i| {
                (lo + (hi - lo) * i as f64 / (count - 1) as f64)
                    .exp()
                    .round() as usize
            })
            .collect();
        scales[0] = min;
        scales[count - 1] = max;
        scales.dedup();
        Self::new(scales)
    }

    /// Default grid for a profile of length `n`: 20 log-spaced scales from 10
    /// to `min(250, n/4)`.
    pub fn default_for_length(n: usize) -> Result<Self> {
        let max = DEFAULT_MAX_SCALE.min(n / 4);
        Self::log_spaced(DEFAULT_MIN_SCALE, max, DEFAULT_GRID_POINTS)
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn min(&self) -> usize {
        self.scales[0]
    }

    pub fn max(&self) -> usize {
        *self.scales.last().unwrap()
    }

    /// Checks `s <= floor(n/2)` for every scale and the method's minimum.
    pub fn check(&self, profile_len: usize, method: &DetrendMethod) -> Result<()> {
        method.validate_for_scale(self.min())?;
        if self.max() > profile_len / 2 {
            return Err(Error::InvalidGrid(format!(
                "largest scale {} exceeds half the profile length {profile_len}",
                self.max()
            )));
        }
        Ok(())
    }

    /// Keeps the scales usable for a profile of length `n`.
    pub fn truncated(&self, profile_len: usize) -> Result<Self> {
        Self::new(
            self.scales
                .iter()
                .copied()
                .filter(|&s| s <= profile_len / 2)
                .collect(),
        )
    }
}

/// Forward tiling followed by the backward tiling: `2 * floor(n/s)` ranges.
pub fn segment_bounds(n: usize, s: usize) -> Result<Vec<Range<usize>>> {
    if s == 0 || s > n {
        return Err(Error::ScaleTooLarge { scale: s, len: n });
    }
    let count = n / s;
    let forward = (0..count).map(|k| k * s..(k + 1) * s);
    let backward = (0..count).map(|k| n - (k + 1) * s..n - k * s);
    Ok(forward.chain(backward).collect())
}

/// Orthonormal basis of polynomials of degree `<= order` sampled at `s`
/// equally spaced points; projecting onto it is the least-squares fit.
#[derive(Debug, Clone)]
struct PolyBasis {
    s: usize,
    columns: Vec<Vec<f64>>,
}

impl PolyBasis {
    fn new(s: usize, order: usize) -> Result<Self> {
        if s < order + 1 {
            return Err(Error::Singular);
        }
        let half = (s as f64 - 1.0) / 2.0;
        let scale = if half > 0.0 { half } else { 1.0 };
        let x: Vec<f64> = (0..s).map(|i| (i as f64 - half) / scale).collect();
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut v: Vec<f64> = x.iter().map(|&xi| xi.powi(k as i32)).collect();
            // two Gram-Schmidt sweeps keep the basis orthogonal to rounding
            for _ in 0..2 {
                for q in &columns {
                    let d = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= d * qi);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm < 1e-12 {
                return Err(Error::Singular);
            }
            v.iter_mut().for_each(|vi| *vi /= norm);
            columns.push(v);
        }
        Ok(Self { s, columns })
    }

    fn fit(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.s);
        let mut trend = vec![0.0; self.s];
        for q in &self.columns {
            let c = dot(q, y);
            trend.iter_mut().zip(q).for_each(|(t, qi)| *t += c * qi);
        }
        trend
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Moving average of window `s` over the whole profile, truncated at the
/// ends.
fn moving_average(y: &[f64], s: usize, alignment: MaAlignment) -> Vec<f64> {
    let n = y.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in y {
        acc += v;
        prefix.push(acc);
    }
    let (back, ahead) = match alignment {
        MaAlignment::Centered => ((s - 1) / 2, s / 2),
        MaAlignment::Backward => (s - 1, 0),
    };
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + ahead).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect()
}

/// Local trend of `profile` over `range` at scale `s`.
pub fn local_trend(
    profile: &Profile,
    range: Range<usize>,
    s: usize,
    method: &DetrendMethod,
) -> Result<Vec<f64>> {
    let y = profile.values();
    if range.end > y.len() || range.start >= range.end {
        return Err(Error::ScaleTooLarge {
            scale: range.end,
            len: y.len(),
        });
    }
    method.validate_for_scale(s)?;
    match *method {
        DetrendMethod::Dfa { order } => {
            let basis = PolyBasis::new(range.len(), order)?;
            Ok(basis.fit(&y[range]))
        }
        DetrendMethod::Dma { alignment } => Ok(moving_average(y, s, alignment)[range].to_vec()),
    }
}

/// Detrended residuals of every segment at scale `s`, concatenated in
/// [`segment_bounds`] order. Length `2 * floor(n/s) * s`.
pub(crate) fn segment_residuals(y: &[f64], s: usize, method: &DetrendMethod) -> Result<Vec<f64>> {
    method.validate_for_scale(s)?;
    let bounds = segment_bounds(y.len(), s)?;
    let mut out = Vec::with_capacity(bounds.len() * s);
    match *method {
        DetrendMethod::Dfa { order } => {
            let basis = PolyBasis::new(s, order)?;
            for r in bounds {
                let seg = &y[r];
                let trend = basis.fit(seg);
                out.extend(seg.iter().zip(&trend).map(|(v, t)| v - t));
            }
        }
        DetrendMethod::Dma { alignment } => {
            let trend = moving_average(y, s, alignment);
            for r in bounds {
                out.extend(y[r.clone()].iter().zip(&trend[r]).map(|(v, t)| v - t));
            }
        }
    }
    Ok(out)
}

/// Mean over segments of the per-segment mean product. Every segment has
/// the same length, so this is the grand mean of the products.
pub(crate) fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    dot(a, b) / a.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationPoint {
    pub scale: usize,
    pub value: f64,
    pub n_segments: usize,
}

/// `F(s)` of a single profile over a scale grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationFunction {
    pub series_id: String,
    pub method: DetrendMethod,
    pub points: Vec<FluctuationPoint>,
}

impl FluctuationFunction {
    /// Builds a fluctuation function from raw `(s, F)` pairs, e.g. for
    /// fitting externally computed curves.
    pub fn from_points(
        series_id: impl Into<String>,
        method: DetrendMethod,
        points: impl IntoIterator<Item = (usize, f64)>,
    ) -> Self {
        Self {
            series_id: series_id.into(),
            method,
            points: points
                .into_iter()
                .map(|(scale, value)| FluctuationPoint {
                    scale,
                    value,
                    n_segments: 0,
                })
                .collect(),
        }
    }

    pub fn scales(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.scale).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Two-column `s,F` table.
    pub fn to_table(&self) -> String {
        let mut out = String::from("s,F\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.scale, p.value));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn fluctuation(
    profile: &Profile,
    grid: &ScaleGrid,
    method: &DetrendMethod,
) -> Result<FluctuationFunction> {
    grid.check(profile.len(), method)?;
    let y = profile.values();
    let points = grid
        .scales()
        .par_iter()
        .map(|&s| {
            let r = segment_residuals(y, s, method)?;
            Ok(FluctuationPoint {
                scale: s,
                value: mean_product(&r, &r).sqrt(),
                n_segments: 2 * (y.len() / s),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FluctuationFunction {
        series_id: profile.parent_id.clone(),
        method: *method,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_bounds_examples() {
        assert_eq!(
            segment_bounds(10, 3).unwrap(),
            vec![0..3, 3..6, 6..9, 7..10, 4..7, 1..4]
        );
        let nine = segment_bounds(9, 3).unwrap();
        assert_eq!(nine.len(), 6);
        assert_eq!(
            nine[..3],
            nine[3..].iter().rev().cloned().collect::<Vec<_>>()[..]
        );
        assert!(segment_bounds(5, 6).is_err());
    }

    #[test]
    fn linear_profile_has_zero_dfa_trend_residual() {
        let p =
            Profile::from_values("lin", (0..40).map(|i| 3.0 - 0.5 * i as f64).collect()).unwrap();
        for r in segment_bounds(40, 8).unwrap() {
            let t = local_trend(&p, r.clone(), 8, &DetrendMethod::DFA1).unwrap();
            for (a, b) in t.iter().zip(&p.values()[r]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let grid = ScaleGrid::new(vec![4, 5, 8, 13, 20]).unwrap();
        let f = fluctuation(&p, &grid, &DetrendMethod::DFA1).unwrap();
        assert!(f.points.iter().all(|pt| pt.value < 1e-12));
    }

    #[test]
    fn constant_profile_dma_trend() {
        let p = Profile::from_values("c", vec![2.5; 12]).unwrap();
        let t = local_trend(&p, 0..12, 5, &DetrendMethod::DMA_CENTERED).unwrap();
        assert!(t.iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn backward_dma_example() {
        let p = Profile::from_values("p", vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let t = local_trend(&p, 1..4, 2, &DetrendMethod::DMA_BACKWARD).unwrap();
        assert_eq!(t, vec![0.5, 1.5, 2.5]);
    }

    #[test]
    fn centered_window_truncates_at_edges() {
        let y = [0.0, 1.0, 2.0, 3.0, 4.0];
        let t = moving_average(&y, 3, MaAlignment::Centered);
        assert_eq!(t, vec![0.5, 1.0, 2.0, 3.0, 3.5]);
        // even window reaches one further ahead
        let t = moving_average(&y, 2, MaAlignment::Centered);
        assert_eq!(t, vec![0.5, 1.5, 2.5, 3.5, 4.0]);
    }

    #[test]
    fn log_spaced_grid() {
        let g = ScaleGrid::log_spaced(10, 250, 20).unwrap();
        assert_eq!(g.min(), 10);
        assert_eq!(g.max(), 250);
        assert!(g.scales().windows(2).all(|w| w[0] < w[1]));
        // heavy rounding collisions are deduplicated
        let g = ScaleGrid::log_spaced(10, 14, 20).unwrap();
        assert_eq!(g.scales(), &[10, 11, 12, 13, 14]);
        assert!(ScaleGrid::log_spaced(1, 10, 5).is_err());
        assert!(ScaleGrid::new(vec![10, 10]).is_err());
    }

    #[test]
    fn default_grid_caps() {
        assert_eq!(ScaleGrid::default_for_length(8192).unwrap().max(), 250);
        assert_eq!(ScaleGrid::default_for_length(400).unwrap().max(), 100);
        assert!(ScaleGrid::default_for_length(30).is_err());
    }

    #[test]
    fn grid_check_rejects_oversized_and_low_order_scales() {
        let g = ScaleGrid::new(vec![3, 10]).unwrap();
        assert!(g.check(100, &DetrendMethod::DFA1).is_ok());
        assert!(g.check(100, &DetrendMethod::Dfa { order: 2 }).is_err());
        assert!(g.check(19, &DetrendMethod::DFA1).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("dfa".parse::<DetrendMethod>().unwrap(), DetrendMethod::DFA1);
        assert_eq!(
            "dfa3".parse::<DetrendMethod>().unwrap(),
            DetrendMethod::Dfa { order: 3 }
        );
        assert_eq!(
            "DMA".parse::<DetrendMethod>().unwrap(),
            DetrendMethod::DMA_CENTERED
        );
        assert_eq!(
            "dma-backward".parse::<DetrendMethod>().unwrap(),
            DetrendMethod::DMA_BACKWARD
        );
        assert!("dfa0".parse::<DetrendMethod>().is_err());
        assert!("rs".parse::<DetrendMethod>().is_err());
        for m in [
            DetrendMethod::DFA1,
            DetrendMethod::DMA_CENTERED,
            DetrendMethod::DMA_BACKWARD,
        ] {
            assert_eq!(m.to_string().parse::<DetrendMethod>().unwrap(), m);
        }
    }

    #[test]
    fn table_format() {
        let f = FluctuationFunction::from_points("x", DetrendMethod::DFA1, [(10, 1.5), (20, 2.0)]);
        assert_eq!(f.to_table(), "s,F\n10,1.5\n20,2\n");
        assert!(f.to_json().unwrap().contains("\"kind\": \"dfa\""));
    }
}
