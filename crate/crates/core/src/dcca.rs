//! Detrended cross-correlation between aligned series.
//!
//! Both members of a pair are segmented identically and detrended with the
//! same method. The cross variance `F²_DCCA(s)` is the mean over segments of
//! the mean product of the two residuals and is kept signed (no root), so
//!
//! ```text
//! rho(s) = F²_DCCA(s) / (F_a(s) * F_b(s))
//! ```
//!
//! can be negative. The auto fluctuations in the denominator are the usual
//! roots.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::{mean_product, segment_residuals, DetrendMethod, ScaleGrid};
use crate::series::{series_profile, Profile, RatePanel, TimeSeries};

/// Overshoot past ±1 that is attributed to rounding and clamped.
pub const RHO_CLAMP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFluctuation {
    pub pair: (String, String),
    pub method: DetrendMethod,
    /// `(s, signed F²_DCCA(s))`.
    pub points: Vec<(usize, f64)>,
}

pub fn cross_fluctuation(
    pa: &Profile,
    pb: &Profile,
    grid: &ScaleGrid,
    method: &DetrendMethod,
) -> Result<CrossFluctuation> {
    if pa.len() != pb.len() {
        return Err(Error::LengthMismatch(pa.len(), pb.len()));
    }
    grid.check(pa.len(), method)?;
    let points = grid
        .scales()
        .par_iter()
        .map(|&s| {
            let ra = segment_residuals(pa.values(), s, method)?;
            let rb = segment_residuals(pb.values(), s, method)?;
            Ok((s, mean_product(&ra, &rb)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossFluctuation {
        pair: (pa.parent_id.clone(), pb.parent_id.clone()),
        method: *method,
        points,
    })
}

/// Ratio of the cross variance to the product of the auto fluctuations,
/// clamped only for rounding-sized overshoot.
fn ratio(cross: f64, var_a: f64, var_b: f64) -> Result<f64> {
    let rho = cross / (var_a * var_b).sqrt();
    if rho.abs() <= 1.0 {
        Ok(rho)
    } else if rho.abs() <= 1.0 + RHO_CLAMP_TOL {
        Ok(rho.signum())
    } else {
        Err(Error::RhoOutOfBounds(rho))
    }
}

/// Residual bundle of one profile at one scale.
struct Detrended {
    residuals: Vec<f64>,
    variance: f64,
}

fn detrend(p: &Profile, s: usize, method: &DetrendMethod) -> Result<Detrended> {
    let residuals = segment_residuals(p.values(), s, method)?;
    let variance = mean_product(&residuals, &residuals);
    Ok(Detrended {
        residuals,
        variance,
    })
}

/// `rho_DCCA` at scale `s` computed directly on two profiles.
pub fn rho_from_profiles(
    pa: &Profile,
    pb: &Profile,
    s: usize,
    method: &DetrendMethod,
) -> Result<f64> {
    if pa.len() != pb.len() {
        return Err(Error::LengthMismatch(pa.len(), pb.len()));
    }
    ScaleGrid::new(vec![s])?.check(pa.len(), method)?;
    let a = detrend(pa, s, method)?;
    let b = detrend(pb, s, method)?;
    let degenerate: Vec<String> = [(&a, pa), (&b, pb)]
        .iter()
        .filter(|(d, _)| d.variance <= 0.0)
        .map(|(_, p)| p.parent_id.clone())
        .collect();
    if !degenerate.is_empty() {
        return Err(Error::Degenerate(degenerate));
    }
    ratio(
        mean_product(&a.residuals, &b.residuals),
        a.variance,
        b.variance,
    )
}

fn check_aligned(a: &TimeSeries, b: &TimeSeries) -> Result<()> {
    if a.dates() != b.dates() {
        return Err(Error::NotAligned);
    }
    Ok(())
}

pub fn rho_dcca(a: &TimeSeries, b: &TimeSeries, s: usize, method: &DetrendMethod) -> Result<f64> {
    check_aligned(a, b)?;
    rho_from_profiles(&series_profile(a)?, &series_profile(b)?, s, method)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoCurve {
    pub pair: (String, String),
    pub method: DetrendMethod,
    pub points: Vec<(usize, f64)>,
}

impl RhoCurve {
    /// `s,rho` rows.
    pub fn to_table(&self) -> String {
        let mut out = String::from("s,rho\n");
        for (s, r) in &self.points {
            out.push_str(&format!("{s},{r}\n"));
        }
        out
    }
}

/// Default grid for rho curves: 30 log-spaced scales from 5 to
/// `min(500, n/2)`.
pub fn default_curve_grid(profile_len: usize) -> Result<ScaleGrid> {
    ScaleGrid::log_spaced(5, 500.min(profile_len / 2), 30)
}

pub fn rho_vs_scale(
    a: &TimeSeries,
    b: &TimeSeries,
    grid: &ScaleGrid,
    method: &DetrendMethod,
) -> Result<RhoCurve> {
    check_aligned(a, b)?;
    let pa = series_profile(a)?;
    let pb = series_profile(b)?;
    grid.check(pa.len(), method)?;
    let points = grid
        .scales()
        .par_iter()
        .map(|&s| rho_from_profiles(&pa, &pb, s, method).map(|r| (s, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RhoCurve {
        pair: (a.id().to_string(), b.id().to_string()),
        method: *method,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccaMatrix {
    pub ids: Vec<String>,
    pub scale: usize,
    pub method: DetrendMethod,
    /// Row-major, `ids.len()` square.
    pub rho: Vec<Vec<f64>>,
}

impl DccaMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rho[i][j]
    }

    /// Square table with the ids as header row and first column.
    pub fn to_table(&self) -> String {
        let mut out = String::from("id");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.rho) {
            out.push_str(id);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `rho_DCCA` for every unordered pair of an aligned panel at one scale.
/// Each member is detrended once; degenerate members abort the computation
/// and are all named in the error.
pub fn pairwise_matrix(panel: &RatePanel, s: usize, method: &DetrendMethod) -> Result<DccaMatrix> {
    if panel.n_series() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 series, panel has {}",
            panel.n_series()
        )));
    }
    let series = panel.all_series()?;
    let profiles = series
        .iter()
        .map(series_profile)
        .collect::<Result<Vec<_>>>()?;
    ScaleGrid::new(vec![s])?.check(profiles[0].len(), method)?;
    let detrended = profiles
        .par_iter()
        .map(|p| detrend(p, s, method))
        .collect::<Result<Vec<_>>>()?;
    let degenerate: Vec<String> = detrended
        .iter()
        .zip(&profiles)
        .filter(|(d, _)| d.variance <= 0.0)
        .map(|(_, p)| p.parent_id.clone())
        .collect();
    if !degenerate.is_empty() {
        return Err(Error::Degenerate(degenerate));
    }

    let n = profiles.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&detrended[i], &detrended[j]);
            ratio(
                mean_product(&a.residuals, &b.residuals),
                a.variance,
                b.variance,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rho = vec![vec![0.0; n]; n];
    for (i, row) in rho.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for (&(i, j), v) in pairs.iter().zip(values) {
        rho[i][j] = v;
        rho[j][i] = v;
    }
    Ok(DccaMatrix {
        ids: profiles.into_iter().map(|p| p.parent_id).collect(),
        scale: s,
        method: *method,
        rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::fluctuation;
    use crate::synthetic::{business_days, fgn_panel, synthetic_start};

    fn wiggle(n: usize, phase: f64) -> Profile {
        Profile::from_values(
            "w",
            (0..n)
                .map(|i| ((i as f64) * 0.37 + phase).sin() * (1.0 + i as f64 * 0.01))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn self_pair_matches_auto_variance() {
        let p = wiggle(200, 0.0);
        let grid = ScaleGrid::new(vec![5, 10, 20, 50]).unwrap();
        for m in [DetrendMethod::DFA1, DetrendMethod::DMA_CENTERED] {
            let c = cross_fluctuation(&p, &p, &grid, &m).unwrap();
            let f = fluctuation(&p, &grid, &m).unwrap();
            for ((_, c2), fp) in c.points.iter().zip(&f.points) {
                assert!((c2 - fp.value * fp.value).abs() <= 1e-12 * c2.abs());
            }
            let neg = p.map(|_, v| -v).unwrap();
            let c = cross_fluctuation(&p, &neg, &grid, &m).unwrap();
            for ((_, c2), fp) in c.points.iter().zip(&f.points) {
                assert!((c2 + fp.value * fp.value).abs() <= 1e-12 * c2.abs());
            }
        }
    }

    #[test]
    fn rho_identities_on_profiles() {
        let p = wiggle(300, 0.3);
        let neg = p.map(|_, v| -v).unwrap();
        let scaled = p.map(|_, v| 7.5 * v).unwrap();
        for m in [
            DetrendMethod::DFA1,
            DetrendMethod::DMA_CENTERED,
            DetrendMethod::DMA_BACKWARD,
        ] {
            for s in [5, 17, 60] {
                assert!((rho_from_profiles(&p, &p, s, &m).unwrap() - 1.0).abs() < 1e-12);
                assert!((rho_from_profiles(&p, &neg, s, &m).unwrap() + 1.0).abs() < 1e-12);
                assert!((rho_from_profiles(&p, &scaled, s, &m).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_in_pair_order() {
        let a = wiggle(256, 0.0);
        let b = wiggle(256, 1.1);
        let grid = ScaleGrid::new(vec![8, 16, 32]).unwrap();
        let ab = cross_fluctuation(&a, &b, &grid, &DetrendMethod::DFA1).unwrap();
        let ba = cross_fluctuation(&b, &a, &grid, &DetrendMethod::DFA1).unwrap();
        assert_eq!(ab.points, ba.points);
        assert_eq!(
            rho_from_profiles(&a, &b, 16, &DetrendMethod::DMA_CENTERED).unwrap(),
            rho_from_profiles(&b, &a, 16, &DetrendMethod::DMA_CENTERED).unwrap()
        );
    }

    #[test]
    fn length_mismatch_and_degenerate() {
        let a = wiggle(100, 0.0);
        let b = wiggle(90, 0.0);
        assert!(matches!(
            rho_from_profiles(&a, &b, 10, &DetrendMethod::DFA1),
            Err(Error::LengthMismatch(100, 90))
        ));
        let flat = Profile::from_values("flat", vec![0.0; 100]).unwrap();
        match rho_from_profiles(&a, &flat, 10, &DetrendMethod::DFA1) {
            Err(Error::Degenerate(ids)) => assert_eq!(ids, vec!["flat".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_series_named_in_matrix_error() {
        let mut panel = fgn_panel(3, 512, 0.6, 9).unwrap();
        let dates = business_days(synthetic_start(), 513);
        let constant = TimeSeries::new("flatline", dates, vec![2.0; 513]).unwrap();
        let mut series = panel.all_series().unwrap();
        series.push(constant);
        panel = RatePanel::from_series(series).unwrap();
        match pairwise_matrix(&panel, 50, &DetrendMethod::DMA_CENTERED) {
            Err(Error::Degenerate(ids)) => assert_eq!(ids, vec!["flatline".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
        let s = panel.series("flatline").unwrap();
        let t = panel.series("fgn00").unwrap();
        let err = rho_dcca(&t, &s, 20, &DetrendMethod::DFA1).unwrap_err();
        assert!(err.to_string().contains("flatline"));
    }

    #[test]
    fn matrix_of_identical_series() {
        let panel = fgn_panel(1, 600, 0.7, 2).unwrap();
        let s = panel.all_series().unwrap().remove(0);
        let twin = s.clone().with_id("twin");
        let panel = RatePanel::from_series(vec![s, twin]).unwrap();
        let m = pairwise_matrix(&panel, 50, &DetrendMethod::DFA1).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.get(i, j) - 1.0).abs() < 1e-12);
            }
        }
        assert!(m.to_table().starts_with("id,fgn00,twin\nfgn00,1,"));
    }

    #[test]
    fn identical_pair_curve_is_flat() {
        let panel = fgn_panel(1, 1200, 0.7, 4).unwrap();
        let s = panel.all_series().unwrap().remove(0);
        let grid = default_curve_grid(1200).unwrap();
        assert_eq!(grid.min(), 5);
        assert_eq!(grid.max(), 500);
        let c = rho_vs_scale(&s, &s, &grid, &DetrendMethod::DMA_CENTERED).unwrap();
        assert!(c.points.iter().all(|(_, r)| (r - 1.0).abs() < 1e-12));
        assert!(c.to_table().starts_with("s,rho\n5,"));
    }

    #[test]
    fn unaligned_pair_rejected() {
        let panel = fgn_panel(2, 100, 0.5, 4).unwrap();
        let a = panel.series("fgn00").unwrap();
        let b = panel
            .restrict(panel.dates()[1], panel.dates()[100])
            .series("fgn01")
            .unwrap();
        assert!(matches!(
            rho_dcca(&a, &b, 10, &DetrendMethod::DFA1),
            Err(Error::NotAligned)
        ));
    }
}
