//! Direct transcriptions of the estimator definitions, kept deliberately
//! naive: explicit windows, per-segment loops, normal equations.

#![allow(dead_code, clippy::needless_range_loop)]

use longmem_core::scaling::{DetrendMethod, MaAlignment};
use longmem_core::series::Profile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Least squares by explicit normal equations on abscissa 1..=s, solved
/// with Gaussian elimination.
pub fn naive_poly_trend(y: &[f64], order: usize) -> Vec<f64> {
    let k = order + 1;
    let mut a = vec![vec![0.0; k + 1]; k];
    for (idx, &yi) in y.iter().enumerate() {
        let t = (idx + 1) as f64;
        for r in 0..k {
            for c in 0..k {
                a[r][c] += t.powi((r + c) as i32);
            }
            a[r][k] += yi * t.powi(r as i32);
        }
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        for row in 0..k {
            if row != col {
                let f = a[row][col] / a[col][col];
                for c in col..=k {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..k).map(|r| a[r][k] / a[r][r]).collect();
    (0..y.len())
        .map(|idx| {
            let t = (idx + 1) as f64;
            coef.iter()
                .enumerate()
                .map(|(p, c)| c * t.powi(p as i32))
                .sum()
        })
        .collect()
}

pub fn naive_ma(y: &[f64], s: usize, alignment: MaAlignment) -> Vec<f64> {
    let n = y.len() as isize;
    (0..n)
        .map(|i| {
            let (lo, hi) = match alignment {
                MaAlignment::Centered => (i - (s as isize - 1) / 2, i + s as isize / 2),
                MaAlignment::Backward => (i - s as isize + 1, i),
            };
            let (lo, hi) = (lo.max(0), hi.min(n - 1));
            let mut sum = 0.0;
            for j in lo..=hi {
                sum += y[j as usize];
            }
            sum / (hi - lo + 1) as f64
        })
        .collect()
}

/// Per-segment residual vectors, in the segment order of the definition:
/// forward tiling then backward tiling.
pub fn naive_residuals(y: &[f64], s: usize, method: DetrendMethod) -> Vec<Vec<f64>> {
    let n = y.len();
    let ns = n / s;
    let mut ranges: Vec<(usize, usize)> = (0..ns).map(|v| (v * s, v * s + s)).collect();
    ranges.extend((0..ns).map(|v| (n - (v + 1) * s, n - v * s)));
    let whole_ma = match method {
        DetrendMethod::Dma { alignment } => Some(naive_ma(y, s, alignment)),
        DetrendMethod::Dfa { .. } => None,
    };
    ranges
        .into_iter()
        .map(|(a, b)| {
            let seg = &y[a..b];
            let trend = match method {
                DetrendMethod::Dfa { order } => naive_poly_trend(seg, order),
                DetrendMethod::Dma { .. } => whole_ma.as_ref().unwrap()[a..b].to_vec(),
            };
            seg.iter().zip(&trend).map(|(v, t)| v - t).collect()
        })
        .collect()
}

pub fn naive_f2(ra: &[Vec<f64>], rb: &[Vec<f64>]) -> f64 {
    let per_segment: Vec<f64> = ra
        .iter()
        .zip(rb)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64)
        .collect();
    per_segment.iter().sum::<f64>() / per_segment.len() as f64
}

pub fn naive_fluctuation(y: &[f64], s: usize, method: DetrendMethod) -> f64 {
    let r = naive_residuals(y, s, method);
    naive_f2(&r, &r).sqrt()
}

pub fn naive_rho(a: &[f64], b: &[f64], s: usize, method: DetrendMethod) -> f64 {
    let ra = naive_residuals(a, s, method);
    let rb = naive_residuals(b, s, method);
    naive_f2(&ra, &rb) / (naive_f2(&ra, &ra).sqrt() * naive_f2(&rb, &rb).sqrt())
}

pub fn random_profile(id: &str, n: usize, seed: u64) -> Profile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut acc = 0.0;
    let y = x
        .iter()
        .map(|v| {
            acc += v - mean;
            acc
        })
        .collect();
    Profile::from_values(id, y).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub const METHODS: [DetrendMethod; 4] = [
    DetrendMethod::DFA1,
    DetrendMethod::Dfa { order: 2 },
    DetrendMethod::DMA_CENTERED,
    DetrendMethod::DMA_BACKWARD,
];
