//! Long-memory analysis of dated series panels: detrended fluctuation and
//! moving-average analysis, Hurst exponents and crossovers, detrended
//! cross-correlation (`rho_DCCA`), and thresholded correlation networks with
//! modularity communities. Exact fractional Gaussian noise generators supply
//! ground truth for all of it.

pub mod dcca;
pub mod error;
pub mod hurst;
pub mod network;
pub mod scaling;
pub mod series;
pub mod synthetic;

pub use error::{Error, Result};
pub use scaling::{DetrendMethod, MaAlignment, ScaleGrid};
pub use series::{RatePanel, TimeSeries};
