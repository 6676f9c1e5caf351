//! Python bindings. Level series cross the boundary as plain float lists;
//! panels, matrices, networks and partitions are wrapped objects.

use longmem_core::dcca::{self, DccaMatrix};
use longmem_core::hurst::{self, CrossoverConfig, DistributionOptions};
use longmem_core::network::{self, CommunityPartition, CorrelationNetwork};
use longmem_core::scaling::{self, FluctuationFunction};
use longmem_core::series::{self, AlignPolicy, IngestConfig};
use longmem_core::synthetic::{self, BlockSpec, FgnSpec};
use longmem_core::{DetrendMethod, Error, RatePanel, ScaleGrid, TimeSeries};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for Result<T, Error> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn method(name: &str) -> PyResult<DetrendMethod> {
    name.parse().py()
}

/// Undated values get consecutive business days, which only matters for
/// alignment and is irrelevant to the estimators.
fn series(id: &str, values: Vec<f64>) -> PyResult<TimeSeries> {
    let dates = synthetic::business_days(synthetic::synthetic_start(), values.len());
    TimeSeries::new(id, dates, values).py()
}

fn grid_for(len: usize, scales: Option<Vec<usize>>) -> PyResult<ScaleGrid> {
    match scales {
        Some(s) => ScaleGrid::new(s).py(),
        None => ScaleGrid::default_for_length(len).py(),
    }
}

/// Fractional Gaussian noise of length `n`.
#[pyfunction]
#[pyo3(signature = (n, hurst, seed, sigma = 1.0))]
fn fgn(n: usize, hurst: f64, seed: u64, sigma: f64) -> PyResult<Vec<f64>> {
    synthetic::fgn_noise(&FgnSpec {
        n,
        hurst,
        seed,
        sigma,
    })
    .py()
}

/// Level series of `n + 1` values whose absolute increments carry fGn
/// correlations.
#[pyfunction]
fn fgn_levels(n: usize, hurst: f64, seed: u64) -> PyResult<Vec<f64>> {
    Ok(synthetic::generate_fgn(&FgnSpec::new(n, hurst, seed))
        .py()?
        .values()
        .to_vec())
}

/// Mean-centred cumulative sum of absolute increments.
#[pyfunction]
fn profile(levels: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(series::series_profile(&series("x", levels)?)
        .py()?
        .values()
        .to_vec())
}

#[pyclass(name = "FluctuationFunction", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFluctuation {
    inner: FluctuationFunction,
}

#[pymethods]
impl PyFluctuation {
    #[getter]
    fn scales(&self) -> Vec<usize> {
        self.inner.scales()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values()
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    /// Log-log fit over the inclusive scale range, or all scales.
    #[pyo3(signature = (fit_range = None))]
    fn fit(&self, fit_range: Option<(usize, usize)>) -> PyResult<PyHurst> {
        Ok(PyHurst::from(
            hurst::fit_hurst(&self.inner, fit_range).py()?,
        ))
    }

    #[pyo3(signature = (min_side_points = 3, min_improvement = 0.5))]
    fn crossover(&self, min_side_points: usize, min_improvement: f64) -> PyResult<PyCrossover> {
        let config = CrossoverConfig {
            min_side_points,
            min_improvement,
        };
        let r = hurst::detect_crossover(&self.inner, &config).py()?;
        Ok(PyCrossover {
            breakpoint: r.breakpoint_scale,
            slope_left: r.slope_left,
            slope_right: r.slope_right,
            improvement: r.improvement_ratio,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.points.len()
    }
}

/// Fluctuation function of a level series.
#[pyfunction]
#[pyo3(signature = (levels, scales = None, method = "dma-centered"))]
fn fluctuation(
    levels: Vec<f64>,
    scales: Option<Vec<usize>>,
    method: &str,
) -> PyResult<PyFluctuation> {
    let m = self::method(method)?;
    let p = series::series_profile(&series("x", levels)?).py()?;
    let grid = grid_for(p.len(), scales)?;
    Ok(PyFluctuation {
        inner: scaling::fluctuation(&p, &grid, &m).py()?,
    })
}

/// Fluctuation function from given `(scale, F)` points.
#[pyfunction]
#[pyo3(signature = (scales, values, method = "dma-centered"))]
fn fluctuation_from_points(
    scales: Vec<usize>,
    values: Vec<f64>,
    method: &str,
) -> PyResult<PyFluctuation> {
    if scales.len() != values.len() {
        return Err(py_err(Error::LengthMismatch(scales.len(), values.len())));
    }
    Ok(PyFluctuation {
        inner: FluctuationFunction::from_points(
            "x",
            self::method(method)?,
            scales.into_iter().zip(values),
        ),
    })
}

#[pyclass(name = "HurstEstimate", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyHurst {
    series_id: String,
    hurst: f64,
    intercept: f64,
    r_squared: f64,
    stderr: f64,
    fit_range: (usize, usize),
    n_points: usize,
    n_excluded_zero: usize,
}

impl From<hurst::HurstEstimate> for PyHurst {
    fn from(e: hurst::HurstEstimate) -> Self {
        Self {
            series_id: e.series_id,
            hurst: e.hurst,
            intercept: e.intercept,
            r_squared: e.r_squared,
            stderr: e.stderr,
            fit_range: e.fit_range,
            n_points: e.n_points,
            n_excluded_zero: e.n_excluded_zero,
        }
    }
}

#[pymethods]
impl PyHurst {
    fn __repr__(&self) -> String {
        format!(
            "HurstEstimate(id={:?}, H={:.4}, stderr={:.4})",
            self.series_id, self.hurst, self.stderr
        )
    }
}

#[pyclass(name = "Crossover", frozen, get_all, skip_from_py_object)]
struct PyCrossover {
    breakpoint: Option<usize>,
    slope_left: f64,
    slope_right: f64,
    improvement: f64,
}

/// Hurst exponent of a level series.
#[pyfunction]
#[pyo3(signature = (levels, method = "dma-centered", scales = None, fit_range = Some((0, 250))))]
fn hurst_exponent(
    levels: Vec<f64>,
    method: &str,
    scales: Option<Vec<usize>>,
    fit_range: Option<(usize, usize)>,
) -> PyResult<PyHurst> {
    fluctuation(levels, scales, method)?.fit(fit_range)
}

/// `rho_DCCA` of two equally long level series at one scale.
#[pyfunction]
#[pyo3(signature = (a, b, scale, method = "dma-centered"))]
fn rho_dcca(a: Vec<f64>, b: Vec<f64>, scale: usize, method: &str) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(py_err(Error::LengthMismatch(a.len(), b.len())));
    }
    dcca::rho_dcca(
        &series("a", a)?,
        &series("b", b)?,
        scale,
        &self::method(method)?,
    )
    .py()
}

/// `(scale, rho)` pairs over a grid, by default 5..500.
#[pyfunction]
#[pyo3(signature = (a, b, scales = None, method = "dma-centered"))]
fn rho_curve(
    a: Vec<f64>,
    b: Vec<f64>,
    scales: Option<Vec<usize>>,
    method: &str,
) -> PyResult<Vec<(usize, f64)>> {
    let (sa, sb) = (series("a", a)?, series("b", b)?);
    let grid = match scales {
        Some(s) => ScaleGrid::new(s).py()?,
        None => dcca::default_curve_grid(sa.len().saturating_sub(1)).py()?,
    };
    Ok(dcca::rho_vs_scale(&sa, &sb, &grid, &self::method(method)?)
        .py()?
        .points)
}

#[pyclass(name = "Panel", frozen, skip_from_py_object)]
struct PyPanel {
    inner: RatePanel,
}

fn parse_align(align: &str) -> PyResult<AlignPolicy> {
    match align.split_once(':') {
        None if align == "intersect" => Ok(AlignPolicy::Intersect),
        Some(("ffill", gap)) => gap
            .parse()
            .map(|max_gap| AlignPolicy::ForwardFill { max_gap })
            .map_err(|_| PyValueError::new_err(format!("invalid gap `{gap}`"))),
        _ => Err(PyValueError::new_err(format!(
            "expected `intersect` or `ffill:N`, got `{align}`"
        ))),
    }
}

#[pymethods]
impl PyPanel {
    /// Reads a panel CSV and aligns it.
    #[staticmethod]
    #[pyo3(signature = (path, align = "intersect", delimiter = ","))]
    fn load(path: &str, align: &str, delimiter: &str) -> PyResult<Self> {
        let delimiter = match delimiter.as_bytes() {
            [d] => *d,
            _ => return Err(PyValueError::new_err("delimiter must be one byte")),
        };
        let panel = series::load_panel(path, &IngestConfig { delimiter }).py()?;
        Ok(Self {
            inner: series::align(&panel, parse_align(align)?).py()?,
        })
    }

    #[staticmethod]
    fn synth_fgn(count: usize, n: usize, hurst: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: synthetic::fgn_panel(count, n, hurst, seed).py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n_blocks = 3, block_size = 5, common_weight = 0.9, hurst = 0.8, n = 8192, seed = 0))]
    fn synth_blocks(
        n_blocks: usize,
        block_size: usize,
        common_weight: f64,
        hurst: f64,
        n: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = BlockSpec {
            n_blocks,
            block_size,
            common_weight,
            hurst,
            n,
            seed,
        };
        Ok(Self {
            inner: synthetic::generate_blocks(&spec).py()?,
        })
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids().into_iter().map(String::from).collect()
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        self.inner.dates().iter().map(|d| d.to_string()).collect()
    }

    fn values(&self, id: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.series(id).py()?.values().to_vec())
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        series::write_panel(&self.inner, std::io::BufWriter::new(file)).py()
    }

    /// Inclusive date window, dates as `YYYY-MM-DD`.
    fn restrict(&self, start: &str, end: &str) -> PyResult<Self> {
        let parse = |s: &str| {
            chrono::NaiveDate::parse_from_str(s, series::DATE_FORMAT)
                .map_err(|e| PyValueError::new_err(format!("bad date `{s}`: {e}")))
        };
        let mut parts =
            network::split_periods(&self.inner, &[(parse(start)?, parse(end)?)]).py()?;
        Ok(Self {
            inner: parts.remove(0),
        })
    }

    /// Estimates per member, `(id, reason)` failures and the histogram as
    /// `(low, high, count)` rows.
    #[pyo3(signature = (method = "dma-centered", fit_range = Some((0, 250)), bin_width = 0.02))]
    #[allow(clippy::type_complexity)]
    fn hurst_distribution(
        &self,
        method: &str,
        fit_range: Option<(usize, usize)>,
        bin_width: f64,
    ) -> PyResult<(Vec<PyHurst>, Vec<(String, String)>, Vec<(f64, f64, usize)>)> {
        let options = DistributionOptions {
            method: self::method(method)?,
            grid: None,
            fit_range,
            bin_width,
        };
        let d = hurst::hurst_distribution(&self.inner, &options).py()?;
        Ok((
            d.estimates.into_iter().map(PyHurst::from).collect(),
            d.failures
                .into_iter()
                .map(|f| (f.series_id, f.reason))
                .collect(),
            d.histogram
                .into_iter()
                .map(|b| (b.low, b.high, b.count))
                .collect(),
        ))
    }

    #[pyo3(signature = (scale, method = "dma-centered"))]
    fn matrix(&self, scale: usize, method: &str) -> PyResult<PyMatrix> {
        Ok(PyMatrix {
            inner: dcca::pairwise_matrix(&self.inner, scale, &self::method(method)?).py()?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.n_series()
    }
}

#[pyclass(name = "DccaMatrix", frozen, skip_from_py_object)]
struct PyMatrix {
    inner: DccaMatrix,
}

#[pymethods]
impl PyMatrix {
    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids.clone()
    }

    #[getter]
    fn scale(&self) -> usize {
        self.inner.scale
    }

    #[getter]
    fn rho(&self) -> Vec<Vec<f64>> {
        self.inner.rho.clone()
    }

    fn to_csv(&self) -> String {
        self.inner.to_table()
    }

    #[pyo3(signature = (threshold = 0.8))]
    fn network(&self, threshold: f64) -> PyResult<PyNetwork> {
        Ok(PyNetwork {
            inner: network::build_network(&self.inner, threshold).py()?,
        })
    }
}

#[pyclass(name = "Network", frozen, skip_from_py_object)]
struct PyNetwork {
    inner: CorrelationNetwork,
}

#[pymethods]
impl PyNetwork {
    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.inner.nodes.clone()
    }

    /// `(id_a, id_b, rho)` triples.
    #[getter]
    fn edges(&self) -> Vec<(String, String, f64)> {
        let n = &self.inner.nodes;
        self.inner
            .edges
            .iter()
            .map(|e| (n[e.a].clone(), n[e.b].clone(), e.weight))
            .collect()
    }

    fn average_weighted_degree(&self) -> f64 {
        network::average_weighted_degree(&self.inner)
    }

    #[pyo3(signature = (resolution = 1.0, seed = 0))]
    fn communities(&self, resolution: f64, seed: u64) -> PyResult<PyPartition> {
        Ok(PyPartition {
            inner: network::detect_communities(&self.inner, resolution, seed).py()?,
        })
    }

    #[pyo3(signature = (partition = None))]
    fn to_graphml(&self, partition: Option<&PyPartition>) -> String {
        network::to_graphml(&self.inner, partition.map(|p| &p.inner))
    }

    #[pyo3(signature = (partition = None))]
    fn to_dot(&self, partition: Option<&PyPartition>) -> String {
        network::to_dot(&self.inner, partition.map(|p| &p.inner))
    }
}

#[pyclass(name = "Partition", frozen, skip_from_py_object)]
struct PyPartition {
    inner: CommunityPartition,
}

#[pymethods]
impl PyPartition {
    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn modularity(&self) -> f64 {
        self.inner.modularity_q
    }

    fn communities(&self) -> Vec<Vec<String>> {
        self.inner
            .communities()
            .into_iter()
            .map(|c| c.into_iter().map(String::from).collect())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n_communities()
    }
}

/// Long-range correlation estimators and correlation networks.
#[pymodule]
fn longmem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(fgn, m)?)?;
    m.add_function(wrap_pyfunction!(fgn_levels, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(fluctuation, m)?)?;
    m.add_function(wrap_pyfunction!(fluctuation_from_points, m)?)?;
    m.add_function(wrap_pyfunction!(hurst_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(rho_dcca, m)?)?;
    m.add_function(wrap_pyfunction!(rho_curve, m)?)?;
    m.add_class::<PyFluctuation>()?;
    m.add_class::<PyHurst>()?;
    m.add_class::<PyCrossover>()?;
    m.add_class::<PyPanel>()?;
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyPartition>()?;
    Ok(())
}
