//! Python bindings: kernels, growth fields, grids, densities and the solver.

use std::sync::Arc;

use growcoag::grid::project_initial;
use growcoag::kernels::log_sample_grid;
use growcoag::{
    DensityState, Error, GrowthField, InitialData, KernelSpec, SizeGrid, Solution, Solver, SolverConfig,
};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        Error::NonConvergence(_) | Error::Internal(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Kernel", frozen)]
struct PyKernel {
    inner: KernelSpec,
}

#[pymethods]
impl PyKernel {
    #[staticmethod]
    fn smoluchowski() -> Self {
        Self { inner: KernelSpec::smoluchowski() }
    }

    #[staticmethod]
    fn stirred_froth(theta: f64) -> PyResult<Self> {
        Ok(Self { inner: KernelSpec::stirred_froth(theta).map_err(to_py)? })
    }

    #[staticmethod]
    fn granulation(theta1: f64, theta2: f64, beta: f64) -> PyResult<Self> {
        Ok(Self { inner: KernelSpec::granulation(theta1, theta2, beta).map_err(to_py)? })
    }

    #[staticmethod]
    fn constant(kappa: f64, beta: f64) -> PyResult<Self> {
        Ok(Self { inner: KernelSpec::constant(kappa, beta).map_err(to_py)? })
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn k_env(&self) -> f64 {
        self.inner.k_env
    }

    fn __call__(&self, v1: f64, v2: f64) -> PyResult<f64> {
        self.inner.evaluate(v1, v2).map_err(to_py)
    }

    fn sup_truncated(&self, n: u32) -> f64 {
        self.inner.sup_truncated(n)
    }

    /// Returns `(ok, worst_ratio)` over a `points × points` log lattice.
    #[pyo3(signature = (points = 50, lo = 1e-4, hi = 1e4))]
    fn verify_envelope(&self, points: usize, lo: f64, hi: f64) -> PyResult<(bool, f64)> {
        if points < 2 || !(lo > 0.0 && hi > lo) {
            return Err(PyValueError::new_err("need points >= 2 and 0 < lo < hi"));
        }
        let r = self.inner.verify_envelope(&log_sample_grid(points, lo, hi));
        Ok((r.ok, r.worst_ratio))
    }

    fn __repr__(&self) -> String {
        format!("Kernel({:?}, beta={}, k={})", self.inner.family, self.inner.beta, self.inner.k_env)
    }
}

#[pyclass(name = "Growth", frozen)]
struct PyGrowth {
    inner: GrowthField,
}

#[pymethods]
impl PyGrowth {
    #[staticmethod]
    fn zero() -> Self {
        Self { inner: GrowthField::zero() }
    }

    #[staticmethod]
    #[pyo3(signature = (a, a_bound, b_bound = 1.0))]
    fn linear(a: f64, a_bound: f64, b_bound: f64) -> PyResult<Self> {
        Ok(Self { inner: GrowthField::linear(a, a_bound, b_bound).map_err(to_py)? })
    }

    #[staticmethod]
    fn saturating(a: f64, vstar: f64, a_bound: f64, b_bound: f64) -> PyResult<Self> {
        Ok(Self { inner: GrowthField::saturating(a, vstar, a_bound, b_bound).map_err(to_py)? })
    }

    fn rate(&self, t: f64, v: f64) -> f64 {
        self.inner.rate(t, v)
    }

    /// Characteristic through `(t, v)` at time `s` as `(y, jacobian)`.
    fn flow(&self, s: f64, t: f64, v: f64) -> PyResult<(f64, f64)> {
        let f = self.inner.flow(s, t, v).map_err(to_py)?;
        Ok((f.y, f.jac))
    }

    fn __repr__(&self) -> String {
        format!("Growth({:?}, A={}, B={})", self.inner.family, self.inner.a_bound, self.inner.b_bound)
    }
}

#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: Arc<SizeGrid>,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (vmin = 1e-4, vmax = 1e4, cells = 256))]
    fn new(vmin: f64, vmax: f64, cells: usize) -> PyResult<Self> {
        Ok(Self { inner: SizeGrid::shared(vmin, vmax, cells).map_err(to_py)? })
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.cells()
    }

    #[getter]
    fn edges(&self) -> Vec<f64> {
        self.inner.edges().to_vec()
    }

    #[getter]
    fn centers(&self) -> Vec<f64> {
        self.inner.centers().to_vec()
    }

    #[getter]
    fn widths(&self) -> Vec<f64> {
        self.inner.widths().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Grid({})", self.inner.descriptor())
    }
}

#[pyclass(name = "Density", frozen)]
struct PyDensity {
    inner: DensityState,
}

#[pymethods]
impl PyDensity {
    #[new]
    #[pyo3(signature = (grid, values, time = 0.0))]
    fn new(grid: &PyGrid, values: Vec<f64>, time: f64) -> PyResult<Self> {
        Ok(Self { inner: DensityState::new(grid.inner.clone(), values, time).map_err(to_py)? })
    }

    /// Cell averages of `e^{-v/scale}`.
    #[staticmethod]
    #[pyo3(signature = (grid, scale = 1.0))]
    fn exponential(grid: &PyGrid, scale: f64) -> PyResult<Self> {
        let (inner, _) = project_initial(&InitialData::Exponential { scale }, &grid.inner, 0.0).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    fn moment(&self, m: f64) -> f64 {
        self.inner.moment(m)
    }

    fn sample(&self, v: f64) -> f64 {
        self.inner.sample(v)
    }
}

#[pyclass(name = "Run", frozen)]
struct PyRun {
    inner: Solution,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.moments.rows.iter().map(|r| r.time).collect()
    }

    /// Column of the moment table: `m_neg`, `m0`, `m1`, `m2` or `weighted`.
    fn moment_series(&self, name: &str) -> PyResult<Vec<f64>> {
        let rows = &self.inner.moments.rows;
        let pick: fn(&growcoag::solver::MomentRow) -> f64 = match name {
            "m_neg" => |r| r.m_neg,
            "m0" => |r| r.m0,
            "m1" => |r| r.m1,
            "m2" => |r| r.m2,
            "weighted" => |r| r.weighted,
            other => return Err(PyValueError::new_err(format!("unknown moment '{other}'"))),
        };
        Ok(rows.iter().map(pick).collect())
    }

    #[getter]
    fn outputs(&self) -> Vec<PyDensity> {
        self.inner.outputs.iter().map(|s| PyDensity { inner: s.clone() }).collect()
    }

    #[getter]
    fn windows(&self) -> usize {
        self.inner.steps.len()
    }

    #[getter]
    fn max_contraction_ratio(&self) -> f64 {
        self.inner.max_contraction_ratio()
    }

    #[getter]
    fn overflow(&self) -> f64 {
        self.inner.overflow
    }

    #[getter]
    fn violations(&self) -> Vec<String> {
        self.inner.moments.checks.violations()
    }

    fn moments_csv(&self) -> String {
        self.inner.moments.to_csv()
    }
}

#[pyfunction]
#[pyo3(signature = (kernel, n, m0, cap = None))]
fn window_length(kernel: &PyKernel, n: u32, m0: f64, cap: Option<f64>) -> PyResult<f64> {
    let truncated = kernel.inner.truncate(n).map_err(to_py)?;
    Ok(growcoag::window_length(&truncated, m0, cap))
}

#[pyfunction]
#[pyo3(signature = (
    kernel, growth, initial, n = 8, t_final = 1.0, substeps = 8, picard_tol = 1e-10,
    picard_max_iters = 60, window_cap = Some(0.1), moment_beta = None, output_times = None,
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    kernel: &PyKernel,
    growth: &PyGrowth,
    initial: &PyDensity,
    n: u32,
    t_final: f64,
    substeps: usize,
    picard_tol: f64,
    picard_max_iters: usize,
    window_cap: Option<f64>,
    moment_beta: Option<f64>,
    output_times: Option<Vec<f64>>,
) -> PyResult<PyRun> {
    let cfg = SolverConfig {
        n,
        substeps,
        picard_tol,
        picard_max_iters,
        t_final,
        window_cap,
        moment_beta,
        output_times: output_times.unwrap_or_default(),
    };
    let grid = initial.inner.grid().clone();
    let solver = Solver::new(cfg, &kernel.inner, growth.inner.clone(), grid).map_err(to_py)?;
    let c0 = &initial.inner;
    let inner = py.detach(|| solver.solve(c0)).map_err(to_py)?;
    Ok(PyRun { inner })
}

#[pymodule]
fn growcoag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyGrowth>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyDensity>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(window_length, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
