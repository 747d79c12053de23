//! Python module `mixtype`: grids, fields, coefficient checks, the linear
//! solver, the energy certificate and the nonlinear iterations.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mixtype::coeffs::{check_alpha, check_condition7, CoefficientSet, ConditionReport, Preset};
use mixtype::multiplier::{boundary_form_report, build_abc, interior_form_report, FormReport};
use mixtype::nonlinear::{
    solve_darboux, solve_prescribed_curvature, Equation, ManufacturedSurface, MetricData,
    NonlinearParams,
};
use mixtype::norms::{negative_norm, sobolev_norm};
use mixtype::solver::{
    adjoint_samples, energy_certificate, mms_convergence, solve_linear_with, LinearProblem,
    Manufactured, SolveOptions,
};
use mixtype::{make_grid, Field, GridSpec, NormOrder};

create_exception!(mixtype, MixtypeError, PyException);

fn py_err(e: mixtype::Error) -> PyErr {
    MixtypeError::new_err(e.to_string())
}

/// Periodic-in-x grid on `[-1, 1]²` with `nx` columns and `ny` intervals in y.
#[pyclass(name = "Grid", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyGrid(GridSpec);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(nx: usize, ny: usize) -> PyResult<Self> {
        make_grid(nx, ny).map(Self).map_err(py_err)
    }

    #[getter]
    fn nx(&self) -> usize {
        self.0.nx()
    }

    #[getter]
    fn ny(&self) -> usize {
        self.0.ny()
    }

    #[getter]
    fn hx(&self) -> f64 {
        self.0.hx()
    }

    #[getter]
    fn hy(&self) -> f64 {
        self.0.hy()
    }

    fn x_nodes(&self) -> Vec<f64> {
        (0..self.0.nx()).map(|i| self.0.x(i)).collect()
    }

    fn y_nodes(&self) -> Vec<f64> {
        (0..self.0.rows()).map(|j| self.0.y(j)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Grid(nx={}, ny={})", self.0.nx(), self.0.ny())
    }
}

/// Nodal values, stored row by row from `y = -1` to `y = 1`.
#[pyclass(name = "Field", from_py_object)]
#[derive(Clone)]
pub struct PyField(Field);

#[pymethods]
impl PyField {
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        Field::from_values(grid.0, values).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn zeros(grid: &PyGrid) -> Self {
        Self(Field::zeros(grid.0))
    }

    /// Parses the `# nx=.. ny=..` CSV format written by `to_csv`.
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Field::read_csv(text.as_bytes()).map(Self).map_err(py_err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn at(&self, i: usize, j: usize) -> PyResult<f64> {
        let g = self.0.grid();
        if i >= g.nx() || j >= g.rows() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("node ({i}, {j})")));
        }
        Ok(self.0.at(i, j))
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    fn l2_norm(&self) -> f64 {
        self.0.l2_norm()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv_string()
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }
}

fn condition_dict<'py>(py: Python<'py>, r: &ConditionReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("condition", &r.condition_name)?;
    d.set_item("min_margin", r.pointwise_min_margin)?;
    d.set_item("argmin", r.argmin_location)?;
    d.set_item("passed", r.passed)?;
    Ok(d)
}

fn form_dict<'py>(py: Python<'py>, r: &FormReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (label, e) in &r.entries {
        let row = PyDict::new(py);
        row.set_item("min", e.min)?;
        row.set_item("max", e.max)?;
        row.set_item("bound", e.claimed_bound)?;
        row.set_item("passed", e.passed)?;
        d.set_item(label, row)?;
    }
    Ok(d)
}

/// Coefficients `K, A, B` of one preset on one grid, with `ε` and `α`.
#[pyclass(name = "Coefficients")]
pub struct PyCoefficients {
    cs: CoefficientSet,
    preset: Preset,
}

#[pymethods]
impl PyCoefficients {
    #[new]
    #[pyo3(signature = (preset, grid, eps=1e-4, alpha=0.02))]
    fn new(preset: &str, grid: &PyGrid, eps: f64, alpha: f64) -> PyResult<Self> {
        let preset: Preset = preset.parse().map_err(py_err)?;
        let cs = preset.build(grid.0, eps, alpha).map_err(py_err)?;
        Ok(Self { cs, preset })
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.cs.eps
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.cs.alpha
    }

    #[getter]
    fn k(&self) -> PyField {
        PyField(self.cs.k.clone())
    }

    /// Pointwise reports for the interior coefficient condition and the α-condition.
    fn check<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        [check_condition7(&self.cs), check_alpha(&self.cs)]
            .iter()
            .map(|r| condition_dict(py, r))
            .collect()
    }

    /// Interior and boundary multiplier forms.
    #[pyo3(signature = (lam=10.0, m=0))]
    fn multiplier_forms<'py>(&self, py: Python<'py>, lam: f64, m: usize) -> PyResult<Bound<'py, PyDict>> {
        let mt = build_abc(&self.cs, lam, m).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("interior", form_dict(py, &interior_form_report(&mt, &self.cs))?)?;
        d.set_item("boundary", form_dict(py, &boundary_form_report(&mt, &self.cs))?)?;
        Ok(d)
    }

    /// Solves `L u = f`; `f` defaults to the manufactured right-hand side.
    #[pyo3(signature = (f=None, enforce=true))]
    fn solve<'py>(&self, py: Python<'py>, f: Option<&PyField>, enforce: bool) -> PyResult<Bound<'py, PyDict>> {
        let manufactured = f.is_none();
        let f = f.map_or_else(|| Manufactured::cubic_sine().rhs(&self.cs), |f| f.0.clone());
        let opts = SolveOptions { enforce_conditions: enforce, ..SolveOptions::default() };
        let problem = LinearProblem::new(self.cs.clone(), f).map_err(py_err)?;
        let r = py.detach(|| solve_linear_with(&problem, &opts)).map_err(py_err)?;
        let d = PyDict::new(py);
        if manufactured {
            let exact = Manufactured::cubic_sine().sample(*self.cs.grid());
            d.set_item("relative_error", (&r.u - &exact).l2_norm() / exact.l2_norm())?;
        }
        d.set_item("u", PyField(r.u))?;
        d.set_item("residual_norm", r.residual_norm)?;
        d.set_item("relative_residual", r.relative_residual)?;
        d.set_item("apriori_ratio", r.apriori_ratio)?;
        d.set_item("warnings", r.stats.warnings)?;
        Ok(d)
    }

    /// `(min c_v, all positive)` over seeded adjoint samples.
    #[pyo3(signature = (samples=100, seed=42, lam=10.0, m=0))]
    fn energy_certificate(&self, py: Python<'_>, samples: usize, seed: u64, lam: f64, m: usize) -> PyResult<(f64, bool)> {
        py.detach(|| {
            let mt = build_abc(&self.cs, lam, m)?;
            let vs = adjoint_samples(*self.cs.grid(), self.cs.alpha, samples, seed);
            energy_certificate(&self.cs, &mt, &vs)
        })
        .map(|c| (c.min_ratio, c.all_positive))
        .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Coefficients({}, eps={}, alpha={})", self.preset, self.cs.eps, self.cs.alpha)
    }
}

/// `(n, relative L² error, observed order)` rows of a manufactured-solution
/// study on square grids.
#[pyfunction]
#[pyo3(signature = (preset, grids, eps=1e-4, alpha=0.02))]
fn mms(py: Python<'_>, preset: &str, grids: Vec<usize>, eps: f64, alpha: f64) -> PyResult<Vec<(usize, f64, Option<f64>)>> {
    let preset: Preset = preset.parse().map_err(py_err)?;
    let grids = grids.iter().map(|&n| make_grid(n, n)).collect::<mixtype::Result<Vec<_>>>().map_err(py_err)?;
    let table = py
        .detach(|| {
            mms_convergence(
                |g| preset.build(g, eps, alpha),
                &Manufactured::cubic_sine(),
                &grids,
                &SolveOptions::default(),
            )
        })
        .map_err(py_err)?;
    Ok(table.rows.iter().map(|r| (r.nx, r.relative_l2, r.observed_order)).collect())
}

#[pyfunction]
fn sobolev(u: &PyField, m: i32, l: i32) -> PyResult<f64> {
    let ord = NormOrder::new(m, l).map_err(py_err)?;
    if ord.is_positive() {
        sobolev_norm(&u.0, ord)
    } else {
        negative_norm(&u.0, ord)
    }
    .map_err(py_err)
}

/// Runs the manufactured nonlinear case: `equation` is `"curvature"` or
/// `"darboux"`.
#[pyfunction]
#[pyo3(signature = (equation, n=64, rho=0.25, amplitude=0.01, theta=1.0, tol=1e-6, max_iter=50))]
#[allow(clippy::too_many_arguments)]
fn nonlinear_manufactured<'py>(
    py: Python<'py>,
    equation: &str,
    n: usize,
    rho: f64,
    amplitude: f64,
    theta: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let eq = match equation {
        "curvature" => Equation::Curvature,
        "darboux" => Equation::Darboux,
        other => {
            return Err(pyo3::exceptions::PyValueError::new_err(format!(
                "unknown equation {other:?} (curvature | darboux)"
            )))
        }
    };
    let params = NonlinearParams { theta, tol, max_iter, ..NonlinearParams::default() };
    let (case, report) = py
        .detach(|| -> mixtype::Result<_> {
            let g = make_grid(n + 1, n)?;
            let case = ManufacturedSurface::cubic(g, rho, amplitude, eq)?;
            let report = match eq {
                Equation::Curvature => solve_prescribed_curvature(&case.k, &case.initial, None, &params)?,
                Equation::Darboux => {
                    solve_darboux(&case.k, &MetricData::identity(g), &case.initial, None, &params)?
                }
            };
            Ok((case, report))
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("iterations", report.iterations)?;
    d.set_item("converged", report.converged)?;
    d.set_item("residual_history", report.residual_history.clone())?;
    d.set_item("error", case.error(&report.final_z))?;
    d.set_item("height", PyField(report.final_z.z))?;
    Ok(d)
}

#[pymodule(name = "mixtype")]
pub fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", mixtype::VERSION)?;
    m.add("MixtypeError", m.py().get_type::<MixtypeError>())?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyCoefficients>()?;
    m.add_function(wrap_pyfunction!(mms, m)?)?;
    m.add_function(wrap_pyfunction!(sobolev, m)?)?;
    m.add_function(wrap_pyfunction!(nonlinear_manufactured, m)?)?;
    Ok(())
}
