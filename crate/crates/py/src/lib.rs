//! Python bindings for `fsdecomp`.
//!
//! Exact models exchange numbers as `fractions.Fraction`, float models as
//! `float`. Inputs may be `int`, `float`, `str` (`"3/4"`, `"0.25"`) or
//! `Fraction`; a float passes through its shortest decimal form.

use std::collections::HashMap;

use fsdecomp::decomposition::{delta_hedge, fs_decompose, Degeneracy};
use fsdecomp::io::ModelFile;
use fsdecomp::models::{check_complete, gen_binomial, gen_trinomial, payoff_claim};
use fsdecomp::oracle::brute_force_fs;
use fsdecomp::perturbation::{asymptotic_expansion, finite_diff_check, DifferenceScheme, PerturbationSpec};
use fsdecomp::{AdaptedProcess, Claim, ClaimKind, Error, MarketModel, Mode, PredictableProcess, Rational, Scalar};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn err(e: Error) -> PyErr {
    if e.is_mathematical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn scalar<T: Scalar>(x: &Bound<'_, PyAny>) -> PyResult<T> {
    T::parse(&x.str()?.to_string()).map_err(err)
}

fn number<'py, T: Scalar>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    match T::MODE {
        Mode::Exact => py.import("fractions")?.getattr("Fraction")?.call1((x.format(),)),
        Mode::Float => Ok(x.to_f64().into_pyobject(py)?.into_any()),
    }
}

fn adapted<'py, T: Scalar>(
    py: Python<'py>,
    model: &MarketModel<T>,
    x: &AdaptedProcess<T>,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for v in 0..model.tree.len() {
        d.set_item(&model.tree.node(v).id, number(py, x.get(v))?)?;
    }
    Ok(d)
}

fn predictable<'py, T: Scalar>(
    py: Python<'py>,
    model: &MarketModel<T>,
    x: &PredictableProcess<T>,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (v, t) in x.iter() {
        d.set_item(&model.tree.node(v).id, number(py, t)?)?;
    }
    Ok(d)
}

fn node_values<T: Scalar>(model: &MarketModel<T>, table: &Bound<'_, PyDict>) -> PyResult<HashMap<String, T>> {
    let mut out = HashMap::new();
    for (k, v) in table.iter() {
        let id: String = k.extract()?;
        if model.tree.find(&id).is_none() {
            return Err(PyValueError::new_err(format!("unknown node `{id}`")));
        }
        out.insert(id, scalar(&v)?);
    }
    Ok(out)
}

/// Claim selected by exactly one of `call`, `put` or `payoff`.
struct ClaimArgs<'py> {
    call: Option<Bound<'py, PyAny>>,
    put: Option<Bound<'py, PyAny>>,
    payoff: Option<Bound<'py, PyDict>>,
}

impl ClaimArgs<'_> {
    fn build<T: Scalar>(&self, model: &MarketModel<T>) -> PyResult<Claim<T>> {
        let kind = match (&self.call, &self.put, &self.payoff) {
            (Some(k), None, None) => ClaimKind::Call { strike: scalar(k)? },
            (None, Some(k), None) => ClaimKind::Put { strike: scalar(k)? },
            (None, None, Some(t)) => ClaimKind::Custom(node_values(model, t)?),
            _ => return Err(PyValueError::new_err("give exactly one of call=, put= or payoff=")),
        };
        payoff_claim(model, &kind).map_err(err)
    }
}

enum Inner {
    Exact(MarketModel<Rational>),
    Float(MarketModel<f64>),
}

macro_rules! dispatch {
    ($inner:expr, $m:ident => $body:expr) => {
        match $inner {
            Inner::Exact($m) => $body,
            Inner::Float($m) => $body,
        }
    };
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    match mode {
        "exact" => Ok(Mode::Exact),
        "float" => Ok(Mode::Float),
        _ => Err(PyValueError::new_err(format!(
            "mode must be `exact` or `float`, got `{mode}`"
        ))),
    }
}

/// A market model on a finite filtration tree.
#[pyclass(frozen, name = "Model", module = "fsdecomp_py")]
struct PyModel {
    inner: Inner,
}

impl PyModel {
    fn build(
        mode: &str,
        exact: impl FnOnce() -> PyResult<MarketModel<Rational>>,
        float: impl FnOnce() -> PyResult<MarketModel<f64>>,
    ) -> PyResult<Self> {
        let inner = match parse_mode(mode)? {
            Mode::Exact => Inner::Exact(exact()?),
            Mode::Float => Inner::Float(float()?),
        };
        Ok(PyModel { inner })
    }
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (s0, u, d, p, steps, rate = None, mode = "exact"))]
    fn binomial(
        s0: &Bound<'_, PyAny>,
        u: &Bound<'_, PyAny>,
        d: &Bound<'_, PyAny>,
        p: &Bound<'_, PyAny>,
        steps: usize,
        rate: Option<&Bound<'_, PyAny>>,
        mode: &str,
    ) -> PyResult<Self> {
        fn make<T: Scalar>(
            a: [&Bound<'_, PyAny>; 4],
            steps: usize,
            rate: Option<&Bound<'_, PyAny>>,
        ) -> PyResult<MarketModel<T>> {
            let r = rate.map(scalar::<T>).transpose()?.unwrap_or_else(T::zero);
            gen_binomial(scalar(a[0])?, scalar(a[1])?, scalar(a[2])?, scalar(a[3])?, steps, r).map_err(err)
        }
        let args = [s0, u, d, p];
        Self::build(
            mode,
            || make::<Rational>(args, steps, rate),
            || make::<f64>(args, steps, rate),
        )
    }

    /// Up by `u`, flat, or down by `d` with probabilities `p_up`, `p_mid`
    /// and `1 - p_up - p_mid`.
    #[staticmethod]
    #[pyo3(signature = (s0, u, d, p_up, p_mid, steps, rate = None, mode = "exact"))]
    #[allow(clippy::too_many_arguments)]
    fn trinomial(
        s0: &Bound<'_, PyAny>,
        u: &Bound<'_, PyAny>,
        d: &Bound<'_, PyAny>,
        p_up: &Bound<'_, PyAny>,
        p_mid: &Bound<'_, PyAny>,
        steps: usize,
        rate: Option<&Bound<'_, PyAny>>,
        mode: &str,
    ) -> PyResult<Self> {
        fn make<T: Scalar>(
            a: [&Bound<'_, PyAny>; 5],
            steps: usize,
            rate: Option<&Bound<'_, PyAny>>,
        ) -> PyResult<MarketModel<T>> {
            let r = rate.map(scalar::<T>).transpose()?.unwrap_or_else(T::zero);
            let (pu, pm): (T, T) = (scalar(a[3])?, scalar(a[4])?);
            let pd = T::one() - pu.clone() - pm.clone();
            gen_trinomial(scalar(a[0])?, scalar(a[1])?, scalar(a[2])?, [pu, pm, pd], steps, r).map_err(err)
        }
        let args = [s0, u, d, p_up, p_mid];
        Self::build(
            mode,
            || make::<Rational>(args, steps, rate),
            || make::<f64>(args, steps, rate),
        )
    }

    /// Reads the JSON model format; a `claim` block in the file is ignored.
    #[staticmethod]
    #[pyo3(signature = (text, mode = "exact"))]
    fn from_json(text: &str, mode: &str) -> PyResult<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| err(e.into()))?;
        Self::build(
            mode,
            || file.to_model::<Rational>().map(|l| l.model).map_err(err),
            || file.to_model::<f64>().map(|l| l.model).map_err(err),
        )
    }

    fn to_json(&self) -> PyResult<String> {
        let file = dispatch!(&self.inner, m => ModelFile::from_model(m, None));
        serde_json::to_string_pretty(&file).map_err(|e| err(e.into()))
    }

    #[getter]
    fn mode(&self) -> &'static str {
        match self.inner {
            Inner::Exact(_) => "exact",
            Inner::Float(_) => "float",
        }
    }

    #[getter]
    fn horizon(&self) -> usize {
        dispatch!(&self.inner, m => m.tree.horizon())
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        dispatch!(&self.inner, m => (0..m.tree.len()).map(|v| m.tree.node(v).id.clone()).collect())
    }

    #[getter]
    fn leaves(&self) -> Vec<String> {
        dispatch!(&self.inner, m => m.tree.leaves().iter().map(|&v| m.tree.node(v).id.clone()).collect())
    }

    /// Discounted stock price per node.
    #[getter]
    fn stock<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        dispatch!(&self.inner, m => adapted(py, m, &m.stock))
    }

    fn is_complete(&self) -> bool {
        dispatch!(&self.inner, m => check_complete(m))
    }

    fn __len__(&self) -> usize {
        dispatch!(&self.inner, m => m.tree.len())
    }

    fn __repr__(&self) -> String {
        dispatch!(&self.inner, m => format!(
            "Model({}, horizon={}, nodes={}, mode={})",
            m.label,
            m.tree.horizon(),
            m.tree.len(),
            self.mode()
        ))
    }
}

/// `V_N = V0 + Σ θ ΔS + L_N` with `L` a martingale orthogonal to the stock.
#[pyclass(frozen, name = "Decomposition", module = "fsdecomp_py")]
struct PyDecomposition {
    #[pyo3(get)]
    v0: Py<PyAny>,
    #[pyo3(get)]
    theta: Py<PyDict>,
    #[pyo3(get)]
    l: Py<PyDict>,
    #[pyo3(get)]
    objective: Py<PyAny>,
}

#[pymethods]
impl PyDecomposition {
    fn __repr__(&self, py: Python<'_>) -> PyResult<String> {
        Ok(format!(
            "Decomposition(v0={}, objective={})",
            self.v0.bind(py).repr()?,
            self.objective.bind(py).repr()?
        ))
    }
}

fn decompose_impl<T: Scalar>(
    py: Python<'_>,
    m: &MarketModel<T>,
    claim: &ClaimArgs<'_>,
    pseudo: bool,
) -> PyResult<PyDecomposition> {
    let c = claim.build(m)?;
    let mode = if pseudo { Degeneracy::Pseudo } else { Degeneracy::Strict };
    let fs = fs_decompose(m, &c, mode).map_err(err)?;
    Ok(PyDecomposition {
        v0: number(py, &fs.v0)?.unbind(),
        theta: predictable(py, m, &fs.theta)?.unbind(),
        l: adapted(py, m, &fs.l)?.unbind(),
        objective: number(py, &fs.objective)?.unbind(),
    })
}

/// Sequential-regression decomposition of a claim.
#[pyfunction]
#[pyo3(signature = (model, *, call = None, put = None, payoff = None, pseudo = false))]
fn decompose<'py>(
    py: Python<'py>,
    model: &PyModel,
    call: Option<Bound<'py, PyAny>>,
    put: Option<Bound<'py, PyAny>>,
    payoff: Option<Bound<'py, PyDict>>,
    pseudo: bool,
) -> PyResult<PyDecomposition> {
    let claim = ClaimArgs { call, put, payoff };
    dispatch!(&model.inner, m => decompose_impl(py, m, &claim, pseudo))
}

fn oracle_impl<'py, T: Scalar>(
    py: Python<'py>,
    m: &MarketModel<T>,
    claim: &ClaimArgs<'_>,
) -> PyResult<Bound<'py, PyDict>> {
    let or = brute_force_fs(m, &claim.build(m)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("c", number(py, &or.c)?)?;
    d.set_item("theta", predictable(py, m, &or.theta)?)?;
    d.set_item("objective", number(py, &or.objective)?)?;
    d.set_item("residual", number(py, &or.residual)?)?;
    Ok(d)
}

/// Global minimizer of `E[(H - c - G_N(θ))²]` from the normal equations.
#[pyfunction]
#[pyo3(signature = (model, *, call = None, put = None, payoff = None))]
fn oracle<'py>(
    py: Python<'py>,
    model: &PyModel,
    call: Option<Bound<'py, PyAny>>,
    put: Option<Bound<'py, PyAny>>,
    payoff: Option<Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let claim = ClaimArgs { call, put, payoff };
    dispatch!(&model.inner, m => oracle_impl(py, m, &claim))
}

fn hedge_impl<'py, T: Scalar>(
    py: Python<'py>,
    m: &MarketModel<T>,
    claim: &ClaimArgs<'_>,
) -> PyResult<Bound<'py, PyDict>> {
    let h = delta_hedge(m, &claim.build(m)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("theta", predictable(py, m, &h.theta)?)?;
    d.set_item("wealth", adapted(py, m, &h.wealth)?)?;
    d.set_item("nominal_wealth", adapted(py, m, &h.nominal_wealth)?)?;
    Ok(d)
}

/// Replicating strategy of a binomial model.
#[pyfunction]
#[pyo3(signature = (model, *, call = None, put = None, payoff = None))]
fn hedge<'py>(
    py: Python<'py>,
    model: &PyModel,
    call: Option<Bound<'py, PyAny>>,
    put: Option<Bound<'py, PyAny>>,
    payoff: Option<Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let claim = ClaimArgs { call, put, payoff };
    dispatch!(&model.inner, m => hedge_impl(py, m, &claim))
}

fn direction<T: Scalar>(
    m: &MarketModel<T>,
    direction: &str,
    ds_prime: Option<&Bound<'_, PyDict>>,
) -> PyResult<PerturbationSpec<T>> {
    if let Some(table) = ds_prime {
        let values = node_values(m, table)?;
        let x = AdaptedProcess::from_fn(&m.tree, |v| {
            values.get(&m.tree.node(v).id).cloned().unwrap_or_else(T::zero)
        });
        return Ok(PerturbationSpec::from_increments(&m.tree, x));
    }
    match direction {
        "proportional" => Ok(PerturbationSpec::proportional(m)),
        "drift" => Ok(PerturbationSpec::constant_drift(&m.tree, T::one())),
        _ => Err(PyValueError::new_err(format!(
            "direction must be `proportional` or `drift`, got `{direction}`"
        ))),
    }
}

fn expansion_impl<'py, T: Scalar>(
    py: Python<'py>,
    m: &MarketModel<T>,
    claim: &ClaimArgs<'_>,
    dir: &str,
    ds_prime: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = direction(m, dir, ds_prime)?;
    let exp = asymptotic_expansion(m, &claim.build(m)?, &spec).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("theta", predictable(py, m, &exp.theta)?)?;
    d.set_item("theta_prime", predictable(py, m, &exp.theta_prime)?)?;
    d.set_item("v0_prime", number(py, &exp.v0_prime)?)?;
    d.set_item("l_prime", adapted(py, m, &exp.l_prime)?)?;
    Ok(d)
}

/// First-order corrections `θ′`, `V0′`, `L′` for increments `ΔS + ε ΔS′`.
/// `ds_prime` maps node ids to `ΔS′` and overrides `direction`.
#[pyfunction]
#[pyo3(signature = (model, *, call = None, put = None, payoff = None, direction = "proportional", ds_prime = None))]
#[allow(clippy::too_many_arguments)]
fn expansion<'py>(
    py: Python<'py>,
    model: &PyModel,
    call: Option<Bound<'py, PyAny>>,
    put: Option<Bound<'py, PyAny>>,
    payoff: Option<Bound<'py, PyDict>>,
    direction: &str,
    ds_prime: Option<Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let claim = ClaimArgs { call, put, payoff };
    dispatch!(&model.inner, m => expansion_impl(py, m, &claim, direction, ds_prime.as_ref()))
}

#[allow(clippy::too_many_arguments)]
fn convergence_impl<'py, T: Scalar>(
    py: Python<'py>,
    m: &MarketModel<T>,
    claim: &ClaimArgs<'_>,
    dir: &str,
    ds_prime: Option<&Bound<'py, PyDict>>,
    h: &Bound<'py, PyAny>,
    levels: usize,
    one_sided: bool,
) -> PyResult<Bound<'py, PyList>> {
    if levels < 2 {
        return Err(PyValueError::new_err("levels must be at least 2"));
    }
    let spec = direction(m, dir, ds_prime)?;
    let mut steps = vec![scalar::<T>(h)?];
    while steps.len() < levels {
        let last = steps[steps.len() - 1].clone();
        steps.push(last / T::from_i64(2));
    }
    let scheme = if one_sided {
        DifferenceScheme::Forward
    } else {
        DifferenceScheme::Centered
    };
    let floor = match T::MODE {
        Mode::Exact => T::zero(),
        Mode::Float => T::from_ratio(1, 1_000_000_000),
    };
    let report = finite_diff_check(m, &claim.build(m)?, &spec, &steps, scheme, &floor).map_err(err)?;
    PyList::new(py, report.orders())
}

/// Observed orders `(quantity, p)` of the finite-difference errors on
/// step sizes `h, h/2, …`.
#[pyfunction]
#[pyo3(signature = (
    model, *, call = None, put = None, payoff = None, direction = "proportional", ds_prime = None,
    h = None, levels = 2, one_sided = false
))]
#[allow(clippy::too_many_arguments)]
fn convergence_orders<'py>(
    py: Python<'py>,
    model: &PyModel,
    call: Option<Bound<'py, PyAny>>,
    put: Option<Bound<'py, PyAny>>,
    payoff: Option<Bound<'py, PyDict>>,
    direction: &str,
    ds_prime: Option<Bound<'py, PyDict>>,
    h: Option<Bound<'py, PyAny>>,
    levels: usize,
    one_sided: bool,
) -> PyResult<Bound<'py, PyList>> {
    let claim = ClaimArgs { call, put, payoff };
    let h = match h {
        Some(h) => h,
        None => "1/1000".into_pyobject(py)?.into_any(),
    };
    dispatch!(&model.inner, m => convergence_impl(
        py, m, &claim, direction, ds_prime.as_ref(), &h, levels, one_sided
    ))
}

#[pymodule]
pub fn fsdecomp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(hedge, m)?)?;
    m.add_function(wrap_pyfunction!(expansion, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_orders, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
