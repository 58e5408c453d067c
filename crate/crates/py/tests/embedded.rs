//! Drives the module through an embedded interpreter.

use fsdecomp_py::fsdecomp_py;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyDict>) -> PyResult<R>) -> R {
    pyo3::append_to_inittab!(fsdecomp_py);
    Python::initialize();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("fs", py.import("fsdecomp_py")?)?;
        globals.set_item("Fraction", py.import("fractions")?.getattr("Fraction")?)?;
        f(py, &globals)
    })
    .unwrap()
}

fn eval(py: Python<'_>, g: &Bound<'_, PyDict>, code: &str) -> PyResult<bool> {
    let c = std::ffi::CString::new(code).unwrap();
    py.eval(&c, Some(g), None)?.extract()
}

fn run(py: Python<'_>, g: &Bound<'_, PyDict>, code: &str) -> PyResult<()> {
    let c = std::ffi::CString::new(code).unwrap();
    py.run(&c, Some(g), None)
}

#[test]
fn bindings_round_trip() {
    with_module(|py, g| {
        run(
            py,
            g,
            "m = fs.Model.trinomial(4, 2, '1/2', '1/3', '1/3', 1)\nd = fs.decompose(m, call=3)",
        )?;
        assert!(eval(py, g, "d.v0 == Fraction(10, 7)")?);
        assert!(eval(py, g, "d.theta == {'root': Fraction(6, 7)}")?);
        assert!(eval(py, g, "fs.oracle(m, call=3)['objective'] == Fraction(2, 21)")?);
        assert!(eval(py, g, "fs.Model.from_json(m.to_json()).to_json() == m.to_json()")?);
        run(py, g, "b = fs.Model.binomial(4, 2, '1/2', '1/2', 3, rate='1/4')")?;
        assert!(eval(
            py,
            g,
            "fs.hedge(b, put=5)['theta'] == fs.decompose(b, put=5).theta"
        )?);
        assert!(eval(
            py,
            g,
            "fs.expansion(b, put=5, direction='drift')['l_prime'] == {n: 0 for n in b.nodes}"
        )?);
        let bad = run(py, g, "fs.decompose(m, call=3, put=3)").unwrap_err();
        assert!(bad.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        Ok(())
    });
}
