use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::wrap_pymodule;

fn with_module(code: &str) {
    Python::initialize();
    Python::attach(|py| {
        let module = wrap_pymodule!(mixtype_py::py_module)(py);
        let globals = PyDict::new(py);
        globals.set_item("mixtype", module).unwrap();
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn grid_and_field_round_trip() {
    with_module(
        r#"
g = mixtype.Grid(8, 6)
assert (g.nx, g.ny) == (8, 6)
assert len(g.y_nodes()) == 7 and g.y_nodes()[0] == -1.0
f = mixtype.Field(g, [float(k) for k in range(8 * 7)])
assert f.at(3, 2) == 19.0
assert mixtype.Field.from_csv(f.to_csv()).values() == f.values()
try:
    mixtype.Field(g, [1.0])
    raise AssertionError("shape mismatch accepted")
except mixtype.MixtypeError:
    pass
"#,
    );
}

#[test]
fn tricomi_pipeline() {
    with_module(
        r#"
g = mixtype.Grid(32, 32)
cs = mixtype.Coefficients("tricomi", g, eps=1e-4, alpha=0.02)
assert all(r["passed"] for r in cs.check())
forms = cs.multiplier_forms()
assert abs(forms["interior"]["u_x*u_y"]["max"]) < 1e-8
r = cs.solve()
assert r["relative_residual"] < 1e-10 and r["relative_error"] < 0.02
c_min, ok = cs.energy_certificate(samples=5)
assert ok and c_min > 0
bad = mixtype.Coefficients("tricomi", g, eps=1e-2, alpha=0.02)
try:
    bad.solve()
    raise AssertionError("precondition not enforced")
except mixtype.MixtypeError as e:
    assert "alpha" in str(e)
"#,
    );
}

#[test]
fn norms_and_nonlinear() {
    with_module(
        r#"
import math
g = mixtype.Grid(16, 16)
f = mixtype.Field(g, [1.0] * (16 * 17))
assert abs(mixtype.sobolev(f, 0, 0) - math.sqrt(4.0)) < 1e-12
assert mixtype.sobolev(f, -1, 0) <= mixtype.sobolev(f, 0, 0)
rows = mixtype.mms("tricomi", [16, 32])
assert rows[1][2] > 1.5
r = mixtype.nonlinear_manufactured("curvature", n=32)
assert r["converged"] and r["error"] < 1e-4
"#,
    );
}
