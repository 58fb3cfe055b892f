use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::wrap_pymodule;

use swirl_rings_py::swirl_rings_py;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyDict>) -> R) -> R {
    Python::initialize();
    Python::attach(|py| {
        let m = wrap_pymodule!(swirl_rings_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("m", m).unwrap();
        globals.set_item("math", py.import("math").unwrap()).unwrap();
        f(py, &globals)
    })
}

fn eval<'py>(py: Python<'py>, g: &Bound<'py, PyDict>, code: &str) -> Bound<'py, PyAny> {
    let c = std::ffi::CString::new(code).unwrap();
    py.eval(&c, Some(g), None).unwrap_or_else(|e| panic!("{code}: {e}"))
}

#[test]
fn kernel_backends_agree_through_python() {
    with_module(|py, g| {
        let q: f64 = eval(py, g, "m.ring_green(1.0, 0.1, 0.7, -0.4)").extract().unwrap();
        let e: f64 = eval(py, g, "m.ring_green(1.0, 0.1, 0.7, -0.4, 'elliptic')").extract().unwrap();
        assert!((q - e).abs() <= 1e-10 * e, "{q} vs {e}");
    });
}

#[test]
fn unknown_backend_raises_module_error() {
    with_module(|py, g| {
        let c = std::ffi::CString::new("m.ring_green(1.0, 0.0, 1.0, 0.5, 'bogus')").unwrap();
        let err = py.eval(&c, Some(g), None).unwrap_err();
        let ty = g.get_item("m").unwrap().unwrap().getattr("SwirlRingsError").unwrap();
        assert!(err.get_type(py).is(&ty), "{err}");
    });
}

#[test]
fn predictions_match_closed_forms() {
    with_module(|py, g| {
        let r: f64 = eval(py, g, "m.predict('cylinder', 0.1, 1.0)['r_star']").extract().unwrap();
        // interior maximum of t/2π − W t²
        assert!((r - 1.0 / (4.0 * std::f64::consts::PI * 0.1)).abs() < 1e-12);
        let d: f64 = 1.0;
        let w = 1.0 / (8.0 * std::f64::consts::PI);
        g.set_item("w", w).unwrap();
        let r: f64 = eval(py, g, "m.predict('exterior_ball', w, 1.0)['r_star']").extract().unwrap();
        let dg = |t: f64| 1.0 / (2.0 * std::f64::consts::PI) - 2.0 * w * t - w * d.powi(3) / (t * t);
        assert!(dg(r).abs() < 1e-10, "stationarity defect {}", dg(r));
    });
}

#[test]
fn solve_returns_ring_with_fields_and_record() {
    with_module(|py, g| {
        let ring = eval(py, g, "m.solve('whole_space', 5e-2, 1/(2*math.pi))");
        assert!(ring.getattr("converged").unwrap().extract::<bool>().unwrap());
        let circ: f64 = ring.getattr("circulation").unwrap().extract().unwrap();
        assert!((circ - 1.0).abs() < 1e-6);
        let r: Vec<f64> = ring.getattr("r").unwrap().extract().unwrap();
        let z: Vec<f64> = ring.getattr("z").unwrap().extract().unwrap();
        let zeta: Vec<Vec<f64>> = ring.call_method0("zeta").unwrap().extract().unwrap();
        assert_eq!(zeta.len(), r.len());
        assert!(zeta.iter().all(|row| row.len() == z.len()));
        assert!(zeta.iter().flatten().all(|v| *v >= 0.0));
        let rec = ring.call_method0("record").unwrap();
        let rec = rec.cast::<PyDict>().unwrap();
        for key in swirl_rings::diagnostics::RECORD_KEYS {
            assert!(rec.contains(*key).unwrap(), "missing {key}");
        }
        let h: f64 = rec.get_item("helicity").unwrap().unwrap().extract().unwrap();
        assert!(h.is_finite());
    });
}

#[test]
fn config_text_errors_surface_as_module_error() {
    with_module(|py, g| {
        g.set_item("text", "[domain]\nkind = \"whole_space\"\n[params]\nbeta = 0.1\nW = 0.1\nbogus = 1\n").unwrap();
        let c = std::ffi::CString::new("m.solve_config(text)").unwrap();
        let err = py.eval(&c, Some(g), None).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    });
}

#[test]
fn field_rows_follow_grid_layout() {
    let mut f = swirl_rings::geometry::ScalarField::zeros(2, 3);
    f.as_mut_slice().copy_from_slice(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(::swirl_rings_py::field_rows(&f), vec![vec![0.0, 1.0, 2.0], vec![3.0, 4.0, 5.0]]);
}
