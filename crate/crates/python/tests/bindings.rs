use fprc::fprc;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &str) -> PyResult<()> {
    pyo3::append_to_inittab!(fprc);
    Python::initialize();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("fprc", py.import("fprc")?)?;
        let code = std::ffi::CString::new(code).unwrap();
        py.run(&code, Some(&globals), None)
    })
}

#[test]
fn module_round_trips_and_trains() {
    run(r#"
cfg = fprc.Config()
assert fprc.Config.from_toml(cfg.to_toml()) == cfg
text = cfg.to_toml().replace("duration = 120.0", "duration = 20.0").replace("duration = 80.0", "duration = 10.0")
cfg = fprc.Config.from_toml(text)
train, test = fprc.generate_datasets(cfg)
assert len(train) == 4000 and len(test) == 2000
model, cv = fprc.Model.train("fuzzy-linear", train, cfg)
assert len(cv["folds"]) == 5 and model.kind == "fuzzy-linear"
assert fprc.Model.from_json(model.to_json()).evaluate(test) == model.evaluate(test)
w = fprc.ridge_solve([[2.0], [4.0]], [1.0, 2.0], 0.0)
assert abs(w[0] - 0.5) < 1e-12
try:
    fprc.ridge_solve([[1.0, 2.0], [1.0]], [1.0, 2.0], 0.0)
    raise AssertionError("ragged input accepted")
except ValueError:
    pass
"#)
    .unwrap();
}
