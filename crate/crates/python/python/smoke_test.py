"""Smoke test for the fprc extension module.

Build and install first:
    cd crates/python && maturin build --release && pip install ../../target/wheels/fprc-*.whl
"""

import json
import math

import fprc


def main():
    cfg = fprc.Config()
    assert fprc.Config.from_toml(cfg.to_toml()) == cfg

    # Shorter experiments keep the smoke test fast.
    text = cfg.to_toml().replace("duration = 120.0", "duration = 30.0").replace("duration = 80.0", "duration = 15.0")
    cfg = fprc.Config.from_toml(text)

    train, test = fprc.generate_datasets(cfg)
    assert len(train) == 6000 and len(test) == 3000, (len(train), len(test))
    assert all(0.0 <= p <= 450.0 for p in train.p_i)

    model, cv = fprc.Model.train("fprc", train, cfg)
    assert len(cv["folds"]) == 5
    assert model.kind == "fprc" and model.weight_count == 72
    e_test = model.evaluate(test)
    assert math.isfinite(e_test) and e_test > 0.0

    clone = fprc.Model.from_json(model.to_json())
    assert clone.evaluate(test) == e_test

    linear, _ = fprc.Model.train("fuzzy-linear", train, cfg)
    print(f"test RMSE [kPa]: FPRC {e_test:.3f}, fuzzy-linear {linear.evaluate(test):.3f}")

    out = fprc.simulate(model, cfg, scenarios=["sine-0.5"])
    rows = {r["controller"]: r["rmse"][0] for r in out["report"]["rows"]}
    assert list(rows) == ["FPRC", "FPRC+PD", "PD"]
    print("tracking RMSE [deg]:", json.dumps({k: round(v, 3) for k, v in rows.items()}))

    w = fprc.ridge_solve([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [1.0, 2.0, 3.0], 0.0)
    assert all(abs(a - b) < 1e-12 for a, b in zip(w, [1.0, 2.0]))

    sine = fprc.generate_signal(json.dumps({"kind": "sine", "freq": 1.0, "amplitude": 2.0, "offset": 1.0, "duration": 1.0}))
    assert len(sine) == 200 and abs(sine[50] - 3.0) < 1e-12

    try:
        fprc.Model.train("svm", train, cfg)
    except ValueError as e:
        assert "unknown model" in str(e)
    else:
        raise AssertionError("expected ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
