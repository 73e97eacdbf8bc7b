"""Smoke tests for the python bindings. Plain asserts, no test framework."""

import json
import math
import os
import tempfile

import numpy as np

import gmlp


def test_presets_and_analyze():
    names = gmlp.presets()
    assert "gmlp-ti" in names and "gmlp-xlarge" in names
    report = gmlp.analyze("gmlp-ti", 196)
    assert abs(report["total_params"] - 5.9e6) / 5.9e6 <= 0.03
    assert report["total_flops"] == 2 * report["total_macs"]
    assert sum(i["params"] for i in report["items"]) == report["total_params"]
    cfg = json.loads(gmlp.preset_json("amlp-base"))
    assert cfg["tiny_attn"] == 64
    assert cfg["spatial_mode"] == "toeplitz"


def test_kernels():
    assert abs(gmlp.gelu(np.array([1.0]))[0] - 0.8413447460685429) < 1e-12
    s = gmlp.softmax_rows(np.array([[0.0, math.log(3.0)]]))
    assert abs(s[0, 0] - 0.25) < 1e-12 and abs(s[0, 1] - 0.75) < 1e-12
    out = gmlp.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0], [6.0]]))
    assert out[0, 0] == 17.0 and out[1, 0] == 39.0
    x = np.array([[-1.0, 1.0]])
    ln = gmlp.layer_norm(x, np.ones(2), np.zeros(2))
    assert abs(ln[0, 0] + 1.0) < 1e-5 and abs(ln[0, 1] - 1.0) < 1e-5


def test_toeplitz():
    w = np.array([1.0, 2.0, 3.0, 4.0, 5.0])  # n = 3
    full = gmlp.toeplitz_materialize(w)
    assert full.shape == (3, 3)
    assert full[0, 0] == 3.0 and full[1, 0] == 2.0 and full[0, 1] == 4.0
    assert gmlp.toeplitzness(full) == 1.0
    rng = np.random.default_rng(0)
    assert gmlp.toeplitzness(rng.normal(size=(64, 64))) < 0.2


def test_power_law():
    x = [1e5, 1e6, 1e7]
    y = [3.0 * v**-0.5 for v in x]
    a, alpha, residual = gmlp.fit_power_law(x, y)
    assert abs(a - 3.0) < 1e-6 and abs(alpha - 0.5) < 1e-9 and residual < 1e-12


def test_gradcheck():
    ok, worst = gmlp.gradcheck_ops(seeds=2)
    assert ok, f"gradcheck worst rel err {worst}"


def test_model_roundtrip():
    m = gmlp.Model("micro", seed=3)
    assert m.num_params == gmlp.analyze("micro")["total_params"]
    logits = m.token_logits(list(range(16)))
    assert logits.shape == (16, 16)
    logits2 = m.token_logits(list(range(16)))
    assert np.array_equal(logits, logits2)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ckpt.gmlp")
        m.save(path)
        m2 = gmlp.Model("micro", seed=99)
        m2.load(path)
        assert np.array_equal(m2.token_logits(list(range(16))), logits)


def test_training_short():
    m = gmlp.Model("micro", seed=1)
    before = m.evaluate_task("copy_shift_1", seed=1)
    result = m.train_task("copy_shift_1", steps=120, seed=1)
    assert math.isfinite(result["final_train_loss"])
    assert result["final_eval_loss"] < before


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"ok {test.__name__}")
    print(f"{len(tests)} python smoke tests passed")


if __name__ == "__main__":
    main()
