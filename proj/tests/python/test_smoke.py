import json
import math

import numpy as np
import pytest

import eatta

SMALL = """[model]
hidden = 8
[source]
kind = blobs
classes = 3
dim = 2
per_class = 60
[pretrain]
epochs = 3
[episode]
batch_size = 16
[domain:near]
corruption = rotate(0.3)
batches = 3
[domain:far]
corruption = noise(0.8)
batches = 3
[adapt]
lr = 0.05
"""


def test_presets_parse():
    names = eatta.preset_names()
    assert "ctta-suite" in names and "toy-appendix" in names
    for name in names:
        text = eatta.canonical_config(eatta.preset_text(name))
        assert eatta.canonical_config(text) == text


def test_bad_config_raises():
    with pytest.raises(eatta.ConfigError, match="alpha"):
        eatta.canonical_config(SMALL + "alpha = 2\n")
    with pytest.raises(ValueError):
        eatta.run()


def test_run_is_deterministic():
    a = eatta.run(SMALL, seed=4)
    b = eatta.run(SMALL, seed=4)
    assert a == b
    assert a["status"] == "ok"
    assert len(a["domains"]) == 2
    assert len(a["steps"]) == 6
    assert 0.0 <= a["average_error"] <= 1.0
    assert eatta.run(SMALL, seed=5) != a


def test_debias_helpers():
    assert eatta.debias_weights(3.0, 1.0) == pytest.approx((0.5, 1.5), abs=1e-15)
    assert eatta.debias_weights(0.0, 1.0) == (1.0, 1.0)
    assert eatta.ema(0.8, (1.0, 1.0), (0.5, 1.5)) == pytest.approx((0.9, 1.1), abs=1e-15)


def test_gradcheck():
    ok = eatta.gradcheck(trials=10)
    assert ok["passed"] and ok["max_rel_error"] < 1e-4
    assert not eatta.gradcheck(trials=5, corrupt_gradient=True)["passed"]


def test_model_forward():
    m = eatta.Model.init(4, [8, 6], 3, seed=1)
    assert m.arch == "4-8-6-3"
    assert m.num_trainable == 2 * (8 + 6)
    x = np.random.default_rng(0).normal(size=(5, 4))
    p = m.predict_proba(x)
    assert p.shape == (5, 3)
    assert np.allclose(p.sum(axis=1), 1.0)
    t = m.trainable_params()
    m.set_trainable_params([v + 0.5 for v in t])
    assert not np.allclose(m.predict_proba(x), p)


def test_toy():
    results = eatta.toy()
    assert len(results) == 5
    assert all(math.isfinite(r["close_accuracy"]) for r in results)
