# SPDX-License-Identifier: Apache-2.0
import json
import math

import numpy as np
import pytest

import mdalbench


def tiny_config(**overrides):
    cfg = {
        "dataset": {
            "synthetic": {
                "name": "py",
                "num_domains": 2,
                "samples_per_domain": 60,
                "input_dim": 4,
                "num_classes": 2,
                "seed": 1,
            }
        },
        "model": {"shared_hidden": 8, "private_hidden": 8, "epochs_per_round": 3},
        "engine": {"init_fraction": 0.1, "step_fraction": 0.1, "budget_fraction": 0.3},
    }
    cfg.update(overrides)
    return json.dumps(cfg)


def test_version_and_names():
    assert mdalbench.__version__
    names = mdalbench.strategy_names()
    assert "p2s" in names and "random" in names
    assert len(names) == len(set(names))


def test_kl_and_budget():
    assert mdalbench.kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))
    assert mdalbench.kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.1438, abs=1e-4)
    assert mdalbench.allocate_budget([100, 300], 4) == [1, 3]
    assert mdalbench.allocate_budget([10, 10], 5, [1, 9]) == [1, 4]
    with pytest.raises(mdalbench.ValidationError):
        mdalbench.allocate_budget([1, 1], 5)


def test_kmeans_two_blobs():
    pts = np.array([[0, 0], [0, 1], [10, 10], [10, 11]], dtype=float)
    res = mdalbench.kmeans(pts, 2, seed=3)
    a = res["assignment"]
    assert a[0] == a[1] and a[2] == a[3] and a[0] != a[2]
    assert res["sse"] == pytest.approx(1.0)
    assert res["centers"].shape == (2, 2)
    trace = res["sse_trace"]
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_aulc():
    assert mdalbench.compute_aulc([10, 20], [0.8, 0.9]) == pytest.approx(0.85)
    assert mdalbench.compute_aulc([10], [0.7]) == pytest.approx(0.7)


def test_synthetic_shapes_and_reproducibility():
    spec = json.dumps({"name": "s", "num_domains": 3, "samples_per_domain": 20, "input_dim": 5})
    a = mdalbench.generate_synthetic(spec)
    b = mdalbench.generate_synthetic(spec)
    assert len(a) == 3
    for (xa, ya), (xb, yb) in zip(a, b):
        assert xa.shape == (20, 5)
        assert np.array_equal(xa, xb) and ya == yb


def test_model_bindings():
    m = mdalbench.AspModel(3, [2, 3], shared_hidden=4, private_hidden=2, seed=5)
    x = np.array([0.3, -1.0, 2.0])
    p = m.forward(x, 1)
    assert len(p) == 3 and sum(p) == pytest.approx(1.0)
    assert m.forward_perturbed(x, 1, np.zeros(m.shared_dim)) == pytest.approx(p, abs=0)
    assert len(m.gradient_embedding(x, 1)) == 3 * 6
    assert len(m.penultimate_features(x, 0)) == 6
    s = m.perturbation_score(x, 0, sigma=0.05, samples=10, seed=2)
    assert s >= 0.0
    assert m.perturbation_score(x, 0, sigma=0.05, samples=10, seed=2) == s


def test_run_experiment_is_deterministic():
    a = mdalbench.run_experiment(tiny_config(), "p2s", 0)
    b = mdalbench.run_experiment(tiny_config(), "p2s", 0)
    assert a["error"] is None
    assert [r["acc_macro"] for r in a["rounds"]] == [r["acc_macro"] for r in b["rounds"]]
    assert a["aulc"] == b["aulc"]
    assert all(r["select_seconds"] > 0 for r in a["rounds"][:-1])
    assert a["rounds"][-1]["select_seconds"] == 0.0


def test_invalid_config_raises():
    with pytest.raises(mdalbench.ValidationError):
        mdalbench.run_experiment(tiny_config(seeds=[-1]), "random", 0)
    with pytest.raises(mdalbench.ValidationError):
        mdalbench.run_experiment(tiny_config(), "nope", 0)


def test_cli_main(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(tiny_config(strategies=["random"], seeds=[0]))
    out = tmp_path / "runs"
    assert mdalbench.cli_main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(list(out.glob("*.csv"))) == 1
    assert mdalbench.cli_main(["run", "--config", str(cfg), "--out", str(out)]) == 3
    assert mdalbench.cli_main(["report", str(out)]) == 0
