import itertools
import os
import pathlib

import numpy as np
import pytest

import llmnet

SOURCE = pathlib.Path(os.environ.get("LLMNET_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))


def enumerated_G(l, theta, u, kernel):
    G = np.zeros((3, 3))
    for config in itertools.product(range(3), repeat=l):
        w = np.prod([theta[z] for z in config]) if l else 1.0
        G += w * kernel.eval(u, l, config.count(0), config.count(1))
    return G


def test_kernel_rows_are_stochastic():
    k = llmnet.LogisticKernel()
    for l, i, j in [(0, 0, 0), (4, 2, 1), (6, 0, 6)]:
        K = k.eval(20.0, l, i, j)
        assert K.shape == (3, 3)
        assert np.allclose(K.sum(axis=1), 1.0, atol=1e-15)
    with pytest.raises(ValueError):
        k.eval(20.0, 2, 2, 1)


def test_G_matches_enumeration():
    k = llmnet.LogisticKernel()
    rng = np.random.default_rng(3)
    for _ in range(10):
        theta = rng.dirichlet(np.ones(3))
        for l in range(5):
            assert np.max(np.abs(llmnet.transition_matrix_G(l, theta, 25.0, k) - enumerated_G(l, theta, 25.0, k))) <= 1e-12


def test_meanfield_stays_on_simplex():
    p = llmnet.LogisticKernelParams()
    p.activity = 0.3
    p.absorbing_when_unanimous = True
    k = llmnet.LogisticKernel(p)
    q = llmnet.in_degree_distribution(llmnet.generate_power_law(500, 2.5, 6, 1))
    state0 = [[0.97, 0.02, 0.01]] * len(q)
    times, states = llmnet.integrate_fast(state0, q, 20.0, k, 50.0, 0.1, 10)
    assert states.shape == (len(times), len(q), 3)
    assert np.allclose(states.sum(axis=2), 1.0, atol=1e-9)
    assert llmnet.lyapunov_V(states[-1].tolist(), q) < llmnet.lyapunov_V(state0, q)
    qs = llmnet.solve_quasi_steady(q, 20.0, k)
    assert qs["residual"] < 1e-12
    assert np.allclose(qs["state"][:, 0], 1.0, atol=1e-9)


def test_network_and_bounds():
    g = llmnet.generate_erdos_renyi(50, 0.2, 9)
    assert len(g) == 50 and g.is_consistent()
    assert sum(g.in_degree(i) for i in range(50)) == g.edge_count
    lo, hi = llmnet.wilson_interval(50, 100)
    assert lo == pytest.approx(0.40383, abs=1e-4) and hi == pytest.approx(0.59617, abs=1e-4)
    assert 0.0 <= llmnet.delta1_bound(100, 0.3, 0.3) <= 1.0
    with pytest.raises(ValueError):
        llmnet.delta1_bound(100, 0.0, 0.5)


def test_config_round_trip_and_errors():
    c = llmnet.load_config(str(SOURCE / "configs" / "simulate.yaml"))
    assert c.experiment == "simulate"
    assert llmnet.parse_config(c.to_yaml()).to_yaml() == c.to_yaml()
    with pytest.raises(llmnet.ConfigError):
        llmnet.parse_config("network:\n  colour: red\n")
    assert "kernel:" in llmnet.config_reference()
    assert len(llmnet.experiment_kinds()) == 9


def test_run_experiment_and_plotdata(tmp_path):
    c = llmnet.parse_config("experiment: simulate\nseed: 3\nnetwork:\n  n: 50\nsimulate:\n  rounds: 20\n")
    r = llmnet.run_experiment(c, str(tmp_path / "run"))
    assert r["exit_code"] == 0, r["error"]
    files = {a["file"] for a in r["artifacts"]}
    assert {"trajectory.csv", "config.yaml"} <= files
    assert llmnet.emit_plotdata(str(tmp_path / "run")) == ["plot_trajectory.csv"]
    bad = llmnet.parse_config("seed: 1\n")
    bad.jobs = 0
    assert llmnet.run_experiment(bad, str(tmp_path / "bad"))["exit_code"] == 2
    assert not (tmp_path / "bad").exists()
