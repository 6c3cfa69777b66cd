import math

import numpy as np
import pytest

from hte_vim import sim
from hte_vim.model import SubsetSpec
from hte_vim.sim import (
    SimConfig,
    compute_metrics,
    expit,
    generate,
    propensity_true,
    run_replicate,
    run_replicates,
    tau_true,
    truths,
    truths_monte_carlo,
    write_outputs,
)

CHEAP = {
    "outcome": {"name": "ols", "degree": 2},
    "propensity": {"name": "logistic"},
    "projection": {"name": "ols", "degree": 2},
    "cate": {"name": "ols", "degree": 2},
}


def test_design_functions():
    assert expit(np.array([0.0]))[0] == 0.5
    assert propensity_true(np.array([[0.0, 0.0]]))[0] == 0.5
    assert propensity_true(np.array([[1.0, 1.0]]))[0] == pytest.approx(0.425557, abs=5e-7)
    assert tau_true(np.array([[1.0, 1.0]]))[0] == pytest.approx(5.177778, abs=5e-7)
    assert np.all(np.isfinite(expit(np.array([-800.0, 800.0]))))


def test_generate_is_deterministic():
    a, b, c = generate(50, 3), generate(50, 3), generate(50, 4)
    np.testing.assert_array_equal(a.Y, b.Y)
    assert not np.array_equal(a.Y, c.Y)
    assert a.W.min() >= -1 and a.W.max() <= 1 and set(a.A) <= {0.0, 1.0}


def test_null_design_has_no_effect():
    a, b = generate(200, 1), generate(200, 1, null=True)
    np.testing.assert_array_equal(a.A, b.A)
    shift = a.Y - b.Y
    np.testing.assert_allclose(shift, a.A * tau_true(a.W))


def test_truth_values():
    t1 = truths(SubsetSpec((0,)))
    assert t1.psi1 == pytest.approx(1.0029505, abs=1.5e-7)
    assert t1.psi2 == pytest.approx(0.3170794, abs=5e-8)
    assert truths(SubsetSpec((1,))).psi2 == pytest.approx(0.6858711, abs=5e-8)
    full = truths(SubsetSpec((0, 1)))
    assert full.psi2 == full.psi1 and full.psi3 == 1.0
    assert math.isnan(truths(SubsetSpec((0,)), null=True).psi3)
    with pytest.raises(ValueError):
        truths(SubsetSpec((2,)))


@pytest.mark.parametrize("s", [(0,), (1,), (0, 1)])
def test_monte_carlo_agrees_with_closed_form(s):
    est, se = truths_monte_carlo(SubsetSpec(s), draws=400_000, seed=2)
    exact = truths(SubsetSpec(s))
    for name in ("psi1", "psi2"):
        assert abs(getattr(est, name) - getattr(exact, name)) <= 4 * getattr(se, name)


def test_oracle_stub_has_zero_error():
    cfg = SimConfig(n_grid=(100,), reps=4, families=("oracle",))
    metrics, _ = run_replicates(cfg, workers=1)
    for row in metrics:
        assert row["mse"] == 0 and row["abs_bias"] == 0 and row["coverage"] == 1.0


def test_normal_stub_coverage():
    cfg = SimConfig(n_grid=(50,), reps=500, families=("normal",), estimands=("VIMa",))
    metrics, _ = run_replicates(cfg, workers=1)
    assert abs(metrics[0]["coverage"] - 0.95) <= 0.02


def test_metrics_arithmetic_and_failures():
    base = {"n": 10, "estimand": "VTE", "family": "EE", "metalearner": "S", "truth": 1.0}
    recs = [
        {**base, "psi": 0.5, "ci_lo": 0.0, "ci_hi": 1.5, "failed": False},
        {**base, "psi": 1.5, "ci_lo": 1.2, "ci_hi": 1.8, "failed": False},
        {**base, "psi": math.nan, "ci_lo": math.nan, "ci_hi": math.nan, "failed": True},
    ]
    (row,) = compute_metrics(recs)
    assert row["mse"] == pytest.approx(0.25)
    assert row["abs_bias"] == pytest.approx(0.0)
    assert row["coverage"] == pytest.approx(0.5)
    assert row["ci_width"] == pytest.approx(1.05)
    assert row["n_failed"] == 1 and row["n_ok"] == 2
    # sd of {0.5, 1.5} is 0.7071; both within 1.96 sd of the truth
    assert row["oracle_coverage"] == 1.0


def test_failed_replicate_is_recorded(monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("learner exploded")

    monkeypatch.setattr(sim, "estimate", boom)
    rows = run_replicate(SimConfig(n_grid=(60,), reps=1, learners=CHEAP), 60, 0)
    assert len(rows) == 9
    assert all(r["failed"] and "exploded" in r["error"] for r in rows)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(reps=0)
    with pytest.raises(ValueError):
        SimConfig(n_grid=(10,))
    with pytest.raises(ValueError):
        SimConfig(rng="mt19937")


def test_worker_count_does_not_change_output(tmp_path):
    cfg = SimConfig(n_grid=(80, 120), reps=3, learners=CHEAP, seed=5)
    outs = []
    for workers in (1, 2):
        metrics, records = run_replicates(cfg, workers=workers)
        paths = write_outputs(cfg, metrics, records, tmp_path / f"w{workers}")
        outs.append((paths["metrics"].read_bytes(), paths["replicates"].read_bytes()))
    assert outs[0] == outs[1]
    header = outs[0][0].decode().splitlines()[0]
    assert header.startswith("n,estimand,family,metalearner,mse,abs_bias,coverage,oracle_coverage,ci_width,n_failed")


def test_dr_metalearner_runs():
    rows = run_replicate(SimConfig(n_grid=(150,), reps=1, learners=CHEAP, metalearner="DR"), 150, 0)
    assert all(not r["failed"] and r["metalearner"] == "DR" for r in rows)
