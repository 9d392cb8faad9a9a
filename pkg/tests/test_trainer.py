import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twostep.activation import parse
from twostep.model import generate_dataset, init_network, make_teacher
from twostep.trainer import (
    BatchPlan,
    DegenerateSignError,
    DimensionError,
    StepSchedule,
    WeightTrajectory,
    corr_gradient,
    corr_loss,
    two_step_train,
)

TANH = parse("tanh")


def _problem(seed, N=7, d=5, n=11):
    g = np.random.default_rng(seed)
    return g.standard_normal((N, d)) / np.sqrt(d), g.standard_normal(N), g.standard_normal((n, d)), g.standard_normal(n)


@given(st.integers(0, 10_000))
def test_gradient_paths_agree(seed):
    W, a, X, y = _problem(seed)
    g1, s1 = corr_gradient(W, a, X, y, TANH, "diag")
    g2, s2 = corr_gradient(W, a, X, y, TANH, "masked")
    assert s1 == s2
    assert np.allclose(g1, g2, atol=1e-13)


def test_loss_value():
    W, a, X, y = _problem(0)
    ref = 1 - abs(np.sum(y * (np.tanh(X @ W.T) @ a))) / len(y)
    assert corr_loss(W, a, X, y, TANH) == pytest.approx(ref)


def test_zero_correlation_raises():
    W, a, X, y = _problem(0)
    with pytest.raises(DegenerateSignError):
        corr_gradient(W, a, X, np.zeros_like(y), TANH)


def test_shape_checks():
    W, a, X, y = _problem(0)
    with pytest.raises(DimensionError):
        corr_gradient(W, a[:-1], X, y, TANH)
    with pytest.raises(DimensionError):
        corr_gradient(W, a, X[:, :-1], y, TANH)


def test_schedule_and_plan_validation():
    assert StepSchedule(0.3, 0.4).etas(100) == pytest.approx((100**0.3, 100**0.4))
    for bad in ((0.5, 0.1), (-0.1, 0.1), (0.1, 0.6)):
        with pytest.raises(ValueError):
            StepSchedule(*bad)
    with pytest.raises(ValueError):
        BatchPlan("reused", 0.5, 0.5)
    with pytest.raises(ValueError):
        BatchPlan("fresh", 0.5, 0.6)
    p = BatchPlan.fresh(0.3)
    s1, s2 = p.split(11)
    assert (s1.stop, s2.start, s2.stop) == (3, 3, 11)


def _small_run(plan=BatchPlan(), seed=0):
    t = make_teacher(1, ["hermite:1"], 0.0, 30, seed)
    data = generate_dataset(t, 120, seed)
    return two_step_train(init_network(40, 30, seed), data, TANH, StepSchedule(0.2, 0.3), plan), data


def test_two_step_update_rule():
    traj, data = _small_run()
    assert np.allclose(traj.W1, traj.W0 - traj.eta1 * traj.grad1)
    assert np.allclose(traj.W2, traj.W1 - traj.eta2 * traj.grad2)
    g2, _ = corr_gradient(traj.W1, traj.a0, data.X, data.y, TANH)
    assert np.array_equal(g2, traj.grad2)
    with pytest.raises(ValueError):
        traj.W2[0, 0] = 1.0


def test_fresh_batches_are_disjoint():
    traj, data = _small_run(BatchPlan.fresh(0.5))
    b1, b2 = BatchPlan.fresh(0.5).batches(data)
    g1, _ = corr_gradient(traj.W0, traj.a0, b1.X, b1.y, TANH)
    assert np.array_equal(g1, traj.grad1)
    assert b1.n + b2.n == data.n


def test_eta_zero_leaves_weights():
    t = make_teacher(1, ["hermite:1"], 0.0, 10, 0)
    data = generate_dataset(t, 50, 0)
    init = init_network(8, 10, 0)
    traj = two_step_train(init, data, TANH, StepSchedule(0.0, 0.0, 0.0, 0.0), BatchPlan())
    assert np.array_equal(traj.W2, init.W0)


def test_trajectory_save_load(tmp_path):
    traj, _ = _small_run()
    traj.save(tmp_path / "run")
    back = WeightTrajectory.load(tmp_path / "run")
    for name in ("W0", "W1", "W2", "a0", "grad1", "grad2"):
        assert np.array_equal(getattr(back, name), getattr(traj, name))
    assert (back.sign1, back.eta2, back.plan) == (traj.sign1, traj.eta2, traj.plan)
    raw = np.fromfile(tmp_path / "run" / "W0.bin", dtype="<f8")
    assert raw.size == traj.W0.size


def test_nonfinite_trajectory_rejected():
    traj, _ = _small_run()
    bad = traj.W2.copy()
    bad[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        WeightTrajectory(traj.W0, traj.W1, bad, traj.a0, traj.grad1, traj.grad2, 1, 1, 1.0, 1.0,
                         traj.schedule, traj.plan, traj.n)
