import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rosseland.diagnostics import (PSI_PRIME_MAX, PhiDelta, accretivity_battery,
                                   accretivity_probe, averaging_estimator, phi_delta_eval, psi)
from rosseland.fields import TorusGrid
from rosseland.model import constant_opacity, logistic_opacity
from rosseland.solvers import Trajectory


@pytest.mark.parametrize("delta", [1e-3, 0.1, 2.0])
def test_phi_delta_reference_values(delta):
    pd = PhiDelta(delta)
    assert phi_delta_eval(-1.0, pd) == (0.0, 0.0, 0.0)
    assert phi_delta_eval(0.0, pd) == (0.0, 0.0, 0.0)
    # int_0^1 psi = 1/2, int_0^(1/2) psi = 5/64, int_0^(1/4) psi = 29/4096
    assert phi_delta_eval(delta, pd)[0] == pytest.approx(delta / 2, rel=1e-14)
    assert phi_delta_eval(delta / 2, pd)[0] == pytest.approx(5 / 64 * delta, rel=1e-14)
    assert phi_delta_eval(delta / 4, pd)[0] == pytest.approx(29 / 4096 * delta, rel=1e-13)
    val, d1, d2 = phi_delta_eval(3 * delta, pd)
    assert (val, d1, d2) == (pytest.approx(2.5 * delta), 1.0, 0.0)
    assert phi_delta_eval(delta / 2, pd)[1] == pytest.approx(0.5)


def test_phi_delta_rejects_nonpositive_delta():
    with pytest.raises(ValueError):
        PhiDelta(0.0)


def test_psi_prime_peak():
    y = np.linspace(0, 1, 200001)
    assert (30 * y**2 * (1 - y) ** 2).max() == pytest.approx(PSI_PRIME_MAX, rel=1e-9)
    assert psi(-1.0) == 0 and psi(2.0) == 1


def test_phi_delta_sandwich_million_points():
    rng = np.random.default_rng(0)
    for delta in (1e-1, 1e-2, 1e-3):
        x = rng.uniform(-3 * delta, 3 * delta, 10**6)
        val, d1, d2 = phi_delta_eval(x, PhiDelta(delta))
        xp = np.maximum(x, 0)
        assert np.all(val <= xp + 1e-15)
        assert np.all(val >= xp - delta - 1e-15)
        assert np.all((d1 >= 0) & (d1 <= 1))
        assert np.all(d2[(x <= 0) | (x >= delta)] == 0)
        assert np.all(np.abs(d2) <= PSI_PRIME_MAX / delta * (1 + 1e-12))
        order = np.argsort(x)
        assert np.all(np.diff(d1[order]) >= 0)


@given(st.floats(-0.5, 1.5), st.sampled_from([0.1, 1.0]))
def test_phi_delta_derivatives_consistent(u, delta):
    pd = PhiDelta(delta)
    x, h = u * delta, 1e-6 * delta
    v_plus, d_plus, _ = phi_delta_eval(x + h, pd)
    v_minus, d_minus, _ = phi_delta_eval(x - h, pd)
    _, d1, d2 = phi_delta_eval(x, pd)
    assert (v_plus - v_minus) / (2 * h) == pytest.approx(d1, abs=1e-6)
    assert (d_plus - d_minus) / (2 * h) == pytest.approx(d2, abs=1e-4 / delta)


def test_probe_identical_arguments_vanish():
    f = np.random.default_rng(1).exponential(1.0, 64)
    jp, jm, bound = accretivity_probe(f, f, logistic_opacity(), PhiDelta(0.01))
    assert jp == 0 and jm == 0
    # 5 (sigma^* + Lip) (1 + ||f||_1) delta
    assert bound == pytest.approx(5 * 2.25 * (1 + f.mean()) * 0.01)


def test_probe_rejects_negative_f():
    with pytest.raises(ValueError):
        accretivity_probe(-np.ones(8), np.zeros(8), logistic_opacity(), PhiDelta(0.1))
    with pytest.raises(ValueError):
        accretivity_probe(np.ones(8), np.zeros(4), logistic_opacity(), PhiDelta(0.1))


@pytest.mark.parametrize("op", [logistic_opacity(), constant_opacity(1.0)], ids=["logistic", "constant"])
@pytest.mark.parametrize("delta", [1e-1, 1e-2, 1e-3])
def test_battery_no_violations(op, delta):
    rep = accretivity_battery(op, delta, trials=1500, seed=7)
    assert rep["violations"] == 0
    assert set(rep) == {"trials", "violations", "max_ratio", "delta", "seed"}


def test_battery_with_zero_g():
    rep = accretivity_battery(logistic_opacity(), 1e-2, trials=1000, g_zero=True, seed=3)
    assert rep["violations"] == 0


def test_probe_limit_is_nonpositive():
    rng = np.random.default_rng(4)
    op = logistic_opacity()
    for _ in range(5):
        f, g = rng.exponential(1.0, 64), rng.exponential(1.0, 64)
        jp = [accretivity_probe(f, g, op, PhiDelta(d))[0] for d in (1e-2, 1e-5, 1e-8)]
        assert jp[-1] <= 1e-12


def _constant_traj(grid, values, times):
    arr = np.broadcast_to(np.asarray(values)[:, None, None], (len(times),) + grid.phase_shape)
    return Trajectory(grid, "kinetic", np.asarray(times), np.arange(len(times)), arr, {})


def test_averaging_estimator_constant_ensemble():
    g = TorusGrid(1, 16, 8)
    times = np.linspace(0, 0.5, 11)
    trajs = [_constant_traj(g, np.full(11, 1.3), times) for _ in range(4)]
    mean, se = averaging_estimator(trajs, 0.5)
    assert mean == pytest.approx(0.5 * 1.3**2, rel=1e-14)
    assert se == 0


def test_averaging_estimator_statistics():
    g = TorusGrid(1, 16, 8)
    times = np.array([0.0, 1.0])
    trajs = [_constant_traj(g, [c, c], times) for c in (1.0, 2.0, 3.0)]
    mean, se = averaging_estimator(trajs, 1.0)
    vals = np.array([1.0, 4.0, 9.0])
    assert mean == pytest.approx(vals.mean())
    assert se == pytest.approx(vals.std(ddof=1) / np.sqrt(3))


def test_averaging_estimator_empty():
    with pytest.raises(ValueError):
        averaging_estimator([], 0.5)
