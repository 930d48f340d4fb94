import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rosseland.fields import GridMismatchError, PhaseField, ScalarField, TorusGrid
from rosseland.noise import (build_basis, constant_basis, dump_path, load_path, sample_path,
                             strat_to_ito_drift)


def test_default_basis_modes_and_amplitudes(grid):
    b = build_basis(grid)
    assert b.kinds == ("const", "cos", "sin")
    assert b.wavevectors == ((0,), (1,), (1,))
    np.testing.assert_allclose(b.amplitudes, (0.25, 0.15, 0.15), rtol=1e-14)
    x = grid.x_nodes[0]
    np.testing.assert_allclose(b.modes[1], 0.15 * np.cos(2 * np.pi * x), atol=1e-15)


def test_kappa_constants(grid):
    b = build_basis(grid)
    assert b.kappa0 == pytest.approx(0.0625 + 2 * 0.0225, rel=1e-14)
    assert b.kappa1 == pytest.approx(0.18 * math.pi**2, rel=1e-14)
    trig = 0.15 * sum((2 * math.pi) ** a for a in range(5))
    assert b.w4inf_sum == pytest.approx(0.0625 + 2 * trig**2, rel=1e-14)


def test_G_is_constant_for_default_basis(grid):
    # 1/2 (q0^2 + q1^2 (cos^2 + sin^2))
    G = build_basis(grid).G()
    np.testing.assert_allclose(G.values, 0.0425, rtol=1e-14)


def test_decay_law_shells():
    g = TorusGrid(1, 16, 4)
    b = build_basis(g, 5)
    np.testing.assert_allclose(b.amplitudes, [0.25, 0.15, 0.15, 0.25 * 3 ** -math.log2(5 / 3),
                                              0.25 * 3 ** -math.log2(5 / 3)], rtol=1e-14)
    assert b.wavevectors[3] == (2,)


def test_low_modes_in_two_dimensions():
    g = TorusGrid(2, 8, 4)
    b = build_basis(g, 5)
    assert b.wavevectors[:5] == ((0, 0), (1, 0), (1, 0), (0, 1), (0, 1))
    grad = b.evaluate_gradient(g.x_nodes)
    assert grad.shape == (5, 2, 8, 8)
    x1 = g.x_nodes[0]
    np.testing.assert_allclose(grad[1, 0], -0.15 * 2 * np.pi * np.sin(2 * np.pi * x1), atol=1e-14)


def test_basis_argument_checks(grid):
    with pytest.raises(ValueError):
        build_basis(grid, 2, amplitudes=[0.1])
    with pytest.raises(ValueError):
        build_basis(grid, 2, kind="uniform")
    with pytest.raises(ValueError):
        build_basis(grid, 3, decay=0)
    assert build_basis(grid, 0).num_modes == 0


def test_constant_basis(grid):
    b = constant_basis(grid, 0.3)
    assert b.num_modes == 1
    np.testing.assert_array_equal(b.modes[0], 0.3)
    np.testing.assert_allclose(b.field(np.array([2.0])), 0.6)


def test_sample_path_reproducible_and_scaled():
    p = sample_path(3, 1e-3, 20000, seed=11)
    q = sample_path(3, 1e-3, 20000, seed=11)
    np.testing.assert_array_equal(p.increments, q.increments)
    assert p.increments.shape == (20000, 3)
    var = p.increments.var(axis=0) / 1e-3
    assert np.all(np.abs(var - 1) < 0.05)
    assert not np.array_equal(p.increments, sample_path(3, 1e-3, 20000, seed=12).increments)
    np.testing.assert_allclose(p.brownian()[-1], p.increments.sum(axis=0))
    assert p.brownian()[0].tolist() == [0, 0, 0]


def test_sample_path_rejects_bad_args():
    with pytest.raises(ValueError):
        sample_path(1, 0.0, 10, 0)
    with pytest.raises(ValueError):
        sample_path(1, 0.1, 0, 0)


def test_resampled_after_keeps_prefix():
    p = sample_path(2, 0.01, 50, seed=1)
    q = p.resampled_after(20, seed=99)
    np.testing.assert_array_equal(q.increments[:20], p.increments[:20])
    assert not np.array_equal(q.increments[20:], p.increments[20:])


def test_path_file_layout_and_roundtrip(tmp_path):
    p = sample_path(3, 5e-4, 7, seed=4)
    fn = tmp_path / "p.bin"
    dump_path(p, fn)
    raw = fn.read_bytes()
    assert len(raw) == 20 + 8 * 21
    assert struct.unpack("<IQd", raw[:20]) == (3, 7, 5e-4)
    assert struct.unpack("<d", raw[20:28])[0] == p.increments[0, 0]
    assert struct.unpack("<d", raw[28:36])[0] == p.increments[0, 1]
    back = load_path(fn)
    np.testing.assert_array_equal(back.increments, p.increments)
    assert (back.dt, back.steps, back.seed) == (p.dt, p.steps, None)


def test_truncated_path_file_rejected(tmp_path):
    fn = tmp_path / "p.bin"
    dump_path(sample_path(2, 0.1, 5, 0), fn)
    fn.write_bytes(fn.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_path(fn)


@given(st.floats(0.0, 2.0))
def test_ito_drift_multiplies_by_G(c):
    g = TorusGrid(1, 16, 4)
    G = build_basis(g).G()
    f = PhaseField(g, np.full(g.phase_shape, c))
    np.testing.assert_allclose(strat_to_ito_drift(f, G).values, 0.0425 * c, rtol=1e-14)
    r = ScalarField(g, np.full(g.x_shape, c))
    np.testing.assert_allclose(strat_to_ito_drift(r, G).values, 0.0425 * c, rtol=1e-14)


def test_ito_drift_grid_mismatch(grid, small_grid):
    G = build_basis(grid).G()
    with pytest.raises(GridMismatchError):
        strat_to_ito_drift(PhaseField(small_grid, np.ones(small_grid.phase_shape)), G)
