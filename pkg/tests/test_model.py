import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rosseland.fields import PhaseField, TorusGrid, velocity_average
from rosseland.model import (ConfigurationRejected, K_average, Model, constant_opacity,
                             constant_velocity, dissipativity_value, exponential_opacity,
                             logistic_opacity, make_opacity, make_velocity, nondegeneracy_alpha,
                             relax_L, sigma_L, sine_velocity, sublevel_measure,
                             validate_hypotheses)

# sigma = 1 + 1/(1 + e^x) and its first three derivatives, evaluated symbolically
LOGISTIC_ORACLE = {
    -1.5: (1.8175744761936437, -0.14914645207033286, -0.094730212784752674, -0.015678467079324280),
    0.0: (1.5, -0.25, 0.0, 0.125),
    0.7: (1.3318122278318339, -0.22171287329310905, 0.074578788440341810, 0.073226715810208320),
    3.0: (1.0474258731775668, -0.045176659730912133, 0.040891574660943479, -0.032931076224256425),
}


@pytest.mark.parametrize("x", sorted(LOGISTIC_ORACLE))
def test_logistic_opacity_against_symbolic_values(x):
    op = logistic_opacity()
    got = (op.sigma(x), op.d1(x), op.d2(x), op.d3(x))
    np.testing.assert_allclose(got, LOGISTIC_ORACLE[x], rtol=1e-14, atol=1e-16)


def test_logistic_declared_constants():
    op = logistic_opacity(1.0, 2.0, 1.0)
    assert (op.sigma_star, op.sigma_upper, op.lip) == (1.0, 2.0, 0.25)
    assert make_opacity("logistic", (1.0, 3.0, 2.0)).lip == pytest.approx(1.0)


@given(st.floats(-20, 20))
def test_logistic_derivatives_consistent(x):
    op = logistic_opacity(0.5, 1.5, 1.3)
    h = 1e-5
    for f, df in ((op.sigma, op.d1), (op.d1, op.d2), (op.d2, op.d3)):
        fd = (f(x + h) - f(x - h)) / (2 * h)
        assert fd == pytest.approx(float(df(x)), abs=1e-8)


def test_sine_velocity_moments(grid):
    a = sine_velocity(grid)
    assert a.sup_norm == pytest.approx(np.abs(np.sin(2 * np.pi * grid.v_nodes[0])).max())
    assert abs(a.flux()[0]) < 1e-15
    np.testing.assert_allclose(K_average(a), [[0.5]], rtol=1e-14)


def test_two_dimensional_sine_K():
    g = TorusGrid(2, 8, 8)
    a = make_velocity("sine", g)
    np.testing.assert_allclose(K_average(a), 0.5 * np.eye(2), atol=1e-14)


def test_make_unknown_names(grid):
    with pytest.raises(ValueError):
        make_velocity("spiral", grid)
    with pytest.raises(ValueError):
        make_opacity("plasma")


def test_relaxation_operators(grid, model):
    rng = np.random.default_rng(0)
    f = PhaseField(grid, rng.random(grid.phase_shape))
    Lf = relax_L(f)
    np.testing.assert_allclose(velocity_average(Lf).values, 0.0, atol=1e-15)
    rate = model.opacity.sigma(f.values.mean(axis=1))
    np.testing.assert_allclose(sigma_L(f, model.opacity).values, rate[:, None] * Lf.values,
                               rtol=1e-14)


def test_equilibria_are_v_independent(grid, model):
    x = grid.x_nodes[0]
    rho = np.cos(2 * np.pi * x) + 3
    f = PhaseField(grid, np.broadcast_to(rho[:, None], grid.phase_shape))
    np.testing.assert_array_equal(relax_L(f).values, 0.0)


@given(st.integers(0, 2**31 - 1), st.floats(-3, 3))
def test_dissipativity_identity(seed, logscale):
    g = TorusGrid(1, 16, 8)
    rng = np.random.default_rng(seed)
    f = PhaseField(g, 10**logscale * rng.standard_normal(g.phase_shape))
    lhs, rhs = dissipativity_value(f, logistic_opacity())
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))
    assert lhs <= 0


def test_validate_defaults_pass(model):
    rep = validate_hypotheses(model.velocity, model.opacity)
    assert rep.ok, rep.as_dict()
    rep.raise_if_failed()


def test_validate_constant_velocity_fails_null_flux(grid):
    rep = validate_hypotheses(constant_velocity(grid, 0.3), logistic_opacity())
    assert rep.failures() == ["null_flux"]
    assert rep.checks["null_flux"].value == pytest.approx(0.3)
    with pytest.raises(ConfigurationRejected):
        rep.raise_if_failed()


def test_validate_exponential_opacity_fails_with_witness(model):
    rep = validate_hypotheses(model.velocity, exponential_opacity())
    assert "H1" in rep.failures()
    assert rep.checks["H1"].witness is not None
    # x e^{-x} decreases past x = 1
    assert rep.checks["H3"].witness > 1


def test_validate_increasing_opacity_fails_H3(model):
    rising = logistic_opacity(2.0, 1.0, 1.0)
    rep = validate_hypotheses(model.velocity, rising)
    assert rep.failures() == ["H3"]


def test_constant_opacity_passes(model):
    assert validate_hypotheses(model.velocity, constant_opacity(2.0)).ok


def test_K_average_rejects_zero_velocity(grid):
    with pytest.raises(ConfigurationRejected):
        K_average(constant_velocity(grid, 0.0))


def test_sublevel_measure_closed_form(grid):
    a = sine_velocity(grid)
    # Leb{|sin 2 pi v| < e} = (2/pi) asin e
    assert sublevel_measure(a, [1.0], 0.0, 0.1, fine=2**18) == pytest.approx(
        2 / math.pi * math.asin(0.1), abs=1e-5)


def test_nondegeneracy_sine(grid):
    res = nondegeneracy_alpha(sine_velocity(grid))
    # worst shift sits at the turning point: Leb{sin > 1 - 2e} = acos(1 - 2e)/pi
    oracle = [0.20483276469913342, 0.06376856085851988, 0.0201350416333775, 0.0063663038317457905]
    np.testing.assert_allclose(res.worst_measure, oracle, rtol=2e-3)
    assert 0.45 <= res.alpha_fit <= 0.6
    assert not res.degenerate
    assert len(res.table()) == 4


def test_nondegeneracy_constant_is_degenerate(grid):
    res = nondegeneracy_alpha(constant_velocity(grid, 0.3))
    np.testing.assert_allclose(res.worst_measure, 1.0)
    assert res.degenerate


def test_nondegeneracy_ladder_checked(grid):
    with pytest.raises(ValueError):
        nondegeneracy_alpha(sine_velocity(grid), eps_ladder=(0.01, 0.1))


def test_model_exposes_grid_and_K(model, grid):
    assert model.grid == grid
    np.testing.assert_allclose(model.K_avg, [[0.5]])
    assert isinstance(model, Model)
