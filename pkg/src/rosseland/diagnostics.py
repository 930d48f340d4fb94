"""Numerical probes: accretivity of sigma(<.>)L(.) against a smoothed
positive part, and uniform boundedness of velocity averages."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import hs_norm_sq
from .model import Opacity

PSI_PRIME_MAX = 1.875  # max of 30 y^2 (1 - y)^2 on [0, 1]


@dataclass(frozen=True)
class PhiDelta:
    """Antiderivative of the quintic smoothstep ``psi(y / delta)``."""

    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def __call__(self, x):
        return phi_delta_eval(x, self)


def _psi_low(y):
    return y**3 * (10 - 15 * y + 6 * y**2)


def psi(y):
    # psi(y) = 1 - psi(1 - y); evaluating the upper half through the small
    # argument avoids cancellation, keeping psi monotone and <= 1 in floats
    y = np.clip(y, 0.0, 1.0)
    return np.where(y <= 0.5, _psi_low(y), 1.0 - _psi_low(1.0 - y))


def phi_delta_eval(x, pd: PhiDelta):
    """``(phi, phi', phi'')`` evaluated in closed form.

    On ``[0, delta]`` with ``u = x / delta``: ``phi = delta (u^6 - 3 u^5 + 5/2 u^4)``,
    ``phi' = psi(u)``, ``phi'' = 30 u^2 (1 - u)^2 / delta``; beyond delta
    ``phi = x - delta / 2``.
    """
    d = pd.delta
    x = np.asarray(x, dtype=float)
    u = np.clip(x / d, 0.0, 1.0)
    inner = d * u**4 * (u * u - 3 * u + 2.5)
    val = np.where(x >= d, x - 0.5 * d, np.where(x > 0, inner, 0.0))
    first = psi(u)
    second = np.where((x > 0) & (x < d), 30 * u**2 * (1 - u) ** 2 / d, 0.0)
    if val.ndim == 0:
        return float(val), float(first), float(second)
    return val, first, second


def accretivity_constant(op: Opacity) -> float:
    return 5.0 * (op.sigma_upper + op.lip)


def accretivity_probe(f, g, op: Opacity, pd: PhiDelta, tol=1e-12):
    """Returns ``(J_plus, J_minus, bound)`` for v-functions ``f >= 0`` and ``g``.

    ``J_plus = int phi'(f - g) [sigma(<f>) L f - sigma(<g>) L g] dv``,
    ``J_minus = int phi'(g - f) [sigma(<g>) L g - sigma(<f>) L f] dv`` and
    ``bound = 5 (sigma^* + Lip) (1 + ||f||_L1) delta``.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError("f and g must share the velocity grid")
    if f.min() < -tol:
        raise ValueError(f"f must be nonnegative (min {f.min():.3e})")
    fb, gb = f.mean(), g.mean()
    sf = op.sigma(fb) * (fb - f)
    sg = op.sigma(gb) * (gb - g)
    _, dp, _ = phi_delta_eval(f - g, pd)
    _, dm, _ = phi_delta_eval(g - f, pd)
    jp = float(np.mean(dp * (sf - sg)))
    jm = float(np.mean(dm * (sg - sf)))
    bound = accretivity_constant(op) * (1 + float(np.abs(f).mean())) * pd.delta
    return jp, jm, bound


def _random_pair(rng, nv, delta):
    """Draw (f, g) from a mix of regimes, several concentrated near the
    boundary layers |f - g| <= delta and |<f> - <g>| <= delta."""
    scale = 10 ** rng.uniform(-2, 2)
    f = rng.exponential(scale, nv) * (rng.random(nv) < rng.uniform(0.3, 1.0))
    regime = rng.integers(6)
    if regime == 0:
        g = rng.normal(0, scale, nv) + rng.uniform(-1, 1) * scale
    elif regime == 1:
        g = f + delta * rng.uniform(-2, 2, nv)
    elif regime == 2:
        g = f + rng.uniform(-2, 2) * delta + 0.2 * delta * rng.normal(size=nv)
    elif regime == 3:
        g = np.zeros(nv)
    elif regime == 4:
        g = np.abs(f + delta * rng.normal(size=nv) * rng.uniform(0, 5))
    else:
        g = f * rng.uniform(0.5, 1.5) - rng.uniform(-1, 1) * delta
    return f, g


def accretivity_battery(op: Opacity, delta: float, trials=10_000, nv=64, seed=0,
                        g_zero=False) -> dict:
    """Randomized check of ``J <= bound`` for both orderings."""
    rng = np.random.default_rng(seed)
    pd = PhiDelta(delta)
    violations = 0
    max_ratio = -math.inf
    for _ in range(trials):
        f, g = _random_pair(rng, nv, delta)
        if g_zero:
            g = np.zeros_like(f)
        jp, jm, bound = accretivity_probe(f, g, op, pd)
        j = max(jp, jm)
        violations += int(jp > bound) + int(jm > bound)
        max_ratio = max(max_ratio, j / bound)
    return {"trials": trials, "violations": violations, "max_ratio": max_ratio,
            "delta": delta, "seed": seed}


def averaging_estimator(trajectories, alpha: float):
    """Monte Carlo estimate of ``E int_0^T ||<f>(s)||^2_{H^{alpha/2}} ds``.

    Returns ``(mean, standard_error)``; the time integral is a trapezoid over
    each trajectory's sample times.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("empty ensemble")
    vals = []
    for tr in trajectories:
        g = tr.grid
        rho = tr.values.mean(axis=tuple(range(1 + g.dim, 1 + 2 * g.dim)))
        series = np.array([hs_norm_sq(r, g, alpha / 2) for r in rho])
        vals.append(float(np.trapezoid(series, tr.times)))
    vals = np.array(vals)
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(vals.mean()), se
