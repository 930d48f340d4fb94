"""Velocity field, opacity, relaxation operator and hypothesis checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .fields import PhaseField, ScalarField, TorusGrid, velocity_average


class ConfigurationRejected(ValueError):
    """A model configuration violates a standing hypothesis."""


# ---------------------------------------------------------------------------
# velocity field

@dataclass(frozen=True, eq=False)
class VelocityField:
    """Closed-form ``a: V -> R^N`` plus its tabulation on the v-grid."""

    name: str
    func: Callable[[np.ndarray], np.ndarray]  # (dim,)+S -> (dim,)+S
    grid: TorusGrid
    c1_bounded: bool = True
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vals = np.asarray(self.func(self.grid.v_nodes), dtype=float)
        vals = np.broadcast_to(vals, (self.grid.dim,) + self.grid.v_shape).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __call__(self, v):
        return self.func(np.asarray(v, dtype=float))

    @property
    def sup_norm(self) -> float:
        return float(np.sqrt((self.values**2).sum(axis=0)).max())

    def K(self) -> np.ndarray:
        """``a(v) (x) a(v)`` tabulated: shape (dim, dim) + v_shape."""
        return self.values[:, None] * self.values[None, :]

    def flux(self) -> np.ndarray:
        """Quadrature of a over V (zero under the null-flux hypothesis)."""
        return self.values.reshape(self.grid.dim, -1).mean(axis=1)


def sine_velocity(grid: TorusGrid) -> VelocityField:
    """``a_i(v) = sin(2 pi v_i)``."""
    return VelocityField("sine", lambda v: np.sin(2 * np.pi * v), grid)


def constant_velocity(grid: TorusGrid, c) -> VelocityField:
    c = np.broadcast_to(np.asarray(c, dtype=float), (grid.dim,))

    def func(v):
        return np.broadcast_to(c.reshape((grid.dim,) + (1,) * (np.ndim(v) - 1)), np.shape(v))

    return VelocityField("constant", func, grid)


VELOCITY_FIELDS = {
    "sine": lambda grid, *p: sine_velocity(grid),
    "constant": lambda grid, *p: constant_velocity(grid, p if p else 1.0),
}


def make_velocity(name: str, grid: TorusGrid, params=()) -> VelocityField:
    try:
        factory = VELOCITY_FIELDS[name]
    except KeyError:
        raise ValueError(f"unknown velocity field {name!r}") from None
    return factory(grid, *params)


# ---------------------------------------------------------------------------
# opacity

@dataclass(frozen=True, eq=False)
class Opacity:
    """sigma with its first three derivatives and declared bounds."""

    name: str
    sigma: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    sigma_star: float
    sigma_upper: float
    lip: float
    params: tuple = ()

    def __call__(self, x):
        return self.sigma(x)


def constant_opacity(s0=1.0) -> Opacity:
    s0 = float(s0)
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    return Opacity("constant", lambda x: np.full_like(np.asarray(x, dtype=float), s0),
                   zero, zero, zero, s0, s0, 0.0, (s0,))


def logistic_opacity(lo=1.0, hi=2.0, beta=1.0) -> Opacity:
    """``sigma(x) = lo + (hi - lo) / (1 + exp(beta x))``."""
    lo, hi, beta = float(lo), float(hi), float(beta)
    amp = hi - lo

    def s(x):
        return expit(-beta * np.asarray(x, dtype=float))

    def sigma(x):
        return lo + amp * s(x)

    def d1(x):
        y = s(x)
        return -amp * beta * y * (1 - y)

    def d2(x):
        y = s(x)
        return amp * beta**2 * y * (1 - y) * (1 - 2 * y)

    def d3(x):
        y = s(x)
        return -amp * beta**3 * y * (1 - y) * (1 - 6 * y + 6 * y * y)

    return Opacity("logistic", sigma, d1, d2, d3, min(lo, hi), max(lo, hi),
                   abs(amp * beta) / 4, (lo, hi, beta))


def exponential_opacity(scale=1.0) -> Opacity:
    """``sigma(x) = exp(-scale x)``: unbounded, used to exercise rejection."""
    scale = float(scale)
    e = lambda x: np.exp(-scale * np.asarray(x, dtype=float))  # noqa: E731
    return Opacity("exponential", e, lambda x: -scale * e(x), lambda x: scale**2 * e(x),
                   lambda x: -scale**3 * e(x), 0.0, math.inf, math.inf, (scale,))


OPACITIES = {
    "constant": constant_opacity,
    "logistic": logistic_opacity,
    "exponential": exponential_opacity,
}


def make_opacity(name: str, params=()) -> Opacity:
    try:
        factory = OPACITIES[name]
    except KeyError:
        raise ValueError(f"unknown opacity {name!r}") from None
    return factory(*params)


@dataclass(frozen=True, eq=False)
class Model:
    velocity: VelocityField
    opacity: Opacity

    @property
    def grid(self) -> TorusGrid:
        return self.velocity.grid

    @property
    def K_avg(self) -> np.ndarray:
        return K_average(self.velocity, check=False)


# ---------------------------------------------------------------------------
# operators

def relax_L(f: PhaseField) -> PhaseField:
    """``L(f) = <f> - f``."""
    return velocity_average(f).lift() - f


def sigma_L(f: PhaseField, op: Opacity) -> PhaseField:
    rho = velocity_average(f)
    rate = ScalarField(f.grid, op.sigma(rho.values))
    return relax_L(f) * rate


def dissipativity_value(f: PhaseField, op: Opacity) -> tuple[float, float]:
    """Both sides of ``(sigma(<f>) Lf, f) = -||sigma(<f>)^(1/2) Lf||^2``."""
    g = f.grid
    rate = op.sigma(f.values.mean(axis=g.v_axes)).reshape(g.x_shape + (1,) * g.dim)
    Lf = relax_L(f).values
    lhs = float((rate * Lf * f.values).mean())
    rhs = -float((rate * Lf**2).mean())
    return lhs, rhs


def K_average(a: VelocityField, check=True) -> np.ndarray:
    """``<a (x) a>`` by v-quadrature; rejects non positive-definite results."""
    g = a.grid
    K = a.K().reshape(g.dim, g.dim, -1).mean(axis=2)
    K = 0.5 * (K + K.T)
    if check:
        lam = np.linalg.eigvalsh(K).min()
        if not lam > 1e-12:
            raise ConfigurationRejected(f"<K> is not positive definite (min eigenvalue {lam:.3e})")
    return K


# ---------------------------------------------------------------------------
# non-degeneracy

@dataclass
class NondegeneracyResult:
    eps: np.ndarray
    worst_measure: np.ndarray
    worst_xi: list
    worst_shift: np.ndarray
    alpha_fit: float
    alpha_admissible: float  # largest alpha with m(eps) <= eps^alpha on the ladder
    degenerate: bool

    def table(self):
        return [
            {"eps": float(e), "measure": float(m), "xi": list(map(float, xi)), "shift": float(s)}
            for e, m, xi, s in zip(self.eps, self.worst_measure, self.worst_xi, self.worst_shift)
        ]


def sublevel_measure(a: VelocityField, xi, shift, eps, fine=2**16) -> float:
    """Leb{v : |a(v).xi + shift| < eps} by counting on a fine uniform grid."""
    h = _projected(a, np.asarray(xi, dtype=float), fine)
    return float(np.mean(np.abs(h + shift) < eps))


def _projected(a: VelocityField, xi, fine):
    dim = a.grid.dim
    ax = (np.arange(fine) + 0.5) / fine
    v = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"))
    vals = np.broadcast_to(np.asarray(a(v), dtype=float), (dim,) + v.shape[1:])
    return np.tensordot(xi, vals, axes=(0, 0)).ravel()


def _directions(dim, samples):
    if dim == 1:
        return [np.array([1.0]), np.array([-1.0])]
    theta = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    return [np.array([np.cos(t), np.sin(t)]) for t in theta]


def nondegeneracy_alpha(a: VelocityField, eps_ladder=(1e-1, 1e-2, 1e-3, 1e-4), samples=64,
                        fine=None, degenerate_below=1e-3) -> NondegeneracyResult:
    """Worst-case sub-level measure over directions and shifts, per eps.

    For a fixed direction xi the worst shift is found exactly (up to the fine
    grid) by a sliding window of width 2 eps over the sorted values of
    ``a(v).xi``; directions are sampled on the unit sphere.
    """
    eps = np.asarray(eps_ladder, dtype=float)
    if np.any(np.diff(eps) >= 0) or np.any((eps <= 0) | (eps >= 1)):
        raise ValueError("eps ladder must be decreasing in (0, 1)")
    if fine is None:
        fine = 2**18 if a.grid.dim == 1 else 1024
    worst = np.zeros(eps.size)
    worst_xi = [None] * eps.size
    worst_shift = np.zeros(eps.size)
    for xi in _directions(a.grid.dim, samples):
        h = np.sort(_projected(a, xi, fine))
        n = h.size
        for j, e in enumerate(eps):
            hi = np.searchsorted(h, h + 2 * e, side="left")
            counts = hi - np.arange(n)
            i = int(np.argmax(counts))
            m = counts[i] / n
            if m > worst[j]:
                worst[j], worst_xi[j], worst_shift[j] = m, xi, -(h[i] + e)
    logm, loge = np.log(worst), np.log(eps)
    slope = float(np.polyfit(loge, logm, 1)[0])
    admissible = float(np.min(logm / loge))
    return NondegeneracyResult(eps, worst, worst_xi, worst_shift, slope, admissible,
                               admissible <= degenerate_below)


# ---------------------------------------------------------------------------
# hypothesis validation

@dataclass
class Check:
    passed: bool
    value: float | None = None
    witness: float | None = None
    detail: str = ""

    def as_dict(self):
        return {"passed": bool(self.passed), "value": self.value, "witness": self.witness,
                "detail": self.detail}


@dataclass
class HypothesisReport:
    checks: dict

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self):
        return [k for k, c in self.checks.items() if not c.passed]

    def as_dict(self):
        return {"ok": self.ok, "checks": {k: c.as_dict() for k, c in self.checks.items()}}

    def raise_if_failed(self):
        if not self.ok:
            parts = [f"{k} (witness {self.checks[k].witness})" for k in self.failures()]
            raise ConfigurationRejected("hypotheses violated: " + ", ".join(parts))


def validate_hypotheses(a: VelocityField, op: Opacity, X=8.0, points=20001,
                        tol=1e-12) -> HypothesisReport:
    """Null flux, <K> > 0, and (H1)-(H3) for sigma on a grid over [-X, X].

    (H2) is certified through ``max|sigma'| <= lip`` plus finiteness of the
    second and third derivatives on the grid; (H3) through ``sigma' <= 0``
    and ``sigma + sigma' x >= 0``, i.e. the derivative of ``sigma(x) x``.
    """
    checks = {}
    flux = a.flux()
    checks["null_flux"] = Check(bool(np.abs(flux).max() <= 1e-12), float(np.abs(flux).max()))
    K = K_average(a, check=False)
    lam = float(np.linalg.eigvalsh(K).min())
    checks["K_positive_definite"] = Check(lam > 1e-12, lam)

    x = np.linspace(-X, X, points)
    with np.errstate(over="ignore", invalid="ignore"):
        s = op.sigma(x)
        d1 = op.d1(x)
        d2 = op.d2(x)
        d3 = op.d3(x)

    bounds_ok = 0 < op.sigma_star <= op.sigma_upper < math.inf
    lo_bad = s < op.sigma_star - tol
    hi_bad = s > op.sigma_upper + tol
    if not bounds_ok:
        i = int(np.argmax(s)) if not math.isfinite(op.sigma_upper) else int(np.argmin(s))
        checks["H1"] = Check(False, float(s[i]), float(x[i]),
                             f"declared bounds [{op.sigma_star}, {op.sigma_upper}] not positive and finite")
    elif lo_bad.any() or hi_bad.any():
        i = int(np.argmax(lo_bad | hi_bad))
        checks["H1"] = Check(False, float(s[i]), float(x[i]), "sigma leaves its declared bounds")
    else:
        checks["H1"] = Check(True, float(s.min()), None, f"range [{s.min():.6g}, {s.max():.6g}]")

    finite = np.isfinite(d1) & np.isfinite(d2) & np.isfinite(d3)
    lip_bad = np.abs(d1) > op.lip * (1 + 1e-9) + tol
    if not math.isfinite(op.lip) or not finite.all() or lip_bad.any():
        i = int(np.argmax(~finite | lip_bad)) if (~finite | lip_bad).any() else int(np.argmax(np.abs(d1)))
        checks["H2"] = Check(False, float(np.abs(d1).max()), float(x[i]), "Lipschitz bound or C3 bound fails")
    else:
        checks["H2"] = Check(True, float(np.abs(d1).max()))

    mono = d1 > tol
    prod = s + d1 * x
    prod_bad = prod < -tol
    if mono.any():
        i = int(np.argmax(mono))
        checks["H3"] = Check(False, float(d1[i]), float(x[i]), "sigma increases")
    elif prod_bad.any():
        i = int(np.argmax(prod_bad))
        checks["H3"] = Check(False, float(prod[i]), float(x[i]), "sigma(x) x decreases")
    else:
        checks["H3"] = Check(True, float(prod.min()), None,
                             f"min sigma'(x) x = {float((d1 * x).min()):.6g}")
    return HypothesisReport(checks)
