"""Hilbert-expansion correctors f1, f2, f3 and the remainder.

f1 and f2 are closed-form functions of the limit density; f3 is the
stochastic convolution against the multiplicative relaxation semigroup,
advanced by a one-step recursion on the solver time grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .fields import GridMismatchError, PhaseField, ScalarField, TorusGrid, spectral_gradient
from .model import Model, Opacity
from .noise import NoiseBasis, WienerPath
from .solvers import Trajectory


class Corrector(NamedTuple):
    field: PhaseField
    residual: float


def _vexpand(grid: TorusGrid, x_arr):
    return x_arr.reshape(x_arr.shape + (1,) * grid.dim)


def _xexpand(grid: TorusGrid, v_arr):
    return v_arr.reshape((1,) * grid.dim + v_arr.shape)


def a_dot_grad(values: np.ndarray, model: Model) -> np.ndarray:
    """``a(v) . grad_x u`` for a scalar (x-only) or phase-space array."""
    grid = model.grid
    a = model.velocity.values
    grads = spectral_gradient(values, grid)
    if values.shape == grid.x_shape:
        return sum(_vexpand(grid, grads[i]) * _xexpand(grid, a[i]) for i in range(grid.dim))
    return sum(grads[i] * _xexpand(grid, a[i]) for i in range(grid.dim))


def f1_values(rho: np.ndarray, model: Model) -> np.ndarray:
    grid = model.grid
    inv = 1.0 / model.opacity.sigma(rho)
    return -_vexpand(grid, inv) * a_dot_grad(rho, model)


def _hessian_like(rho: np.ndarray, model: Model):
    """``H_ij = d_i (sigma(rho)^-1 d_j rho)``."""
    grid = model.grid
    inv = 1.0 / model.opacity.sigma(rho)
    grads = spectral_gradient(rho, grid)
    H = np.empty((grid.dim, grid.dim) + grid.x_shape)
    for j in range(grid.dim):
        inner = spectral_gradient(inv * grads[j], grid)
        for i in range(grid.dim):
            H[i, j] = inner[i]
    return inv, H


def _anisotropy(model: Model):
    """``<K> - K(v)``, shape (dim, dim) + v_shape."""
    grid = model.grid
    Kv = model.velocity.K()
    return model.K_avg.reshape((grid.dim, grid.dim) + (1,) * grid.dim) - Kv


def _div_flux_f2(rho, model):
    grid = model.grid
    inv, H = _hessian_like(rho, model)
    D = _anisotropy(model)
    acc = 0.0
    for i in range(grid.dim):
        for j in range(grid.dim):
            acc = acc + _vexpand(grid, H[i, j]) * _xexpand(grid, D[i, j])
    return inv, acc


def f2_values(rho: np.ndarray, model: Model) -> np.ndarray:
    inv, acc = _div_flux_f2(rho, model)
    return -_vexpand(model.grid, inv) * acc


def _sigma_L(values, rate, grid):
    m = values.mean(axis=grid.v_axes, keepdims=True)
    return _vexpand(grid, rate) * (m - values)


def corrector_f1(rho: ScalarField, model: Model) -> Corrector:
    """``f1 = -sigma(rho)^-1 a(v).grad rho``; residual is
    ``||sigma(rho) L(f1) - a.grad rho||_inf``."""
    grid = rho.grid
    if grid != model.grid:
        raise GridMismatchError("rho and model grids differ")
    f1 = f1_values(rho.values, model)
    res = _sigma_L(f1, model.opacity.sigma(rho.values), grid) - a_dot_grad(rho.values, model)
    return Corrector(PhaseField(grid, f1), float(np.abs(res).max()))


def corrector_f2(rho: ScalarField, model: Model) -> Corrector:
    """``f2 = -sigma(rho)^-1 div(sigma(rho)^-1 (<K> - K) grad rho)``; residual
    is ``||sigma(rho) L(f2) - div(sigma(rho)^-1 (<K> - K) grad rho)||_inf``."""
    grid = rho.grid
    if grid != model.grid:
        raise GridMismatchError("rho and model grids differ")
    inv, flux_div = _div_flux_f2(rho.values, model)
    f2 = -_vexpand(grid, inv) * flux_div
    res = _sigma_L(f2, 1.0 / inv, grid) - flux_div
    return Corrector(PhaseField(grid, f2), float(np.abs(res).max()))


# ---------------------------------------------------------------------------
# semigroup and third corrector

class RhoPath(NamedTuple):
    times: np.ndarray
    values: np.ndarray  # (n_times,) + x_shape


def as_rho_path(obj) -> RhoPath:
    if isinstance(obj, RhoPath):
        return obj
    if isinstance(obj, Trajectory):
        if obj.full is not None:
            dt = obj.stamp["dt"]
            return RhoPath(np.arange(len(obj.full)) * dt, obj.full)
        return RhoPath(obj.times, obj.values)
    times, values = obj
    return RhoPath(np.asarray(times, dtype=float), np.asarray(values, dtype=float))


def sigma_time_integral(rho_path, s: float, t: float, op: Opacity) -> np.ndarray:
    """Trapezoid rule for ``int_s^t sigma(rho(r, x)) dr`` on the stored samples,
    with linear interpolation of the integrand at non-sample endpoints."""
    rp = as_rho_path(rho_path)
    times = rp.times
    if not (times[0] - 1e-12 <= s <= t <= times[-1] + 1e-12):
        raise ValueError(f"[{s}, {t}] not covered by rho samples [{times[0]}, {times[-1]}]")
    if t == s:
        return np.zeros(rp.values.shape[1:])

    def sig_at(r):
        i = int(np.clip(np.searchsorted(times, r, side="right") - 1, 0, len(times) - 2))
        w = (r - times[i]) / (times[i + 1] - times[i])
        return (1 - w) * op.sigma(rp.values[i]) + w * op.sigma(rp.values[i + 1]), i

    sig_s, _ = sig_at(s)
    sig_t, _ = sig_at(t)
    inner = np.nonzero((times > s) & (times < t))[0]
    nodes = [s] + [times[i] for i in inner] + [t]
    vals = [sig_s] + [op.sigma(rp.values[i]) for i in inner] + [sig_t]
    total = np.zeros_like(sig_s)
    for k in range(len(nodes) - 1):
        total += 0.5 * (nodes[k + 1] - nodes[k]) * (vals[k] + vals[k + 1])
    return total


def semigroup_apply(g: PhaseField, rho_path, s: float, t: float, eps: float,
                    op: Opacity, tol=1e-10) -> PhaseField:
    """``U(t, s) g = g exp(-eps^-2 int_s^t sigma(rho) dr)`` on mean-zero g."""
    if s > t:
        raise ValueError("need s <= t")
    grid = g.grid
    mean = g.values.mean(axis=grid.v_axes)
    if np.abs(mean).max() > tol * (1 + np.abs(g.values).max()):
        raise ValueError(f"semigroup acts on mean-zero fields; |<g>| = {np.abs(mean).max():.3e}")
    integral = sigma_time_integral(rho_path, s, t, op)
    return PhaseField(grid, g.values * _vexpand(grid, np.exp(-integral / eps**2)))


def phi_source(rho: np.ndarray, model: Model) -> np.ndarray:
    """``f1 sigma(rho)^-1 sigma'(rho) rho``."""
    op = model.opacity
    return f1_values(rho, model) * _vexpand(model.grid, op.d1(rho) / op.sigma(rho) * rho)


@dataclass(eq=False)
class F3Trajectory:
    times: np.ndarray
    steps: np.ndarray
    values: np.ndarray
    eps: float
    l2: np.ndarray  # ||f3||_L2 at every recorded time


def corrector_f3(rho_path, model: Model, noise: NoiseBasis, path: WienerPath, eps: float,
                 sample_steps=None, tol=1e-10) -> F3Trajectory:
    """Discretized ``f3(t) = eps^-2 int_0^t U(t, s) phi(s) Q dW_s``.

    ``f3(t_{n+1}) = U(t_{n+1}, t_n)[f3(t_n) + eps^-2 phi(t_n) sum_k Qe_k dbeta_k(n)]``
    with phi at the left endpoint and the semigroup exponent by trapezoid on
    ``sigma(rho_n)``, ``sigma(rho_{n+1})``.  ``rho_path`` must hold every step.
    """
    rp = as_rho_path(rho_path)
    grid = model.grid
    steps = len(rp.values) - 1
    if path.steps < steps:
        raise ValueError("noise path shorter than rho path")
    if path.num_modes != noise.num_modes:
        raise ValueError("path and basis mode counts differ")
    dt = path.dt
    if sample_steps is None:
        sample_steps = np.arange(steps + 1)
    sample_steps = np.asarray(sample_steps)
    out = np.zeros((len(sample_steps),) + grid.phase_shape)
    f3 = np.zeros(grid.phase_shape)
    j = 1 if sample_steps[0] == 0 else 0
    op = model.opacity
    sig_prev = op.sigma(rp.values[0])
    scale = dt / (2 * eps**2)
    for n in range(steps):
        rho = rp.values[n]
        sig_next = op.sigma(rp.values[n + 1])
        if noise.num_modes:
            phi = phi_source(rho, model)
            m = np.abs(phi.mean(axis=grid.v_axes)).max()
            if m > tol * (1 + np.abs(phi).max()):
                raise ValueError(f"source term is not mean-zero in v at step {n} (|<phi>| = {m:.3e})")
            qdw = noise.field(path.increments[n])
            f3 = f3 + phi * _vexpand(grid, qdw) / eps**2
        f3 = f3 * _vexpand(grid, np.exp(-scale * (sig_prev + sig_next)))
        sig_prev = sig_next
        if j < len(sample_steps) and n + 1 == sample_steps[j]:
            out[j] = f3
            j += 1
    l2 = np.sqrt((out**2).reshape(len(sample_steps), -1).mean(axis=1))
    return F3Trajectory(sample_steps * dt, sample_steps, out, eps, l2)


# ---------------------------------------------------------------------------
# assembled expansion

@dataclass(eq=False)
class CorrectorSet:
    times: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    eps: float
    monitors: dict = field(default_factory=dict)

    def mean_residuals(self) -> dict:
        """max over samples of ||<f_i>||_inf."""
        dim = (self.f1.ndim - 1) // 2
        axes = tuple(range(1 + dim, self.f1.ndim))
        return {name: float(np.abs(arr.mean(axis=axes)).max())
                for name, arr in (("f1", self.f1), ("f2", self.f2), ("f3", self.f3))}


def build_correctors(fluid: Trajectory, model: Model, noise: NoiseBasis, path: WienerPath,
                     eps: float) -> CorrectorSet:
    """All three correctors at the fluid trajectory's sample times.

    ``fluid`` must carry the full-resolution path (``keep_all=True``).
    """
    if fluid.full is None:
        raise ValueError("fluid trajectory must keep every step for f3")
    f3 = corrector_f3(fluid, model, noise, path, eps, sample_steps=fluid.steps)
    f1 = np.array([f1_values(r, model) for r in fluid.values])
    f2 = np.array([f2_values(r, model) for r in fluid.values])
    mon = {
        "sup_f1_inf": float(np.abs(f1).max()),
        "sup_f2_inf": float(np.abs(f2).max()),
        "sup_a_grad_f1_inf": float(max(np.abs(a_dot_grad(x, model)).max() for x in f1)),
        "sup_a_grad_f2_inf": float(max(np.abs(a_dot_grad(x, model)).max() for x in f2)),
        "f3_l2": f3.l2,
        "res_f1": max(corrector_f1(ScalarField(fluid.grid, r), model).residual for r in fluid.values),
        "res_f2": max(corrector_f2(ScalarField(fluid.grid, r), model).residual for r in fluid.values),
    }
    return CorrectorSet(fluid.times, f1, f2, f3.values, eps, mon)


@dataclass(eq=False)
class Remainder:
    times: np.ndarray
    r: np.ndarray
    r_in: np.ndarray
    l1: np.ndarray

    @property
    def sup_l1(self) -> float:
        return float(self.l1.max())


def remainder_assemble(kinetic: Trajectory, fluid: Trajectory, correctors: CorrectorSet,
                       eps: float) -> Remainder:
    """``r = f - rho - eps f1 - eps^2 f2 - eps^3 f3`` at the common sample times."""
    if not (np.array_equal(kinetic.steps, fluid.steps) and np.allclose(kinetic.times, correctors.times)):
        raise ValueError("trajectories sampled at different times")
    if kinetic.grid != fluid.grid:
        raise GridMismatchError("kinetic and fluid grids differ")
    grid = kinetic.grid
    rho = fluid.values.reshape(fluid.values.shape + (1,) * grid.dim)
    r = kinetic.values - rho - eps * correctors.f1 - eps**2 * correctors.f2 - eps**3 * correctors.f3
    l1 = np.abs(r).reshape(len(r), -1).mean(axis=1)
    return Remainder(kinetic.times, r, r[0].copy(), l1)
