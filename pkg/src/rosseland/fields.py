"""Periodic grids, scalar/phase-space fields and their spectral calculus.

Layout convention: a ScalarField on an N-dimensional torus has shape
``(nx,) * N``; a PhaseField has shape ``(nx,) * N + (nv,) * N`` with the
spatial axes first.  Spatial measure has unit volume, the velocity
measure is normalized (uniform trapezoid weights summing to one).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    dim: int = 1
    nx: int = 128
    nv: int = 64

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        for name in ("nx", "nv"):
            n = getattr(self, name)
            if n < 4 or n % 2:
                raise ValueError(f"{name} must be even and >= 4, got {n}")

    @property
    def x_shape(self):
        return (self.nx,) * self.dim

    @property
    def v_shape(self):
        return (self.nv,) * self.dim

    @property
    def phase_shape(self):
        return self.x_shape + self.v_shape

    @property
    def x_axes(self):
        return tuple(range(self.dim))

    @property
    def v_axes(self):
        return tuple(range(self.dim, 2 * self.dim))

    @cached_property
    def x_nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(dim,) + x_shape``."""
        ax = np.arange(self.nx) / self.nx
        return np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    @cached_property
    def v_nodes(self) -> np.ndarray:
        ax = np.arange(self.nv) / self.nv
        return np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    @property
    def v_weight(self) -> float:
        return 1.0 / self.nv**self.dim

    @cached_property
    def rfft_shape(self):
        return self.x_shape[:-1] + (self.nx // 2 + 1,)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis, broadcastable to ``rfft_shape``."""
        ks = []
        for i in range(self.dim):
            if i == self.dim - 1:
                k = np.fft.rfftfreq(self.nx, 1.0 / self.nx)
            else:
                k = np.fft.fftfreq(self.nx, 1.0 / self.nx)
            shape = [1] * self.dim
            shape[i] = k.size
            ks.append(k.reshape(shape))
        return tuple(ks)

    @cached_property
    def deriv_wavenumbers(self) -> tuple[np.ndarray, ...]:
        # Nyquist mode dropped for odd derivatives: keeps real fields real.
        out = []
        for k in self.wavenumbers:
            k = k.copy()
            k[np.abs(k) == self.nx // 2] = 0.0
            out.append(k)
        return tuple(out)

    def check(self, field, kind=None):
        if field.grid != self:
            raise GridMismatchError(f"field lives on {field.grid}, expected {self}")
        if kind is not None and not isinstance(field, kind):
            raise TypeError(f"expected {kind.__name__}, got {type(field).__name__}")


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.shape != self.grid.x_shape:
            raise GridMismatchError(f"shape {arr.shape} != {self.grid.x_shape}")
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite values in ScalarField")
        object.__setattr__(self, "values", arr)

    def lift(self) -> PhaseField:
        """The v-independent PhaseField with these values."""
        g = self.grid
        vals = np.broadcast_to(self.values.reshape(g.x_shape + (1,) * g.dim), g.phase_shape)
        return PhaseField(g, vals)

    def _binop(self, other, op):
        if isinstance(other, ScalarField):
            self.grid.check(other)
            other = other.values
        return ScalarField(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binop(other, np.add)

    def __sub__(self, other):
        return self._binop(other, np.subtract)

    def __mul__(self, other):
        return self._binop(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class PhaseField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.shape != self.grid.phase_shape:
            raise GridMismatchError(f"shape {arr.shape} != {self.grid.phase_shape}")
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite values in PhaseField")
        object.__setattr__(self, "values", arr)

    def _binop(self, other, op):
        if isinstance(other, ScalarField):
            other = other.lift()
        if isinstance(other, PhaseField):
            self.grid.check(other)
            other = other.values
        return PhaseField(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binop(other, np.add)

    def __sub__(self, other):
        return self._binop(other, np.subtract)

    def __mul__(self, other):
        return self._binop(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return PhaseField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    """Normalized real-FFT coefficients over the spatial axes.

    ``coeffs[k] = (1/nx^N) sum_x u(x) exp(-2 i pi k.x)``, so that the
    zero mode is the spatial mean.  Only the non-negative half of the last
    axis is stored; the other half follows from Hermitian symmetry.
    """

    grid: TorusGrid
    coeffs: np.ndarray

    def squared_magnitudes(self) -> np.ndarray:
        """|c_k|^2 weighted so the sum over stored modes is the full-lattice sum."""
        g = self.grid
        w = np.full(g.rfft_shape[-1], 2.0)
        w[0] = 1.0
        w[-1] = 1.0  # nx even: Nyquist column appears once
        shape = (1,) * (g.dim - 1) + (w.size,)
        mag = np.abs(self.coeffs) ** 2
        return mag * w.reshape(shape + (1,) * (mag.ndim - g.dim))


def transform(u: ScalarField | PhaseField) -> SpectralCoeffs:
    g = u.grid
    c = np.fft.rfftn(u.values, axes=g.x_axes) / g.nx**g.dim
    return SpectralCoeffs(g, c)


def inverse(c: SpectralCoeffs, kind=ScalarField):
    g = c.grid
    vals = np.fft.irfftn(c.coeffs * g.nx**g.dim, s=g.x_shape, axes=g.x_axes)
    return kind(g, vals)


def velocity_average(f: PhaseField, grid: TorusGrid | None = None) -> ScalarField:
    """Average over V with the normalized uniform measure."""
    if grid is not None:
        grid.check(f, PhaseField)
    elif not isinstance(f, PhaseField):
        raise TypeError("velocity_average expects a PhaseField")
    g = f.grid
    return ScalarField(g, f.values.mean(axis=g.v_axes))


def spectral_gradient(values: np.ndarray, grid: TorusGrid) -> list[np.ndarray]:
    """Array-level spectral gradient over the spatial axes of ``values``."""
    hat = np.fft.rfftn(values, axes=grid.x_axes)
    out = []
    for k in grid.deriv_wavenumbers:
        kk = k.reshape(k.shape + (1,) * (values.ndim - grid.dim))
        out.append(np.fft.irfftn(2j * np.pi * kk * hat, s=grid.x_shape, axes=grid.x_axes))
    return out


def gradient_x(f: ScalarField | PhaseField) -> list:
    kind = type(f)
    return [kind(f.grid, d) for d in spectral_gradient(f.values, f.grid)]


def norm(f: ScalarField | PhaseField, which="L2", s: float | None = None) -> float:
    """L1, L2, Linf or Hs norm.

    ``which`` may be ``"L1"``, ``"L2"``, ``"Linf"`` or ``"Hs"`` (with ``s``),
    or a tuple ``("Hs", s)``.  Hs uses the homogeneous weight |k|^(2s) on
    non-zero integer wavevectors plus the zero mode:
    ``(|c_0|^2 + sum_{k != 0} |k|^{2s} |c_k|^2)^(1/2)``.
    """
    if isinstance(which, tuple):
        which, s = which
    v = f.values
    if which == "L1":
        return float(np.abs(v).mean())
    if which == "L2":
        return float(np.sqrt((v**2).mean()))
    if which == "Linf":
        return float(np.abs(v).max())
    if which == "Hs":
        if not isinstance(f, ScalarField):
            raise TypeError("Hs norm is defined for ScalarField only")
        if s is None:
            raise ValueError("Hs norm needs an order s")
        return float(np.sqrt(hs_norm_sq(f.values, f.grid, s)))
    raise ValueError(f"unknown norm {which!r}")


def hs_norm_sq(values: np.ndarray, grid: TorusGrid, s: float) -> float:
    c = SpectralCoeffs(grid, np.fft.rfftn(values, axes=grid.x_axes) / grid.nx**grid.dim)
    k2 = sum(k**2 for k in grid.wavenumbers)
    weight = np.where(k2 > 0, np.power(np.where(k2 > 0, k2, 1.0), s), 1.0)
    return float((weight * c.squared_magnitudes()).sum())
