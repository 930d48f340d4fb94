"""Finite-mode covariance basis, seeded Brownian increments, Ito correction."""
from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .fields import GridMismatchError, PhaseField, ScalarField, TorusGrid


def _low_modes(dim: int, count: int):
    """First ``count`` real trigonometric modes, ordered by frequency.

    Yields ``(kind, wavevector)`` with kind in {"const", "cos", "sin"}; one
    representative per +/- pair of wavevectors.
    """
    out = [("const", (0,) * dim)]
    radius = 1
    while len(out) < count:
        shell = []
        for k in itertools.product(range(-radius, radius + 1), repeat=dim):
            if max(abs(c) for c in k) != radius:
                continue
            # keep the half-space representative (first nonzero coordinate > 0)
            first = next(c for c in k if c != 0)
            if first > 0:
                shell.append(k)
        shell.sort(key=lambda k: (sum(c * c for c in k), tuple(-c for c in k)))
        for k in shell:
            out.append(("cos", k))
            out.append(("sin", k))
        radius += 1
    return out[:count]


@dataclass(frozen=True, eq=False)
class NoiseBasis:
    """Modes ``Qe_k`` tabulated on the grid, plus closed-form norms."""

    grid: TorusGrid
    kinds: tuple
    wavevectors: tuple
    amplitudes: tuple
    modes: np.ndarray  # shape (K,) + x_shape

    @property
    def num_modes(self) -> int:
        return len(self.amplitudes)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Modes at arbitrary points ``x`` of shape ``(dim,) + S``."""
        out = []
        for kind, k, q in zip(self.kinds, self.wavevectors, self.amplitudes):
            phase = 2 * np.pi * sum(ki * xi for ki, xi in zip(k, x))
            if kind == "const":
                out.append(np.full(np.shape(x)[1:], q, dtype=float))
            elif kind == "cos":
                out.append(q * np.cos(phase))
            else:
                out.append(q * np.sin(phase))
        return np.array(out).reshape((len(out),) + np.shape(x)[1:])

    def evaluate_gradient(self, x: np.ndarray) -> np.ndarray:
        """Shape ``(K, dim) + S``."""
        out = np.zeros((self.num_modes, self.grid.dim) + np.shape(x)[1:])
        for m, (kind, k, q) in enumerate(zip(self.kinds, self.wavevectors, self.amplitudes)):
            if kind == "const":
                continue
            phase = 2 * np.pi * sum(ki * xi for ki, xi in zip(k, x))
            d = -np.sin(phase) if kind == "cos" else np.cos(phase)
            for i, ki in enumerate(k):
                out[m, i] = q * 2 * np.pi * ki * d
        return out

    @property
    def kappa0(self) -> float:
        # every trig mode reaches |q| somewhere on the torus
        return float(sum(q * q for q in self.amplitudes))

    @property
    def kappa1(self) -> float:
        return float(
            sum(
                (q * 2 * np.pi * ki) ** 2
                for kind, k, q in zip(self.kinds, self.wavevectors, self.amplitudes)
                if kind != "const"
                for ki in k
            )
        )

    @property
    def w4inf_sum(self) -> float:
        """Sum over modes of the squared W^{4,inf} norm (sum of sup norms of
        all partial derivatives of order <= 4)."""
        total = 0.0
        dim = self.grid.dim
        for kind, k, q in zip(self.kinds, self.wavevectors, self.amplitudes):
            nrm = 0.0
            for alpha in itertools.product(range(5), repeat=dim):
                if sum(alpha) > 4:
                    continue
                if kind == "const" and sum(alpha) > 0:
                    continue
                nrm += abs(q) * math.prod((2 * math.pi * abs(ki)) ** a for ki, a in zip(k, alpha))
            total += nrm**2
        return total

    def G(self) -> ScalarField:
        return ScalarField(self.grid, 0.5 * (self.modes**2).sum(axis=0))

    def field(self, increments: np.ndarray) -> np.ndarray:
        """``sum_k Qe_k dbeta_k`` as an array on the x grid."""
        return np.tensordot(increments, self.modes, axes=(0, 0))


def build_basis(grid: TorusGrid, num_modes=3, decay=math.log2(5 / 3), q0=0.25,
                amplitudes=None, kind="trig") -> NoiseBasis:
    """Covariance modes ``Qe_k = q_k * trig_k``.

    By default ``q_k = q0 * (1 + |freq_k|_inf)^(-decay)``, which with the
    default parameters gives amplitudes (0.25, 0.15, 0.15) for the three
    lowest modes {1, cos 2 pi x, sin 2 pi x}.  ``amplitudes`` overrides the
    decay law.  ``kind="uniform"`` restricts to the spatially constant mode.
    """
    if num_modes < 0:
        raise ValueError("num_modes must be >= 0")
    if decay <= 0:
        raise ValueError("decay must be positive")
    if kind == "uniform":
        if num_modes > 1:
            raise ValueError("uniform basis has at most one mode")
        specs = _low_modes(grid.dim, num_modes)
    elif kind == "trig":
        specs = _low_modes(grid.dim, num_modes)
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    if amplitudes is None:
        amps = [q0 * (1 + max((abs(c) for c in k), default=0)) ** (-decay) for _, k in specs]
    else:
        amps = [float(a) for a in amplitudes]
        if len(amps) != num_modes:
            raise ValueError(f"{len(amps)} amplitudes for {num_modes} modes")
    proto = NoiseBasis(grid, tuple(s[0] for s in specs), tuple(s[1] for s in specs),
                       tuple(amps), np.zeros((0,) + grid.x_shape))
    modes = proto.evaluate(grid.x_nodes) if specs else np.zeros((0,) + grid.x_shape)
    modes.setflags(write=False)
    return NoiseBasis(proto.grid, proto.kinds, proto.wavevectors, proto.amplitudes, modes)


def constant_basis(grid: TorusGrid, c: float) -> NoiseBasis:
    return build_basis(grid, 1, amplitudes=[c], kind="uniform")


@dataclass(frozen=True, eq=False)
class WienerPath:
    seed: int | None
    dt: float
    steps: int
    increments: np.ndarray = field(repr=False)  # shape (steps, K)

    @property
    def num_modes(self) -> int:
        return self.increments.shape[1]

    def brownian(self) -> np.ndarray:
        """Cumulative path beta_k(t_n), shape (steps + 1, K), starting at 0."""
        out = np.zeros((self.steps + 1, self.num_modes))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def resampled_after(self, steps: int, seed: int) -> WienerPath:
        """Copy that keeps the first ``steps`` increments and redraws the rest."""
        inc = self.increments.copy()
        tail = np.random.default_rng(seed).standard_normal(inc[steps:].shape)
        inc[steps:] = tail * math.sqrt(self.dt)
        inc.setflags(write=False)
        return WienerPath(None, self.dt, self.steps, inc)


def sample_path(num_modes: int, dt: float, steps: int, seed: int) -> WienerPath:
    """Independent N(0, dt) increments, reproducible per seed.

    ``num_modes`` may also be a NoiseBasis.
    """
    if isinstance(num_modes, NoiseBasis):
        num_modes = num_modes.num_modes
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal((steps, num_modes)) * math.sqrt(dt)
    inc.setflags(write=False)
    return WienerPath(int(seed), float(dt), int(steps), inc)


def strat_to_ito_drift(f, G):
    """The correction ``G f`` turning ``f o Q dW`` into ``f Q dW + G f dt``."""
    g = G.values if isinstance(G, ScalarField) else np.asarray(G)
    if isinstance(G, ScalarField) and G.grid != f.grid:
        raise GridMismatchError("G and f live on different grids")
    if isinstance(f, PhaseField):
        grid = f.grid
        if g.shape != grid.x_shape:
            raise GridMismatchError("G shape does not match the grid")
        return PhaseField(grid, f.values * g.reshape(grid.x_shape + (1,) * grid.dim))
    if isinstance(f, ScalarField):
        if g.shape != f.values.shape:
            raise GridMismatchError("G shape does not match the grid")
        return ScalarField(f.grid, f.values * g)
    raise TypeError("expected ScalarField or PhaseField")


# Path replay files: little-endian header <K:u4><steps:u8><dt:f8>, then the
# (steps, K) float64 increments in row-major order.
_PATH_HEADER = struct.Struct("<IQd")


def dump_path(path: WienerPath, filename) -> None:
    with open(filename, "wb") as fh:
        fh.write(_PATH_HEADER.pack(path.num_modes, path.steps, path.dt))
        fh.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())


def load_path(filename, seed=None) -> WienerPath:
    with open(filename, "rb") as fh:
        k, steps, dt = _PATH_HEADER.unpack(fh.read(_PATH_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != k * steps:
        raise ValueError(f"truncated path file: {data.size} values, expected {k * steps}")
    inc = data.reshape(steps, k).astype(float)
    inc.setflags(write=False)
    return WienerPath(seed, dt, steps, inc)
