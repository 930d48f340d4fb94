"""Splitting integrators for the kinetic equation and its diffusion limit.

Both solvers advance on the same time grid and consume the increments of a
shared :class:`~rosseland.noise.WienerPath` by position (step ``n`` always
reads row ``n``), so running one solver never perturbs the other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import GridMismatchError, PhaseField, ScalarField, TorusGrid, hs_norm_sq
from .model import Model
from .noise import NoiseBasis, WienerPath


class SolverAbort(RuntimeError):
    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SchemeConfig:
    eps: float
    dt: float = 5e-4
    t_final: float = 0.5
    positivity_floor: float = 1e-10  # relative to ||f||_inf
    fluid_solver_tol: float = 1e-10
    fluid_max_iter: int = 50
    num_samples: int = 32

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        ratio = self.t_final / self.dt
        if abs(ratio - round(ratio)) > 1e-8 * max(1.0, ratio) or round(ratio) < 1:
            raise ValueError(f"t_final/dt = {ratio} is not a positive integer")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")

    @property
    def steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def sample_steps(self) -> np.ndarray:
        """Step indices of the recorded states: t = 0 plus ``num_samples``
        uniformly spaced times ending at ``t_final``."""
        n = min(self.num_samples, self.steps)
        return np.unique(np.round(np.linspace(0, self.steps, n + 1)).astype(int))

    def stamp(self) -> dict:
        return {"eps": self.eps, "dt": self.dt, "t_final": self.t_final,
                "positivity_floor": self.positivity_floor,
                "fluid_solver_tol": self.fluid_solver_tol}


@dataclass(frozen=True, eq=False)
class KineticState:
    t: float
    f: PhaseField


@dataclass(frozen=True, eq=False)
class FluidState:
    t: float
    rho: ScalarField


@dataclass(eq=False)
class Trajectory:
    """States at the sample times, plus run monitors."""

    grid: TorusGrid
    kind: str  # "kinetic" or "fluid"
    times: np.ndarray
    steps: np.ndarray
    values: np.ndarray
    stamp: dict
    monitors: dict = field(default_factory=dict)
    full: np.ndarray | None = None  # fluid only: every step, when requested

    def __len__(self):
        return len(self.times)

    def field(self, i):
        cls = PhaseField if self.kind == "kinetic" else ScalarField
        return cls(self.grid, self.values[i])

    def state(self, i):
        if self.kind == "kinetic":
            return KineticState(float(self.times[i]), self.field(i))
        return FluidState(float(self.times[i]), self.field(i))


def _check_inputs(grid: TorusGrid, cfg: SchemeConfig, model: Model, noise: NoiseBasis,
                  path: WienerPath, start=0):
    if model.grid != grid or noise.grid != grid:
        raise GridMismatchError("model, noise basis and state must share one grid")
    if path.num_modes != noise.num_modes:
        raise ValueError(f"path has {path.num_modes} modes, basis has {noise.num_modes}")
    if not math.isclose(path.dt, cfg.dt, rel_tol=1e-12):
        raise ValueError(f"path dt {path.dt} differs from scheme dt {cfg.dt}")
    if path.steps < start + 1:
        raise ValueError("noise path too short")


def noise_factor(noise: NoiseBasis, path: WienerPath, n: int) -> np.ndarray:
    """``exp(sum_k Qe_k dbeta_k(n))``: exact flow of the Stratonovich noise
    subproblem over step ``n``."""
    if noise.num_modes == 0:
        return np.ones(noise.grid.x_shape)
    return np.exp(noise.field(path.increments[n]))


class KineticIntegrator:
    """Precomputed transport phases and relaxation data for one (grid, model, eps, dt)."""

    def __init__(self, grid: TorusGrid, cfg: SchemeConfig, model: Model):
        self.grid, self.cfg, self.model = grid, cfg, model
        a = model.velocity.values  # (dim,) + v_shape
        ka = 0.0
        for i, k in enumerate(grid.deriv_wavenumbers):
            ka = ka + k.reshape(k.shape + (1,) * grid.dim) * a[i].reshape((1,) * grid.dim + grid.v_shape)
        self.half_phase = np.exp(-2j * np.pi * ka * (0.5 * cfg.dt / cfg.eps))
        self.decay_scale = cfg.dt / cfg.eps**2
        self._vshape = grid.x_shape + (1,) * grid.dim

    def transport(self, f, phase=None):
        g = self.grid
        hat = np.fft.rfftn(f, axes=g.x_axes)
        hat *= self.half_phase if phase is None else phase
        return np.fft.irfftn(hat, s=g.x_shape, axes=g.x_axes)

    def relax(self, f):
        m = f.mean(axis=self.grid.v_axes, keepdims=True)
        rate = self.model.opacity.sigma(m)
        return m + (f - m) * np.exp(-rate * self.decay_scale)

    def step(self, f, factor):
        """Strang transport/relaxation, then the geometric noise substep."""
        f = self.transport(f)
        f = self.relax(f)
        f = self.transport(f)
        return f * factor.reshape(self._vshape)


class FluidIntegrator:
    """Frozen-coefficient exponential solve with fixed-point correction.

    With ``c = sigma(rho_n)^-1`` split as ``cbar + (c - cbar)``, the step solves
    ``rho = E rho_n + dt phi1(z) div((c - cbar) <K> grad rho)`` in Fourier space,
    ``E = exp(-z)``, ``z = cbar (2 pi)^2 k.<K>k dt``.  The constant part is
    integrated exactly, so constant sigma needs no iteration.
    """

    def __init__(self, grid: TorusGrid, cfg: SchemeConfig, model: Model):
        self.grid, self.cfg, self.model = grid, cfg, model
        K = model.K_avg
        lam = 0.0
        for i, ki in enumerate(grid.wavenumbers):
            for j, kj in enumerate(grid.wavenumbers):
                lam = lam + K[i, j] * ki * kj
        self.lam = (2 * np.pi) ** 2 * np.broadcast_to(lam, grid.rfft_shape)
        self.K = K

    def _factors(self, cbar):
        z = cbar * self.lam * self.cfg.dt
        E = np.exp(-z)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(self.lam > 0, -np.expm1(-z) / (cbar * self.lam), self.cfg.dt)
        return E, w

    def _flux_div(self, c_var, rho):
        g = self.grid
        grads = _grad(rho, g)
        out = 0.0
        for i, ki in enumerate(g.deriv_wavenumbers):
            flux = sum(self.K[i, j] * grads[j] for j in range(g.dim))
            out = out + 2j * np.pi * ki * np.fft.rfftn(c_var * flux)
        return out

    def diffuse(self, rho):
        """Returns the diffused field and the number of fixed-point iterations."""
        cfg = self.cfg
        c = 1.0 / self.model.opacity.sigma(rho)
        cmax, cmin = float(c.max()), float(c.min())
        cbar = 0.5 * (cmax + cmin)
        E, w = self._factors(cbar)
        base = E * np.fft.rfftn(rho)
        new = np.fft.irfftn(base, s=self.grid.x_shape, axes=self.grid.x_axes)
        if cmax == cmin:
            return new, 0
        c_var = c - cbar
        scale = max(1.0, float(np.abs(rho).max()))
        for it in range(1, cfg.fluid_max_iter + 1):
            nxt = np.fft.irfftn(base + w * self._flux_div(c_var, new), s=self.grid.x_shape,
                                axes=self.grid.x_axes)
            delta = float(np.abs(nxt - new).max())
            new = nxt
            if delta <= cfg.fluid_solver_tol * scale:
                return new, it
        raise SolverAbort("fluid fixed-point iteration did not converge",
                          iterations=cfg.fluid_max_iter, last_update=delta,
                          coefficient_range=(cmin, cmax))

    def step(self, rho, factor):
        new, it = self.diffuse(rho)
        return new * factor, it


def _grad(values, grid):
    hat = np.fft.rfftn(values, axes=grid.x_axes)
    return [np.fft.irfftn(2j * np.pi * k * hat, s=grid.x_shape, axes=grid.x_axes)
            for k in grid.deriv_wavenumbers]


def _abort_if_nonfinite(arr, **diag):
    if not np.all(np.isfinite(arr)):
        raise SolverAbort("non-finite values", **diag)


def kinetic_step(state: KineticState, cfg: SchemeConfig, model: Model, noise: NoiseBasis,
                 path: WienerPath, step_index: int, integrator=None) -> KineticState:
    """One step ``t_n -> t_{n+1}``.

    Half transport (exact in Fourier), exact relaxation with the rate frozen
    at the substep start, half transport, then ``f <- f exp(sum_k Qe_k dbeta_k)``.
    """
    grid = state.f.grid
    _check_inputs(grid, cfg, model, noise, path, step_index)
    integ = integrator or KineticIntegrator(grid, cfg, model)
    f = integ.transport(state.f.values)
    _abort_if_nonfinite(f, step=step_index, substep="transport")
    f = integ.relax(f)
    _abort_if_nonfinite(f, step=step_index, substep="relaxation")
    f = integ.transport(f)
    _abort_if_nonfinite(f, step=step_index, substep="transport")
    f = f * noise_factor(noise, path, step_index).reshape(grid.x_shape + (1,) * grid.dim)
    _abort_if_nonfinite(f, step=step_index, substep="noise")
    return KineticState((step_index + 1) * cfg.dt, PhaseField(grid, f))


def kinetic_solve(f0: PhaseField, cfg: SchemeConfig, model: Model, noise: NoiseBasis,
                  path: WienerPath) -> Trajectory:
    """Advance ``f0`` to ``t_final``, keeping the sample times.

    Monitors: ``l2_sq`` (||f||^2 at each sample), ``sup_l2_sq``, ``mass``
    (integral of f at each sample) and ``positivity_violations`` (list of
    ``(step, min f)`` where ``min f < -floor ||f||_inf``; never clipped).
    """
    grid = f0.grid
    _check_inputs(grid, cfg, model, noise, path)
    if path.steps < cfg.steps:
        raise ValueError(f"path covers {path.steps} steps, need {cfg.steps}")
    if f0.values.min() < 0:
        raise ValueError("initial data must be nonnegative")
    integ = KineticIntegrator(grid, cfg, model)
    samples = cfg.sample_steps
    out = np.empty((len(samples),) + grid.phase_shape)
    f = np.array(f0.values)
    out[0] = f
    j = 1
    violations = []
    sup_l2 = float((f**2).mean())
    for n in range(cfg.steps):
        f = integ.step(f, noise_factor(noise, path, n))
        if not np.all(np.isfinite(f)):
            raise SolverAbort("non-finite kinetic state", step=n, t=(n + 1) * cfg.dt, eps=cfg.eps)
        fmin = float(f.min())
        if fmin < 0 and fmin < -cfg.positivity_floor * float(np.abs(f).max()):
            violations.append((n + 1, fmin))
        l2 = float((f**2).mean())
        if l2 > sup_l2:
            sup_l2 = l2
        if j < len(samples) and n + 1 == samples[j]:
            out[j] = f
            j += 1
    l2_sq = (out**2).reshape(len(samples), -1).mean(axis=1)
    mass = out.reshape(len(samples), -1).mean(axis=1)
    return Trajectory(grid, "kinetic", samples * cfg.dt, samples, out, cfg.stamp(),
                      {"l2_sq": l2_sq, "sup_l2_sq": sup_l2, "mass": mass,
                       "positivity_violations": violations})


def fluid_step(state: FluidState, cfg: SchemeConfig, model: Model, noise: NoiseBasis,
               path: WienerPath, step_index: int, integrator=None) -> FluidState:
    """Diffusion substep (semi-implicit), then the geometric noise substep
    with the same increments as the kinetic solver."""
    grid = state.rho.grid
    _check_inputs(grid, cfg, model, noise, path, step_index)
    integ = integrator or FluidIntegrator(grid, cfg, model)
    rho, _ = integ.step(np.array(state.rho.values), noise_factor(noise, path, step_index))
    _abort_if_nonfinite(rho, step=step_index, substep="fluid")
    return FluidState((step_index + 1) * cfg.dt, ScalarField(grid, rho))


def fluid_solve(rho0: ScalarField, cfg: SchemeConfig, model: Model, noise: NoiseBasis,
                path: WienerPath, keep_all=False) -> Trajectory:
    grid = rho0.grid
    _check_inputs(grid, cfg, model, noise, path)
    if path.steps < cfg.steps:
        raise ValueError(f"path covers {path.steps} steps, need {cfg.steps}")
    integ = FluidIntegrator(grid, cfg, model)
    samples = cfg.sample_steps
    out = np.empty((len(samples),) + grid.x_shape)
    full = np.empty((cfg.steps + 1,) + grid.x_shape) if keep_all else None
    rho = np.array(rho0.values)
    out[0] = rho
    if keep_all:
        full[0] = rho
    j = 1
    iters = 0
    for n in range(cfg.steps):
        rho, it = integ.step(rho, noise_factor(noise, path, n))
        iters = max(iters, it)
        if not np.all(np.isfinite(rho)):
            raise SolverAbort("non-finite fluid state", step=n, t=(n + 1) * cfg.dt)
        if keep_all:
            full[n + 1] = rho
        if j < len(samples) and n + 1 == samples[j]:
            out[j] = rho
            j += 1
    mass = out.reshape(len(samples), -1).mean(axis=1)
    return Trajectory(grid, "fluid", samples * cfg.dt, samples, out, cfg.stamp(),
                      {"mass": mass, "max_fixed_point_iterations": iters,
                       "h2_sq": np.array([_h2_sq(r, grid) for r in out])}, full)


def _h2_sq(values, grid):
    return hs_norm_sq(values, grid, 2.0)


@dataclass(eq=False)
class CoupledResult:
    kinetic: Trajectory
    fluid: Trajectory
    times: np.ndarray
    l1_error: np.ndarray

    @property
    def sup_error(self) -> float:
        return float(self.l1_error.max())


def l1_distance(kinetic: Trajectory, fluid: Trajectory) -> np.ndarray:
    g = kinetic.grid
    if not np.array_equal(kinetic.steps, fluid.steps):
        raise ValueError("trajectories sampled at different times")
    diff = kinetic.values - fluid.values.reshape(fluid.values.shape + (1,) * g.dim)
    return np.abs(diff).reshape(len(kinetic), -1).mean(axis=1)


def coupled_run(cfg: SchemeConfig, model: Model, noise: NoiseBasis, path: WienerPath,
                rho_in: ScalarField, keep_fluid_path=False) -> CoupledResult:
    """Kinetic and fluid solves from ``f(0) = rho(0) = rho_in`` on one path."""
    kin = kinetic_solve(rho_in.lift(), cfg, model, noise, path)
    flu = fluid_solve(rho_in, cfg, model, noise, path, keep_all=keep_fluid_path)
    return CoupledResult(kin, flu, kin.times, l1_distance(kin, flu))
