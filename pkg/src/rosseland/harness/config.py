"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

MODES = ("simulate", "converge", "validate", "probe")


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _strs(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _opt_floats(text):
    return None if text.strip().lower() in ("", "none", "auto") else _floats(text)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "converge"
    # model
    velocity: str = "sine"
    velocity_params: tuple = ()
    opacity: str = "logistic"
    opacity_params: tuple = (1.0, 2.0, 1.0)
    # noise basis
    noise_kind: str = "trig"
    noise_modes: int = 3
    noise_decay: float = math.log2(5 / 3)
    noise_q0: float = 0.25
    noise_amplitudes: tuple | None = None
    # grid and time
    dim: int = 1
    nx: int = 128
    nv: int = 64
    t_final: float = 0.5
    dt: float = 5e-4
    num_samples: int = 32
    # initial density rho_in = c0 + c1 sin(2 pi x_1)
    rho_in: tuple = (1.0, 0.5)
    # Monte Carlo
    eps_ladder: tuple = (0.4, 0.2, 0.1, 0.05)
    num_paths: int = 64
    seed_base: int = 0
    workers: int = 1
    correctors: bool = True
    # outputs
    out_dir: str = "out"
    formats: tuple = ("json", "csv", "dat", "png", "bin")
    dump_paths: bool = False
    # probes
    probe_trials: int = 10_000
    probe_deltas: tuple = (1e-1, 1e-2, 1e-3)
    dissipativity_fields: int = 1000
    averaging_alpha: float = 0.5
    averaging_eps: float = 1.0
    averaging_nx: tuple = (64, 128, 256)
    averaging_paths: int = 16
    f3_ladder: tuple = (0.4, 0.2, 0.1)
    f3_paths: int = 32

    def __post_init__(self):
        errs = []
        if self.mode not in MODES:
            errs.append(f"mode must be one of {MODES}")
        lad = self.eps_ladder
        if not lad:
            errs.append("eps_ladder is empty")
        if any(not 0 < e <= 1 for e in lad):
            errs.append("eps_ladder values must lie in (0, 1]")
        if any(b >= a for a, b in zip(lad, lad[1:])):
            errs.append("eps_ladder must be strictly decreasing")
        if self.num_paths < 1:
            errs.append("num_paths must be >= 1")
        if self.workers < 1:
            errs.append("workers must be >= 1")
        if self.dt <= 0 or self.t_final <= 0:
            errs.append("dt and t_final must be positive")
        if len(self.rho_in) != 2 or self.rho_in[0] - abs(self.rho_in[1]) < 0:
            errs.append("rho_in must be 'c0, c1' with c0 >= |c1|")
        if self.noise_amplitudes is not None and len(self.noise_amplitudes) != self.noise_modes:
            errs.append("noise_amplitudes length must equal noise_modes")
        unknown = set(self.formats) - {"json", "csv", "dat", "png", "bin"}
        if unknown:
            errs.append(f"unknown output formats {sorted(unknown)}")
        if errs:
            raise ConfigError("; ".join(errs))

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in dataclasses.fields(self)}


_PARSERS = {
    "mode": str.strip, "velocity": str.strip, "velocity_params": _floats,
    "opacity": str.strip, "opacity_params": _floats,
    "noise_kind": str.strip, "noise_modes": int, "noise_decay": float, "noise_q0": float,
    "noise_amplitudes": _opt_floats,
    "dim": int, "nx": int, "nv": int, "t_final": float, "dt": float, "num_samples": int,
    "rho_in": _floats,
    "eps_ladder": _floats, "num_paths": int, "seed_base": int, "workers": int,
    "correctors": _bool,
    "out_dir": str.strip, "formats": _strs, "dump_paths": _bool,
    "probe_trials": int, "probe_deltas": _floats, "dissipativity_fields": int,
    "averaging_alpha": float, "averaging_eps": float, "averaging_nx": _ints,
    "averaging_paths": int, "f3_ladder": _floats, "f3_paths": int,
}
assert set(_PARSERS) == {f.name for f in dataclasses.fields(ExperimentConfig)}


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Lines ``key = value``; ``#`` starts a comment; lists are comma separated.

    Unknown or repeated keys are errors.  ``overrides`` (already typed) win.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(filename=None, **overrides) -> ExperimentConfig:
    text = "" if filename is None else open(filename).read()
    return parse_config(text, **overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for k, v in cfg.as_dict().items():
        if v is None:
            v = "none"
        elif isinstance(v, list):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
