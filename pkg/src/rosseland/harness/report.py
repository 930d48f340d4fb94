"""Report files: ``report.json``, ``errors.csv``, ``slope.dat`` and trajectory dumps."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .. import io
from ..noise import dump_path


def jsonable(obj):
    """Recursively convert numpy values; non-finite floats become strings so
    the output stays strict JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(report: dict, out_dir, name="report.json") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(json.dumps(jsonable(report), indent=1, sort_keys=True) + "\n")
    return p


def write_errors_csv(rows, filename) -> None:
    """``rows``: iterable of (eps, path_seed, t, l1_error)."""
    with open(filename, "w") as fh:
        fh.write("eps,path_seed,t,l1_error\n")
        for eps, seed, t, e in rows:
            fh.write(f"{eps!r},{seed},{float(t)!r},{float(e)!r}\n")


def convergence_rows(report):
    for c in report.get("_cells", []):
        for t, e in zip(c["times"], c["l1"]):
            yield c["eps"], c["seed"], t, e


def write_slope_dat(report, filename) -> None:
    """Whitespace columns for gnuplot; the fit sits in comment lines."""
    lines = ["# eps sup_mean_l1 stderr log_eps log_err"]
    fit = report.get("slope")
    if fit:
        lines.append(f"# slope {fit['slope']!r} slope_se {fit['slope_se']!r} "
                     f"intercept {fit['intercept']!r}")
    else:
        lines.append(f"# slope none ({report.get('slope_note', '')})")
    for e in report["per_eps"]:
        if "sup_mean_l1" not in e:
            continue
        y = e["sup_mean_l1"]
        ly = math.log(y) if y > 0 else float("nan")
        lines.append(f"{e['eps']!r} {y!r} {e['stderr']!r} {math.log(e['eps'])!r} {ly!r}")
    Path(filename).write_text("\n".join(lines) + "\n")


def write_convergence(report, cfg, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in cfg.formats:
        written.append(write_json(report, out))
    if "csv" in cfg.formats:
        write_errors_csv(convergence_rows(report), out / "errors.csv")
        written.append(out / "errors.csv")
    if "dat" in cfg.formats:
        write_slope_dat(report, out / "slope.dat")
        written.append(out / "slope.dat")
    if cfg.dump_paths:
        written += _dump_paths(cfg, report, out)
    if "png" in cfg.formats:
        from .plotting import plot_convergence
        written += plot_convergence(report, out)
    return written


def _dump_paths(cfg, report, out):
    from .experiments import build_setup, scheme
    from ..noise import sample_path
    _, _, noise, _ = build_setup(cfg)
    steps = scheme(cfg, cfg.eps_ladder[0]).steps
    pdir = out / "paths"
    pdir.mkdir(exist_ok=True)
    files = []
    for j in range(cfg.num_paths):
        seed = cfg.seed_base + j
        p = pdir / f"path_{seed}.bin"
        dump_path(sample_path(noise.num_modes, cfg.dt, steps, seed), p)
        files.append(p)
    return files


def write_simulation(report, cfg, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = report["_run"]
    res, cs, grid, sc = run["result"], run["correctors"], run["grid"], run["scheme"]
    written = []
    if "json" in cfg.formats:
        written.append(write_json(report, out))
    if "csv" in cfg.formats:
        rows = ((report["eps"], report["path_seed"], t, e)
                for t, e in zip(res.times, res.l1_error))
        write_errors_csv(rows, out / "errors.csv")
        io.write_csv(out / "kinetic.csv", grid, res.times, res.kinetic.values)
        io.write_csv(out / "fluid.csv", grid, res.times, res.fluid.values, phase=False)
        written += [out / "errors.csv", out / "kinetic.csv", out / "fluid.csv"]
    if "bin" in cfg.formats:
        io.write_binary(out / "kinetic.bin", grid, res.times, res.kinetic.values, sc.dt,
                        res.kinetic.steps)
        io.write_binary(out / "fluid.bin", grid, res.times, res.fluid.values, sc.dt,
                        res.fluid.steps, phase=False)
        for name in ("f1", "f2", "f3"):
            io.write_binary(out / f"{name}.bin", grid, cs.times, getattr(cs, name), sc.dt,
                            res.kinetic.steps)
        dump_path(run["path"], out / "path.bin")
        written += [out / n for n in ("kinetic.bin", "fluid.bin", "f1.bin", "f2.bin",
                                      "f3.bin", "path.bin")]
    if "png" in cfg.formats:
        from .plotting import plot_simulation
        written += plot_simulation(report, out)
    return written


def write_probe(report, cfg, out_dir) -> list[Path]:
    out = Path(out_dir)
    written = []
    if "json" in cfg.formats:
        written.append(write_json(report, out))
        for name, body in report["probes"].items():
            written.append(write_json(body, out, f"probe_{name}.json"))
    if "png" in cfg.formats:
        from .plotting import plot_probes
        written += plot_probes(report, out)
    return written
