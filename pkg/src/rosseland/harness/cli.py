"""``rosseland-sim <simulate|converge|validate|probe> --config FILE ...``

Exit codes: 0 success, 2 validation failure, 3 solver abort, 4 probe failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from ..model import ConfigurationRejected
from ..solvers import SolverAbort
from . import experiments, report
from .config import MODES, ConfigError, load_config

EXIT_OK, EXIT_INVALID, EXIT_ABORT, EXIT_PROBE = 0, 2, 3, 4

log = logging.getLogger("rosseland")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rosseland-sim", description=__doc__.splitlines()[0])
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="flat key = value file; defaults apply when omitted")
    p.add_argument("--seed", type=int, help="overrides seed_base")
    p.add_argument("--eps", help="comma-separated eps ladder (one value for simulate)")
    p.add_argument("--paths", type=int, help="overrides num_paths")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def _summary(mode, rep) -> list[str]:
    lines = []
    if mode == "converge":
        for e in rep["per_eps"]:
            if "sup_mean_l1" in e:
                lines.append(f"eps={e['eps']:g}  sup_t E L1 = {e['sup_mean_l1']:.6e} "
                             f"(se {e['stderr']:.2e}, {e['paths_ok']} paths)")
        fit = rep.get("slope")
        lines.append(f"slope = {fit['slope']:.4f} +/- {fit['slope_se']:.4f}" if fit
                     else f"slope: {rep.get('slope_note', 'none')}")
        chk = rep.get("rate_check")
        if chk:
            lines.append(f"rate band {chk['band']}: point {'in' if chk['point_in_band'] else 'out'}, "
                         f"within 1 se {'yes' if chk['within_se'] else 'no'}")
        if rep["exact_coupling"]:
            lines.append("exact coupling")
        if rep["failures"]:
            lines.append(f"{len(rep['failures'])} cell(s) aborted, see report.json")
    elif mode == "validate":
        lines.append("all checks passed" if rep["ok"] else "FAILED: " + ", ".join(rep["failed"]))
    elif mode == "probe":
        for name, body in rep["probes"].items():
            lines.append(f"{name}: {'pass' if body['passed'] else 'FAIL'}")
    else:
        lines.append(f"eps={rep['eps']:g}  sup_t L1 = {rep['sup_l1_error']:.6e}")
    return lines


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    ladder = None
    if args.eps:
        try:
            ladder = tuple(float(x) for x in args.eps.split(","))
        except ValueError:
            log.error("--eps expects comma-separated numbers")
            return EXIT_INVALID
    try:
        cfg = load_config(args.config, mode=args.mode, seed_base=args.seed, eps_ladder=ladder,
                          num_paths=args.paths, out_dir=args.out, workers=args.workers)
        experiments.build_setup(cfg)
    except (ConfigError, OSError, ValueError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_INVALID

    code = EXIT_OK
    try:
        if cfg.mode == "validate":
            rep = experiments.run_validate(cfg)
            report.write_json(rep, cfg.out_dir)
            code = EXIT_OK if rep["ok"] else EXIT_INVALID
        elif cfg.mode == "converge":
            rep = experiments.run_convergence(cfg)
            report.write_convergence(rep, cfg, cfg.out_dir)
            code = EXIT_ABORT if rep["failures"] else EXIT_OK
        elif cfg.mode == "probe":
            rep = experiments.run_probe(cfg)
            report.write_probe(rep, cfg, cfg.out_dir)
            code = EXIT_OK if rep["ok"] else EXIT_PROBE
        else:
            rep = experiments.run_simulate(cfg)
            report.write_simulation(rep, cfg, cfg.out_dir)
    except ConfigurationRejected as exc:
        log.error("validation failure: %s", exc)
        return EXIT_INVALID
    except SolverAbort as exc:
        log.error("solver abort: %s %s", exc, exc.diagnostics)
        return EXIT_ABORT
    for line in _summary(cfg.mode, rep):
        log.info(line)
    log.info("outputs in %s", cfg.out_dir)
    return code


if __name__ == "__main__":
    sys.exit(main())
