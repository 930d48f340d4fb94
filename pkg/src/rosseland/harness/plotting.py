"""PNG figures rendered off-screen next to the delimited outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_convergence(report, out: Path) -> list[Path]:
    rows = [e for e in report["per_eps"] if "sup_mean_l1" in e]
    if not rows:
        return []
    files = []
    eps = np.array([e["eps"] for e in rows])
    err = np.array([e["sup_mean_l1"] for e in rows])
    se = np.array([e["stderr"] for e in rows])
    if not np.all(err > 0):
        # exact coupling: nothing to show on log axes
        return []
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar(eps, err, yerr=se, marker="o", capsize=3, label="sup_t E||f - rho||_L1")
    if "sup_mean_remainder_l1" in rows[0]:
        ax.plot(eps, [e["sup_mean_remainder_l1"] for e in rows], "s--", label="sup_t E||r||_L1")
    ax.plot(eps, err[0] * eps / eps[0], "k:", label="slope 1")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("eps")
    fit = report.get("slope")
    ax.set_title(f"slope {fit['slope']:.3f} +/- {fit['slope_se']:.3f}" if fit else "no slope fit")
    ax.legend(fontsize=8)
    files.append(_save(fig, out / "convergence.png"))

    fig, ax = plt.subplots(figsize=(5, 4))
    for e in rows:
        ax.plot(e["times"], e["mean_l1_curve"], label=f"eps={e['eps']:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("E||f - rho||_L1")
    ax.legend(fontsize=8)
    files.append(_save(fig, out / "error_curves.png"))
    return files


def plot_simulation(report, out: Path) -> list[Path]:
    res = report["_run"]["result"]
    grid = report["_run"]["grid"]
    files = []
    if grid.dim == 1:
        rho_kin = res.kinetic.values.mean(axis=2)
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
        ext = [0, 1, res.times[0], res.times[-1]]
        for ax, data, title in ((axes[0], rho_kin, "<f>(t, x)"), (axes[1], res.fluid.values, "rho(t, x)")):
            im = ax.imshow(data, origin="lower", aspect="auto", extent=ext)
            ax.set_title(title)
            ax.set_xlabel("x")
            fig.colorbar(im, ax=ax)
        axes[0].set_ylabel("t")
        files.append(_save(fig, out / "densities.png"))
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(res.times, res.l1_error, label="||f - rho||_L1")
    ax.plot(res.times, report["remainder_l1"], "--", label="||r||_L1")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    files.append(_save(fig, out / "errors.png"))
    return files


def plot_probes(report, out: Path) -> list[Path]:
    probes = report["probes"]
    files = []
    if "averaging" in probes:
        rows = [r for r in probes["averaging"]["rows"] if r["run"] == "noisy"]
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.errorbar([r["nx"] for r in rows], [r["estimate"] for r in rows],
                    yerr=[r["stderr"] for r in rows], marker="o", capsize=3)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("nx")
        ax.set_ylabel("E int ||<f>||^2_H^(alpha/2)")
        files.append(_save(fig, out / "averaging.png"))
    if "f3_scaling" in probes:
        rows = probes["f3_scaling"]["rows"]
        eps = np.array([r["eps"] for r in rows])
        val = np.array([r["sup_mean_f3_l2"] for r in rows])
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.errorbar(eps, val, yerr=[r["stderr"] for r in rows], marker="o", capsize=3,
                    label="sup_t E||f3||_L2")
        ax.plot(eps, val[0] * eps[0] / eps, "k:", label="slope -1")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("eps")
        ax.legend(fontsize=8)
        files.append(_save(fig, out / "f3_scaling.png"))
    if "accretivity" in probes:
        acc = probes["accretivity"]["model"]
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.plot([b["delta"] for b in acc], [b["max_ratio"] for b in acc], "o-")
        ax.axhline(1.0, color="r", ls=":")
        ax.set_xscale("log")
        ax.set_xlabel("delta")
        ax.set_ylabel("max J / bound")
        files.append(_save(fig, out / "accretivity.png"))
    return files
