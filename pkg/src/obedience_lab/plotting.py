"""SVG figures for the experiment reports (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "obedience-lab", "font.size": 9, "axes.spines.top": False,
       "axes.spines.right": False}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_geometric(report, path) -> Path:
    """Boundaries, nominal region, shrinking robust regions and the optimizers."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.6, 4.2))
        grid = np.linspace(-0.1, 1.1, 2)
        for i, b in enumerate(report.boundaries):
            c0, c1, c2 = b.coefs
            style = dict(ls="--", color="tab:orange", lw=0.9, label="obedience boundaries" if i == 0 else None)
            if abs(c2) > 1e-12:
                ax.plot(grid, -(c0 + c1 * grid) / c2, **style)
            elif abs(c1) > 1e-12:
                ax.axvline(-c0 / c1, **style)
        eps = sorted(report.regions)
        shades = plt.cm.Greens(np.linspace(0.25, 0.8, max(len(eps), 1)))
        for e, col in zip(eps, shades):
            poly = np.asarray(report.regions[e])
            if len(poly) >= 3:
                fill = "0.85" if e == 0 else col
                ax.fill(poly[:, 0], poly[:, 1], color=fill, alpha=0.8, lw=0.6, ec="0.3",
                        label="nominal region" if e == 0 else f"eps = {e:g}")
        p0 = report.p_star[0.0]
        ax.plot(*p0, "o", color="black", label="p*(0)", clip_on=False, zorder=5)
        if report.eps3 is not None and report.p_star.get(report.eps3) is not None:
            ax.plot(*report.p_star[report.eps3], "s", color="tab:red", label=f"p*({report.eps3:g})",
                    clip_on=False, zorder=5)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_aspect("equal")
        ax.set_xlabel("p1 = pi(x1 | w1)")
        ax.set_ylabel("p2 = pi(x1 | w2)")
        ax.legend(loc="upper right", fontsize=7, frameon=False)
        return _save(fig, path)


def plot_montecarlo(trajectories: dict[int, tuple[np.ndarray, np.ndarray]], summary: list[dict], path) -> Path:
    """Per-instance excess cost curves with the mean and interquartile band."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for eps, vals in trajectories.values():
            ax.plot(eps, vals, color="0.7", lw=0.6)
        rows = [r for r in summary if r["n_feasible"] > 0]
        e = np.array([r["epsilon"] for r in rows])
        if e.size:
            ax.fill_between(e, [r["q1"] for r in rows], [r["q3"] for r in rows], color="tab:blue",
                            alpha=0.25, lw=0, label="interquartile range")
            ax.plot(e, [r["mean"] for r in rows], color="tab:blue", lw=1.6, label="mean")
            ax.plot(e, [r["median"] for r in rows], color="tab:blue", lw=1.0, ls=":", label="median")
        ax.set_xlabel("eps")
        ax.set_ylabel("excess robust cost x 1000")
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def plot_sweep(grid, values, path) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.6, 3.2))
        v = np.asarray(values, dtype=float)
        ok = ~np.isnan(v)
        ax.plot(np.asarray(grid)[ok], v[ok], "o-", ms=3, color="tab:blue")
        ax.set_xlabel("eps")
        ax.set_ylabel("V*(eps)")
        return _save(fig, path)
