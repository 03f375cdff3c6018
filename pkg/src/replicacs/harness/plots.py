"""Report figures rendered next to the delimited output.

Each mode gets one matplotlib figure derived from its records; figures are
written as PNG files alongside the CSV/JSON table and never feed back into
any computation.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _ok(records):
    return [r for r in records if r.get("status") == "ok"]


def _fig_path(out_path: str, tag: str) -> str:
    stem, _ = os.path.splitext(out_path)
    return f"{stem}_{tag}.png"


def _plot_predict(records, path):
    rows = _ok(records)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    pts = [r.get("point", i) for i, r in enumerate(rows)]
    ax.bar(pts, [r.get("D_rs", float("nan")) for r in rows], color="tab:blue")
    ax.set_xlabel("point")
    ax.set_ylabel("predicted distortion")
    ax.set_title("asymptotic prediction")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_simulate(records, path):
    rows = _ok(records)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for i, r in enumerate(rows):
        ax.errorbar([i], [r["D_mc"]], yerr=[r.get("D_se", 0.0)], fmt="o",
                    color="tab:red", capsize=4)
    ax.set_xlabel("run point")
    ax.set_ylabel("empirical distortion")
    ax.set_title(f"finite-size Monte Carlo (N={rows[0].get('n', '?')})"
                 if rows else "finite-size Monte Carlo")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_region(records, path):
    rows = [r for r in records if "in_region" in r]
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    for flag, color, label in ((True, "tab:green", "in region"),
                               (False, "0.8", "out of region")):
        xs = [r["rho_1"] for r in rows if bool(r["in_region"]) == flag]
        ys = [r["rho_2"] for r in rows if bool(r["in_region"]) == flag]
        ax.scatter(xs, ys, c=color, s=45, label=label, edgecolors="none")
    fx = [r["rho_1"] for r in rows if r.get("on_frontier")]
    fy = [r["rho_2"] for r in rows if r.get("on_frontier")]
    ax.scatter(fx, fy, facecolors="none", edgecolors="k", s=90,
               label="frontier")
    ax.set_xlabel(r"$\rho_1$")
    ax.set_ylabel(r"$\rho_2$")
    ax.set_title("rate-distortion region")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_tune(records, path):
    rows = _ok(records)
    star_keys = [k for k in ("lambda_star", "weight_star", "phi_star",
                             "alpha_star", "box_star")
                 if any(k in r for r in rows)]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    xs = [r.get("snr_db", r.get("point", i)) for i, r in enumerate(rows)]
    for key in star_keys:
        axes[0].plot(xs, [r.get(key) for r in rows], "o-", label=key)
    axes[0].set_xlabel("SNR (dB)")
    axes[0].set_ylabel("tuned value")
    axes[0].legend(fontsize=8)
    axes[1].plot(xs, [r.get("D_star") for r in rows], "s-", color="tab:red")
    axes[1].set_xlabel("SNR (dB)")
    axes[1].set_ylabel("tuned distortion")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_spectrum(records, path):
    rows = [r for r in records if r.get("status") == "ok" and "eigenvalue" in r]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    eigs = [r["eigenvalue"] for r in rows]
    ax.step(eigs, [r["cdf_empirical"] for r in rows], where="post",
            label="empirical", color="tab:blue")
    ax.plot(eigs, [r["cdf_law"] for r in rows], "--", color="tab:orange",
            label="asymptotic law")
    ax.set_xlabel("eigenvalue")
    ax.set_ylabel("CDF")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


_RENDERERS = {
    "predict": ("prediction", _plot_predict),
    "simulate": ("simulation", _plot_simulate),
    "sweep_region": ("region", _plot_region),
    "tune": ("tuning", _plot_tune),
    "spectrum": ("dos", _plot_spectrum),
}


def render_figures(mode: str, records, out_path: str) -> list[str]:
    """Render the mode's figure next to out_path; returns written paths."""
    tag, renderer = _RENDERERS[mode]
    path = _fig_path(out_path, tag)
    renderer(records, path)
    return [path]
