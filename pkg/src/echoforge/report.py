"""Figure rendering for evaluation reports.

Writes PNGs next to the delimited summary so a suite run leaves both a
machine-readable table and something a human can eyeball.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import EvalReport  # noqa: E402


def render_figures(reports: list[EvalReport], summary: dict,
                   out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    curves = [(r.clip, r.erle_curve) for r in reports if r.erle_curve]
    if curves:
        fig, ax = plt.subplots(figsize=(7, 4))
        for name, curve in curves:
            ax.plot(range(1, len(curve) + 1), curve, marker="o", label=name)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("ERLE (dB)")
        ax.set_title("ERLE convergence per clip")
        ax.grid(True, alpha=0.3)
        if len(curves) <= 12:
            ax.legend(fontsize=7)
        path = out / "erle_curves.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    classes = [c for c in summary if summary[c].get("erle_db") is not None]
    if classes:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        vals = [summary[c]["erle_db"] for c in classes]
        ax.bar(classes, vals, color="#4477aa")
        ax.set_ylabel("mean ERLE (dB)")
        ax.set_title("ERLE by scenario class")
        ax.tick_params(axis="x", rotation=20)
        path = out / "erle_by_class.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    dist = [(r.clip, r.nearend_distortion_db) for r in reports
            if r.nearend_distortion_db is not None]
    if dist:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        names, vals = zip(*dist)
        ax.bar(range(len(vals)), vals, color="#cc6677")
        ax.set_xticks(range(len(vals)))
        ax.set_xticklabels(names, rotation=60, fontsize=6, ha="right")
        ax.set_ylabel("near-end distortion (dB)")
        path = out / "nearend_distortion.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written
