"""Objective evaluation against synthesizer ground truth.

ERLE compares microphone energy to residual energy over echo-active
far-end-single-talk regions (the only reading under which perfect echo
removal scores high). Near-end distortion measures how much the processed
signal deviates from the clean near end where the near end dominates.
"""

from __future__ import annotations

import json
import logging
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio_io, synth

log = logging.getLogger(__name__)

ERLE_CAP_DB = 80.0


@dataclass
class EvalReport:
    clip: str
    scenario_class: str
    erle_db: float | None = None
    erle_curve: list[float] = field(default_factory=list)
    delay_err: int | None = None
    nearend_distortion_db: float | None = None
    extras: dict = field(default_factory=dict)


def erle(mic: np.ndarray, out: np.ndarray, active_mask: np.ndarray | None = None) -> float:
    """10*log10 of mic-to-residual energy over the masked samples, capped."""
    mic = np.asarray(mic, dtype=np.float64)
    out = np.asarray(out, dtype=np.float64)
    n = min(mic.size, out.size)
    mic, out = mic[:n], out[:n]
    if active_mask is not None:
        m = np.asarray(active_mask, dtype=bool)[:n]
        mic, out = mic[m], out[m]
    e_in = np.sum(mic ** 2)
    e_out = np.sum(out ** 2)
    if e_in <= 0:
        return 0.0
    if e_out <= 0:
        return ERLE_CAP_DB
    return float(min(10.0 * np.log10(e_in / e_out), ERLE_CAP_DB))


def erle_curve(mic: np.ndarray, out: np.ndarray, sample_rate: int = 16000,
               active_mask: np.ndarray | None = None) -> list[float]:
    """Per-second ERLE values (convergence curve)."""
    n = min(len(mic), len(out))
    vals = []
    for start in range(0, n, sample_rate):
        stop = min(start + sample_rate, n)
        m = active_mask[start:stop] if active_mask is not None else None
        if m is not None and not np.any(m):
            continue
        vals.append(erle(mic[start:stop], out[start:stop], m))
    return vals


def delay_error(estimated: int, truth: int) -> int:
    return int(estimated) - int(truth)


def nearend_distortion(processed: np.ndarray, s: np.ndarray,
                       frame: int = 160) -> float | None:
    """Energy of (s_hat - s) relative to s, over frames where s dominates.

    Returns dB (negative is good), capped at -80; None if the near end is
    silent throughout.
    """
    n = min(len(processed), len(s))
    p, s = np.asarray(processed)[:n], np.asarray(s)[:n]
    active = synth._active_mask(s, frame)
    if not np.any(active):
        return None
    e_s = np.sum(s[active] ** 2)
    e_err = np.sum((p[active] - s[active]) ** 2)
    if e_s <= 0:
        return None
    if e_err <= 0:
        return -ERLE_CAP_DB
    return float(max(10.0 * np.log10(e_err / e_s), -ERLE_CAP_DB))


def echo_active_mask(echo: np.ndarray, near: np.ndarray, frame: int = 160) -> np.ndarray:
    """Echo-active AND near-end-quiet: where ERLE is meaningful."""
    return synth._active_mask(echo, frame) & ~synth._active_mask(near, frame)


def evaluate_clip(clip_dir: str | Path, process_fn, sample_rate: int = 16000) -> EvalReport:
    """Run `process_fn(mic, farend) -> (out, info)` on one suite clip."""
    man = synth.load_manifest(clip_dir)
    d = Path(man["_dir"])
    mic = audio_io.read_wav(str(d / man["files"]["mic"]), sample_rate)
    far = audio_io.read_wav(str(d / man["files"]["farend"]), sample_rate)
    near = audio_io.read_wav(str(d / man["files"]["nearend"]), sample_rate)
    echo = audio_io.read_wav(str(d / man["files"]["echo"]), sample_rate)

    out, info = process_fn(mic, far)
    rep = EvalReport(clip=d.name, scenario_class=man["class"])
    mask = echo_active_mask(echo, near)
    if np.any(mask):
        rep.erle_db = erle(mic, out, mask)
        rep.erle_curve = erle_curve(mic, out, sample_rate, mask)
    rep.nearend_distortion_db = nearend_distortion(out, near)
    if info.get("delay_estimate") is not None:
        rep.delay_err = delay_error(info["delay_estimate"], man["delay"])
    rep.extras = {k: v for k, v in info.items() if k != "delay_estimate"}
    return rep


def aggregate(reports: list[EvalReport]) -> dict:
    """Per-scenario-class means of each finite metric."""
    classes = sorted({r.scenario_class for r in reports})
    table = {}
    for cls in classes:
        rs = [r for r in reports if r.scenario_class == cls]
        entry = {"n_clips": len(rs)}
        for key in ["erle_db", "nearend_distortion_db"]:
            vals = [getattr(r, key) for r in rs if getattr(r, key) is not None]
            entry[key] = float(np.mean(vals)) if vals else None
        errs = [abs(r.delay_err) for r in rs if r.delay_err is not None]
        entry["mean_abs_delay_err"] = float(np.mean(errs)) if errs else None
        table[cls] = entry
    return table


def write_reports(reports: list[EvalReport], summary: dict, out_dir: str | Path) -> None:
    """Machine-readable outputs: JSON report plus a TSV for plotting."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"clips": [r.__dict__ for r in reports], "summary": summary}
    (out / "report.json").write_text(json.dumps(payload, indent=2, default=str))
    cols = ["clip", "class", "erle_db", "nearend_distortion_db", "delay_err"]
    lines = ["\t".join(cols)]
    for r in reports:
        lines.append("\t".join([
            r.clip, r.scenario_class,
            "" if r.erle_db is None else f"{r.erle_db:.2f}",
            "" if r.nearend_distortion_db is None else f"{r.nearend_distortion_db:.2f}",
            "" if r.delay_err is None else str(r.delay_err)]))
    (out / "summary.tsv").write_text("\n".join(lines) + "\n")


def format_summary(summary: dict) -> str:
    header = f"{'class':<18}{'clips':>6}{'ERLE dB':>10}{'NE dist dB':>12}{'|d err|':>9}"
    rows = [header, "-" * len(header)]
    for cls, e in summary.items():
        def fmt(v, spec=".2f"):
            return "-" if v is None else format(v, spec)
        rows.append(f"{cls:<18}{e['n_clips']:>6}{fmt(e['erle_db']):>10}"
                    f"{fmt(e['nearend_distortion_db']):>12}"
                    f"{fmt(e['mean_abs_delay_err'], '.1f'):>9}")
    return "\n".join(rows)


def external_scores(clip_dir: str | Path, out_wav: str | Path) -> dict:
    """Hook for external PESQ/STOI scorers; skipped when none installed."""
    scores = {}
    if shutil.which("pesq") is None:
        return scores
    man = synth.load_manifest(clip_dir)
    ref = Path(man["_dir"]) / man["files"]["nearend"]
    try:
        res = subprocess.run(["pesq", "+16000", str(ref), str(out_wav)],
                             capture_output=True, text=True, timeout=60)
        for tok in res.stdout.split():
            try:
                scores["pesq"] = float(tok)
            except ValueError:
                pass
    except (OSError, subprocess.TimeoutExpired) as e:
        log.warning("external PESQ scorer failed: %s", e)
    return scores
