"""Command line front end.

Subcommands:
  process  full pipeline (TDC + wRLS + optional neural mask) file to file
  linear   TDC + wRLS only, reports ERLE, optional feature dumps
  tdc      delay estimation only, line-delimited JSON records
  synth    generate a labeled synthetic scenario suite
  eval     run a pipeline over a suite, write tables and figures
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import audio_io, metrics, pipeline, report, synth
from .errors import EchoforgeError


def _pipeline_config(args, model=None) -> pipeline.PipelineConfig:
    if getattr(args, "config", None):
        cfg = pipeline.parse_config_file(args.config)
    else:
        cfg = pipeline.PipelineConfig()
    if getattr(args, "beta", None) is not None:
        cfg.wrls.beta = args.beta
    if getattr(args, "taps", None) is not None:
        cfg.wrls = type(cfg.wrls)(taps=args.taps, smoothing=cfg.wrls.smoothing,
                                  beta=cfg.wrls.beta, eta=cfg.wrls.eta)
    if model is not None:
        cfg.model_path = model
    if getattr(args, "no_res", False):
        cfg.enable_fsmn = False
    return cfg


def cmd_process(args) -> int:
    cfg = _pipeline_config(args, model=args.model)
    info = pipeline.run_file(args.mic, args.farend, args.out, cfg,
                             allow_resample=args.resample)
    print(f"delay estimate : {info['delay_estimate']} samples "
          f"(confidence {info['delay_confidence']:.2f})", file=sys.stderr)
    if info["underruns"]:
        print(f"far-end underruns: {info['underruns']}", file=sys.stderr)
    if args.bench:
        print(info["latency"].format(), file=sys.stderr)
    return 0


def cmd_linear(args) -> int:
    cfg = _pipeline_config(args)
    cfg.model_path = None
    info = pipeline.run_file(args.mic, args.farend, args.out, cfg,
                             allow_resample=args.resample,
                             dump_aligned=args.dump_aligned,
                             dump_features=args.dump_features,
                             dump_spectra=args.dump_spectra)
    sr = cfg.frame.sample_rate
    mic = audio_io.read_wav(args.mic, sr, args.resample)
    out = audio_io.read_wav(args.out, sr)
    print(f"delay estimate : {info['delay_estimate']} samples")
    print(f"ERLE           : {metrics.erle(mic, out):.2f} dB")
    return 0


def cmd_tdc(args) -> int:
    cfg = _pipeline_config(args)
    sr = cfg.frame.sample_rate
    mic = audio_io.read_wav(args.mic, sr, args.resample)
    far = audio_io.read_wav(args.farend, sr, args.resample)
    from .tdc import TdcEstimator
    est = TdcEstimator(cfg.tdc, hop=cfg.frame.hop)
    hop = cfg.frame.hop
    n = min(len(mic), len(far)) // hop * hop
    for k in range(0, n, hop):
        est.push_frame(mic[k: k + hop], far[k: k + hop])
    for frame_idx, d in est.history:
        print(json.dumps({"frame": frame_idx, "tau": d.tau,
                          "confidence": round(d.confidence, 4)}))
    return 0


def cmd_synth(args) -> int:
    spec = None
    if args.spec:
        with open(args.spec) as f:
            spec = json.load(f)
    dirs = synth.gen_suite(spec, args.out)
    print(f"wrote {len(dirs)} clips under {args.out}")
    return 0


def cmd_eval(args) -> int:
    from pathlib import Path
    cfg = _pipeline_config(args, model=args.model)
    if args.stage == "linear":
        cfg.model_path = None
    suite = Path(args.suite)
    clip_dirs = sorted(d for d in suite.iterdir()
                       if (d / "manifest.json").exists())
    reports = []
    for d in clip_dirs:
        def process(mic, far):
            pipe = pipeline.AecPipeline(cfg)
            out = pipe.run(mic, far)
            return out, {"delay_estimate": pipe._tdc.state.current_delay}
        reports.append(metrics.evaluate_clip(d, process, cfg.frame.sample_rate))
    summary = metrics.aggregate(reports)
    out_dir = args.report_dir or (suite / "eval")
    metrics.write_reports(reports, summary, out_dir)
    figures = report.render_figures(reports, summary, out_dir)
    print(metrics.format_summary(summary))
    print(f"\nreport: {out_dir}/report.json, {out_dir}/summary.tsv")
    for f in figures:
        print(f"figure: {f}")
    return 0


def _add_common(p, farend=True):
    p.add_argument("--mic", required=True, help="mic WAV ('-' for stdin)")
    if farend:
        p.add_argument("--farend", required=True, help="far-end reference WAV")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--resample", action="store_true",
                   help="resample non-16kHz input instead of rejecting it")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="echoforge",
                                 description="streaming acoustic echo cancellation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", help="run the full pipeline")
    _add_common(p)
    p.add_argument("--out", required=True, help="output WAV ('-' for stdout)")
    p.add_argument("--model", help="FSMN model file (omit for linear-only)")
    p.add_argument("--no-res", action="store_true", dest="no_res",
                   help="disable the neural residual stage")
    p.add_argument("--bench", action="store_true", help="print per-stage timing")
    p.add_argument("--beta", type=float)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("linear", help="TDC + wRLS only")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float)
    p.add_argument("--taps", type=int)
    p.add_argument("--dump-aligned", help="write the aligned far end as WAV")
    p.add_argument("--dump-features", help="write un-normalized spliced features (.npy)")
    p.add_argument("--dump-spectra",
                   help="write linear-stage and aligned far-end bin spectra (.npz)")
    p.set_defaults(func=cmd_linear)

    p = sub.add_parser("tdc", help="delay estimation only")
    _add_common(p)
    p.set_defaults(func=cmd_tdc)

    p = sub.add_parser("synth", help="generate a synthetic scenario suite")
    p.add_argument("--spec", help="JSON suite spec (defaults used if omitted)")
    p.add_argument("--out", required=True, help="output suite directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="evaluate a pipeline on a suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--model", help="FSMN model file")
    p.add_argument("--stage", choices=["linear", "full"], default="full")
    p.add_argument("--config")
    p.add_argument("--report-dir")
    p.add_argument("--beta", type=float)
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EchoforgeError as e:
        print(f"echoforge: error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
