"""Command-line interface: ``track``, ``eval``, ``bench`` and ``selectbench``.

Exit status is 0 on success, 1 for usage errors (bad flags, bad config
values) and 2 for runtime failures (unreadable files, tracking errors).

Output formats
--------------
trajectory CSV
    header ``frame,x,y,w,h,confidence``, one row per frame, 0-based pixels.
summary
    ``key=value`` lines sorted by key.
frame metrics CSV
    header ``frame,center_error,overlap`` (averaged over runs).

All floating-point numbers are written with 6 significant digits.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .evaluation import (PRESETS, EvalReport, RunResult, make_synthetic_sequence,
                         reacquisition_delay, run_protocol, score_trajectory,
                         selection_benchmark, success_rate)
from .motion import PartBoostTracker
from .sequence_io import (build_config, fmt, load_config, load_sequence, parse_ground_truth,
                          parse_rect, preset_config, read_trajectory, write_frame_metrics,
                          write_summary, write_trajectory)

logger = logging.getLogger("dcstrack")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _rect_arg(text):
    try:
        return parse_rect(text, "--init")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_tracker_flags(p):
    g = p.add_argument_group("tracker configuration (CLI > --config file > defaults)")
    g.add_argument("--config", type=Path, metavar="FILE", help="key=value configuration file")
    g.add_argument("--sequence-preset", metavar="NAME",
                   help="bundled per-sequence preset (coke11, dollar, faceocc, sylv)")
    g.add_argument("--parts", type=int, metavar="K", help="object parts (default 5)")
    g.add_argument("--selectors", type=int, metavar="N", help="selectors per part (default 20)")
    g.add_argument("--pool", type=int, metavar="M", help="weak classifiers per part (default 200)")
    g.add_argument("--lambda", dest="lam", type=float, metavar="L", help="l1 weight (default 0.01)")
    g.add_argument("--radius", type=float, help="search radius in pixels (default 25)")
    g.add_argument("--stride", type=int, help="candidate lattice step (default 1)")
    g.add_argument("--label-mode", choices=("classifier", "geometric"),
                   help="training-sample labeling (default classifier)")
    g.add_argument("--selection", choices=("l1", "error"),
                   help="selection rule (default l1; error is the ablation)")
    g.add_argument("--per-selector-pools", action="store_true", default=None,
                   help="one pool per selector instead of one per part")
    g.add_argument("--feature-replacement", action="store_true", default=None,
                   help="replace the worst unselected pool feature after each update")
    g.add_argument("--runs", type=int, help="tracking runs to average (default 5)")
    g.add_argument("--seed", type=int, help="base seed; run i uses seed + i (default 0)")
    g.add_argument("--squared-error", action="store_true", default=None,
                   help="report squared center distances")
    g.add_argument("--dump-sparse", type=Path, metavar="DIR",
                   help="write every l1 solution as CSV into DIR")


def _config(args, **extra):
    layers = []
    try:
        if getattr(args, "sequence_preset", None):
            layers.append(preset_config(args.sequence_preset))
        if getattr(args, "config", None):
            layers.append(load_config(args.config))
    except ValueError as exc:  # bad content is a usage error, unreadable files are not
        raise UsageError(str(exc)) from None
    cli = {k: getattr(args, k, None) for k in (
        "parts", "selectors", "pool", "lam", "radius", "stride", "label_mode", "selection",
        "per_selector_pools", "feature_replacement", "runs", "seed", "squared_error",
        "dump_sparse")}
    cli.update(extra)
    layers.append(cli)
    try:
        return build_config(*layers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _print_summary(summary):
    for key in sorted(summary):
        print(f"{key}={fmt(summary[key])}")


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def cmd_track(args) -> int:
    cfg = _config(args, init=args.init)
    seq = load_sequence(args.seq)
    gt = parse_ground_truth(args.gt) if args.gt else None
    init = cfg.init
    if init is None:
        if not gt:
            raise UsageError("track needs --init (or init in the config, or --gt)")
        init = gt[0]

    def factory(seed):
        return PartBoostTracker(**cfg.tracker_params(seed))

    if gt is None:
        tracker = factory(cfg.seed)
        out = tracker.track_sequence(seq, init)
        write_trajectory(args.out, [r for r, _ in out], [c for _, c in out])
        logger.info("tracked %d frames", len(out))
        return 0
    report = run_protocol(seq, gt, factory, cfg.runs, cfg.seed, init_rect=init,
                          squared=cfg.squared_error)
    first = report.runs[0]
    write_trajectory(args.out, first.trajectory, first.confidences)
    for i, run in enumerate(report.runs[1:], 1):
        write_trajectory(_sibling(args.out, f".run{i}.csv"), run.trajectory, run.confidences)
    write_summary(args.summary or _sibling(args.out, ".summary.txt"), report.summary())
    if args.frames:
        write_frame_metrics(args.frames, report.center_errors.mean(axis=0),
                            report.overlaps.mean(axis=0))
    _print_summary(report.summary())
    return 0


def cmd_eval(args) -> int:
    traj, conf = read_trajectory(args.traj)
    gt = parse_ground_truth(args.gt)
    errs, ovs = score_trajectory(traj, gt, squared=args.squared_error)
    run = RunResult(0, traj, conf, errs, ovs, float(errs.mean()) if len(errs) else 0.0,
                    success_rate(ovs))
    report = EvalReport([run], squared_error=args.squared_error)
    summary = report.summary()
    if args.out:
        write_summary(args.out, summary)
    if args.frames:
        write_frame_metrics(args.frames, errs, ovs)
    _print_summary(summary)
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    spec = PRESETS[args.preset]
    frames, gt, occluders = make_synthetic_sequence(spec)

    def factory(seed):
        return PartBoostTracker(**cfg.tracker_params(seed))

    report = run_protocol(frames, gt, factory, cfg.runs, cfg.seed, squared=cfg.squared_error)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, run in enumerate(report.runs):
        write_trajectory(out / f"trajectory_run{i}.csv", run.trajectory, run.confidences)
    summary = report.summary()
    summary["preset"] = args.preset
    if spec.occlusion_frames is not None:
        end = spec.occlusion_frames[1]
        delays = [reacquisition_delay(r.overlaps, end) for r in report.runs]
        summary["occlusion_end"] = end
        for i, d in enumerate(delays):
            summary[f"run{i}_reacquisition_delay"] = -1 if d is None else d
        summary["max_reacquisition_delay"] = -1 if None in delays else max(delays)
    write_summary(out / "summary.txt", summary)
    write_frame_metrics(out / "frames.csv", report.center_errors.mean(axis=0),
                        report.overlaps.mean(axis=0))
    if args.export:
        _export_sequence(Path(args.export), frames, gt)
    _print_summary(summary)
    return 0


def _export_sequence(directory: Path, frames, gt):
    import numpy as np
    from PIL import Image
    directory.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(frames):
        img = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(img).save(directory / f"frame{t:04d}.png")
    with (directory / "groundtruth.txt").open("w") as fh:
        for r in gt:
            fh.write(f"{r.x},{r.y},{r.w},{r.h}\n")


def cmd_selectbench(args) -> int:
    try:
        rates = [float(v) for v in args.noise.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--noise must be comma-separated numbers, got {args.noise!r}") from None
    if not rates or any(not 0 <= r < 1 for r in rates):
        raise UsageError("--noise rates must lie in [0, 1)")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if not args.lam > 0:
        raise UsageError("--lambda must be > 0")
    rows = selection_benchmark(rates, trials=args.trials, seed=args.seed, lam=args.lam)
    lines = ["noise_rate,trials,l1_recovery,error_recovery,l1_unconverged"]
    for r in rows:
        lines.append(",".join([fmt(r.noise_rate), str(r.trials), fmt(r.l1_rate),
                               fmt(r.error_rate), str(r.l1_unconverged)]))
    text = "\n".join(lines) + "\n"
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {args.out}: {exc}") from exc
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dcstrack", description=__doc__.split("\n", 1)[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("track", help="track an image sequence")
    p.add_argument("--seq", type=Path, required=True, metavar="DIR", help="frame directory")
    p.add_argument("--init", type=_rect_arg, metavar="x,y,w,h", help="initial box (0-based)")
    p.add_argument("--gt", type=Path, help="ground truth; enables multi-run evaluation")
    p.add_argument("--out", type=Path, required=True, help="trajectory CSV")
    p.add_argument("--summary", type=Path, help="summary file (default <out>.summary.txt)")
    p.add_argument("--frames", type=Path, help="per-frame metric CSV")
    _add_tracker_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score a trajectory against ground truth")
    p.add_argument("--traj", type=Path, required=True, help="trajectory CSV")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth file")
    p.add_argument("--out", type=Path, help="summary file")
    p.add_argument("--frames", type=Path, help="per-frame metric CSV")
    p.add_argument("--squared-error", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="track and score a synthetic preset")
    p.add_argument("--preset", choices=sorted(PRESETS), default="motion")
    p.add_argument("--out", type=Path, default=Path("bench_out"), help="output directory")
    p.add_argument("--export", type=Path, metavar="DIR",
                   help="also save the frames as PNG plus groundtruth.txt")
    _add_tracker_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("selectbench", help="planted-pool label-noise selection experiment")
    p.add_argument("--noise", default="0.1,0.2,0.3", help="comma-separated label flip rates")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.01)
    p.add_argument("--out", type=Path, help="result CSV")
    p.set_defaults(func=cmd_selectbench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dcstrack {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, IndexError) as exc:
        print(f"dcstrack {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
