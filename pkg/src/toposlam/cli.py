"""Command-line front end.

One subcommand per pipeline stage plus full runs; every command shares
--config / --out / --seed.  Exit codes: 0 success, 2 config error,
3 data error, 4 numerical failure.
"""

import argparse
import json
import os
import sys

from .errors import (
    CanonicalizationError,
    ConfigError,
    ConsistencyError,
    DataCorruptionError,
    DataFormatError,
    EmptyDataError,
    NumericalError,
    OrderingError,
    RouteError,
)
from .pipeline import (
    BUILTIN_SCENARIOS,
    ExperimentConfig,
    LOOPS_FLAT,
    LOOPS_HIER,
    LOOPS_TRUTH,
    POSES_NOISY,
    POSES_TRUTH,
    compare_detectors,
    load_builtin_config,
    run_experiment,
    stage_aggregate,
    stage_baseline,
    stage_cluster,
    stage_detect,
    stage_graph,
    stage_optimize,
    stage_segment,
    stage_simulate,
    stage_truth,
)

_DATA_ERRORS = (
    DataFormatError,
    DataCorruptionError,
    EmptyDataError,
    OrderingError,
    CanonicalizationError,
    ConsistencyError,
    FileNotFoundError,
)


def _load_config(path: str) -> ExperimentConfig:
    if path in BUILTIN_SCENARIOS:
        return load_builtin_config(path)
    with open(path) as fh:
        doc = json.load(fh)
    if "scenario" not in doc:
        # Plain scenario file: wrap it with pipeline defaults.
        doc = {"scenario": doc}
    return ExperimentConfig.from_dict(doc)


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument(
        "--config",
        required=config_required,
        help=f"experiment config JSON, scenario JSON, or one of {BUILTIN_SCENARIOS}",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="toposlam",
        description="Topological loop detection and SE(2) pose-graph optimization",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("simulate", "generate a synthetic traversal (descriptors, poses, odometry)"),
        ("cluster", "k-means over frame descriptors with elbow-selected K"),
        ("segment", "split cluster labels into temporally contiguous sequences"),
        ("aggregate", "compute one descriptor per sequence"),
        ("graph", "build the sequence graph from aggregated descriptors"),
        ("detect", "hierarchical loop detection through the sequence graph"),
        ("baseline", "flat single-image loop detection"),
        ("truth", "radius-based ground-truth loop pairs"),
        ("run", "full pipeline with report"),
        ("compare", "side-by-side detector comparison"),
    ):
        _add_common(sub.add_parser(name, help=helptext))

    p_opt = sub.add_parser("optimize", help="build and solve the pose graph")
    _add_common(p_opt)
    p_opt.add_argument(
        "--detector", choices=("hier", "flat"), default="hier",
        help="which detector's loop pairs to use",
    )

    p_pr = sub.add_parser("eval-pr", help="precision/recall curve for detected loops")
    _add_common(p_pr)
    p_pr.add_argument("--detector", choices=("hier", "flat"), default="hier")

    p_ape = sub.add_parser("eval-ape", help="absolute pose error of trajectories")
    _add_common(p_ape)

    p_hist = sub.add_parser("eval-hist", help="rotation-difference histogram of loops")
    _add_common(p_hist)
    p_hist.add_argument("--detector", choices=("hier", "flat"), default="hier")

    p_plot = sub.add_parser("plot", help="render pr curves and trajectories to SVG")
    p_plot.add_argument("--out", required=True, help="directory holding pipeline artifacts")
    return ap


def _cmd_eval_pr(cfg: ExperimentConfig, out: str, which: str) -> None:
    import numpy as np

    from . import evaluation as _evaluation
    from .dataset import read_loop_pairs
    from .pipeline import _pair_filter, _sweep_thresholds

    loops_file = LOOPS_HIER if which == "hier" else LOOPS_FLAT
    preds = read_loop_pairs(os.path.join(out, loops_file))
    truth = set(read_loop_pairs(os.path.join(out, LOOPS_TRUTH)))
    ev = cfg.evaluation
    points = _evaluation.pr_curve(
        _pair_filter(preds, int(cfg.detector["w_frame"])),
        truth,
        _sweep_thresholds(cfg),
        mode=ev["mode"],
        w_tol=int(ev["w_tol"]),
    )
    _evaluation.write_pr(os.path.join(out, f"pr_{which}.csv"), points, mode=ev["mode"])


def _cmd_eval_ape(out: str) -> None:
    from . import evaluation as _evaluation
    from .dataset import read_poses

    truth = read_poses(os.path.join(out, POSES_TRUTH))
    reports = {}
    for label, fname in (
        ("noisy", POSES_NOISY),
        ("hier", "poses_hier.txt"),
        ("flat", "poses_flat.txt"),
    ):
        path = os.path.join(out, fname)
        if os.path.exists(path):
            reports[label] = _evaluation.ape(read_poses(path), truth, align_first=True)
    if not reports:
        raise EmptyDataError(f"no trajectory files found under {out}")
    _evaluation.write_ape(os.path.join(out, "ape.csv"), reports)


def _cmd_eval_hist(cfg: ExperimentConfig, out: str, which: str) -> None:
    from . import evaluation as _evaluation
    from .dataset import read_loop_pairs, read_poses

    loops_file = LOOPS_HIER if which == "hier" else LOOPS_FLAT
    pairs = read_loop_pairs(os.path.join(out, loops_file))
    pairs = [p for p in pairs if p.score >= float(cfg.detector["t_g"])]
    poses = read_poses(os.path.join(out, POSES_TRUTH))
    counts, edges = _evaluation.rotation_histogram(
        pairs, poses, bins=int(cfg.evaluation["hist_bins"])
    )
    _evaluation.write_hist(os.path.join(out, f"hist_{which}.csv"), counts, edges)


def _cmd_plot(out: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .dataset import read_poses
    from .evaluation import read_pr

    made_any = False
    fig, ax = plt.subplots(figsize=(5, 4))
    for which, style in (("hier", "-"), ("flat", "--")):
        path = os.path.join(out, f"pr_{which}.csv")
        if not os.path.exists(path):
            continue
        points = read_pr(path)
        ax.plot(
            [p.recall for p in points],
            [p.precision for p in points],
            style,
            label=which,
        )
        made_any = True
    if made_any:
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.legend()
        ax.set_title("loop detection")
        fig.savefig(os.path.join(out, "pr.svg"), bbox_inches="tight")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 4))
    made_traj = False
    for label, fname, style in (
        ("truth", POSES_TRUTH, "k-"),
        ("noisy", POSES_NOISY, "r:"),
        ("hier", "poses_hier.txt", "b-"),
        ("flat", "poses_flat.txt", "g--"),
    ):
        path = os.path.join(out, fname)
        if not os.path.exists(path):
            continue
        poses = read_poses(path)
        ax.plot([p.x for p in poses], [p.y for p in poses], style, label=label, linewidth=1)
        made_traj = True
    if made_traj:
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.legend(fontsize=8)
        ax.set_title("trajectories")
        fig.savefig(os.path.join(out, "traj.svg"), bbox_inches="tight")
    plt.close(fig)
    if not (made_any or made_traj):
        raise EmptyDataError(f"nothing to plot under {out}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            _cmd_plot(args.out)
            return 0
        cfg = _load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "simulate":
            stage_simulate(cfg, args.out, args.seed)
        elif args.command == "cluster":
            _, _, saturated = stage_cluster(cfg, args.out, args.seed)
            if saturated:
                print("warning: elbow curve never flattened; using k_max", file=sys.stderr)
        elif args.command == "segment":
            stage_segment(cfg, args.out)
        elif args.command == "aggregate":
            stage_aggregate(cfg, args.out, args.seed)
        elif args.command == "graph":
            stage_graph(cfg, args.out)
        elif args.command == "detect":
            stage_detect(cfg, args.out)
        elif args.command == "baseline":
            stage_baseline(cfg, args.out)
        elif args.command == "truth":
            stage_truth(cfg, args.out)
        elif args.command == "optimize":
            stage_optimize(cfg, args.out, args.detector, args.seed)
        elif args.command == "eval-pr":
            _cmd_eval_pr(cfg, args.out, args.detector)
        elif args.command == "eval-ape":
            _cmd_eval_ape(args.out)
        elif args.command == "eval-hist":
            _cmd_eval_hist(cfg, args.out, args.detector)
        elif args.command == "run":
            summary = run_experiment(cfg, args.out, args.seed)
            print(json.dumps(summary["ape"], indent=2, sort_keys=True))
        elif args.command == "compare":
            report = compare_detectors(cfg, args.out, args.seed)
            print(json.dumps(report, indent=2, sort_keys=True))
        else:  # pragma: no cover - argparse enforces choices
            raise ConfigError(f"unknown command {args.command!r}")
        return 0
    except (ConfigError, RouteError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
