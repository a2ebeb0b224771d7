"""End-to-end experiment orchestration.

One experiment config drives: simulate (or ingest) -> normalize ->
cluster with elbow -> segment -> aggregate -> sequence graph -> detect
(hierarchical and flat baseline) -> synthesize loop measurements ->
build and optimize pose graphs -> evaluate PR / APE / rotation
histograms.  Every stage persists its artifact in the output directory,
and each stage can be rerun standalone from those files via the CLI.

Seed discipline: the root seed S drives descriptor noise; odometry noise
uses S+1, loop measurement noise S+2, clustering restarts S+3 and the
vlad codebook S+4, so stages never share a stream.
"""

import json
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import clustering as _clustering
from . import evaluation as _evaluation
from . import loopdetect as _loopdetect
from . import posegraph as _posegraph
from . import simulator as _simulator
from . import topology as _topology
from .dataset import (
    Traversal,
    read_descriptors,
    read_loop_pairs,
    read_poses,
    write_descriptors,
    write_loop_pairs,
    write_poses,
)
from .errors import ConfigError
from .se2 import dead_reckon

FRAMES_TDSC = "frames.tdsc"
POSES_TRUTH = "poses_truth.txt"
POSES_NOISY = "poses_noisy.txt"
ODOM_TXT = "odom.txt"
CLUSTERS_CSV = "clusters.csv"
ELBOW_CSV = "elbow.csv"
SEQUENCES_CSV = "sequences.csv"
SEQDESC_TDSC = "seqdesc.tdsc"
SEQGRAPH_CSV = "seqgraph.csv"
LOOPS_HIER = "loops_hier.csv"
LOOPS_FLAT = "loops_flat.csv"
LOOPS_TRUTH = "loops_truth.csv"
REPORT_JSON = "report.json"


def _take(d: dict, allowed: dict, where: str) -> dict:
    """Merge user dict over defaults, rejecting unknown keys."""
    d = dict(d or {})
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    out = dict(allowed)
    out.update(d)
    return out


@dataclass
class ExperimentConfig:
    """Validated experiment description; see module docstring for stages."""

    scenario: dict
    clustering: dict = field(default_factory=dict)
    segmentation: dict = field(default_factory=dict)
    aggregator: dict = field(default_factory=dict)
    detector: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    name: str = ""

    _CLUSTERING = {
        "k_min": 2, "k_max": None, "tau_elbow": 0.1,
        "restarts": 10, "max_iters": 100, "tol": 1e-4,
    }
    _SEGMENTATION = {"min_len": 2}
    _AGGREGATOR = {"method": "mean", "length": 5, "vlad_words": 8}
    _DETECTOR = {"t_s": 0.8, "t_g": 0.8, "w_frame": 30, "w_seq": 10}
    _SOLVER = {
        "max_iters": 50, "lambda_init": 1e-4, "lambda_factor": 10.0,
        "tol_dx": 1e-8, "robust_kernel": "huber", "huber_delta": 1.0,
        "loop_info": 100.0,
    }
    _EVALUATION = {
        "mode": "exact", "w_tol": 2, "hist_bins": 18,
        "pr_thresholds": "auto", "sweep_floor": 0.0, "sweep_points": 201,
        "target_precision": 0.9,
    }

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        cfg = dict(cfg)
        version = cfg.pop("version", 1)
        if version != 1:
            raise ConfigError(f"unsupported experiment config version {version}")
        name = str(cfg.pop("name", ""))
        if "scenario" not in cfg:
            raise ConfigError("experiment config needs a 'scenario' section")
        scenario = cfg.pop("scenario")
        known = {
            "clustering": cls._CLUSTERING,
            "segmentation": cls._SEGMENTATION,
            "aggregator": cls._AGGREGATOR,
            "detector": cls._DETECTOR,
            "solver": cls._SOLVER,
            "evaluation": cls._EVALUATION,
        }
        sections = {}
        for key, defaults in known.items():
            sections[key] = _take(cfg.pop(key, {}), defaults, key)
        if cfg:
            raise ConfigError(f"unknown experiment config keys: {sorted(cfg)}")
        out = cls(scenario=scenario, name=name, **sections)
        out.resolve_scenario()  # fail fast on a bad scenario
        if out.aggregator["method"] not in _topology.AGGREGATORS:
            raise ConfigError(f"unknown aggregator {out.aggregator['method']!r}")
        if out.evaluation["mode"] not in ("exact", "tolerant"):
            raise ConfigError(f"unknown evaluation mode {out.evaluation['mode']!r}")
        return out

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "name": self.name,
            "scenario": self.scenario,
            "clustering": dict(self.clustering),
            "segmentation": dict(self.segmentation),
            "aggregator": dict(self.aggregator),
            "detector": dict(self.detector),
            "solver": dict(self.solver),
            "evaluation": dict(self.evaluation),
        }

    def resolve_scenario(self) -> _simulator.Scenario:
        sc = self.scenario
        if "file" in sc:
            if len(sc) != 1:
                raise ConfigError("scenario 'file' reference takes no other keys")
            loaded = ExperimentConfig.from_json(sc["file"])
            return loaded.resolve_scenario()
        if "builtin" in sc:
            if len(sc) != 1:
                raise ConfigError("scenario 'builtin' reference takes no other keys")
            loaded = load_builtin_config(sc["builtin"])
            return loaded.resolve_scenario()
        return _simulator.scenario_from_dict(sc)

    def detector_config(self) -> _loopdetect.DetectorConfig:
        return _loopdetect.DetectorConfig(
            t_s=float(self.detector["t_s"]),
            t_g=float(self.detector["t_g"]),
            w_frame=int(self.detector["w_frame"]),
            w_seq=int(self.detector["w_seq"]),
        )

    def solver_config(self) -> _posegraph.SolverConfig:
        s = self.solver
        return _posegraph.SolverConfig(
            max_iters=int(s["max_iters"]),
            lambda_init=float(s["lambda_init"]),
            lambda_factor=float(s["lambda_factor"]),
            tol_dx=float(s["tol_dx"]),
            robust_kernel=str(s["robust_kernel"]),
            huber_delta=float(s["huber_delta"]),
        )


BUILTIN_SCENARIOS = ("figure8", "corridor", "grid")


def load_builtin_config(name: str) -> ExperimentConfig:
    """Load one of the packaged reference experiment configs."""
    if name not in BUILTIN_SCENARIOS:
        raise ConfigError(
            f"unknown builtin scenario {name!r}; have {BUILTIN_SCENARIOS}"
        )
    ref = resources.files("toposlam").joinpath("scenarios", f"{name}.json")
    return ExperimentConfig.from_dict(json.loads(ref.read_text()))


# ---------------------------------------------------------------------------
# shared helpers


def _normalized32(matrix: np.ndarray) -> np.ndarray:
    X = np.asarray(matrix, dtype=float)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero descriptor row at pipeline entry")
    return (X / norms).astype(np.float32)


def _load_traversal(out_dir) -> Traversal:
    D = read_descriptors(os.path.join(out_dir, FRAMES_TDSC))
    poses = read_poses(os.path.join(out_dir, POSES_TRUTH))
    return Traversal.from_arrays(D.astype(float), poses)


def _pair_filter(pairs, w_frame: int):
    """Keep pairs outside the temporal exclusion window.

    Detector contracts differ (the hierarchical detector has no frame
    window); metrics compare both detectors against window-excluded
    truth, so the same window is applied to every prediction list.
    """
    return [p for p in pairs if p.j - p.i > w_frame]


def _sweep_thresholds(cfg: ExperimentConfig):
    ev = cfg.evaluation
    if ev["pr_thresholds"] == "auto":
        return np.linspace(float(ev["sweep_floor"]), 1.0, int(ev["sweep_points"]))
    return np.asarray([float(t) for t in ev["pr_thresholds"]], dtype=float)


# ---------------------------------------------------------------------------
# stages (file-driven, rerunnable individually)


def stage_simulate(cfg: ExperimentConfig, out_dir, seed: int):
    scenario = cfg.resolve_scenario()
    trav, odom = _simulator.simulate_scenario(scenario, seed)
    D32 = _normalized32(trav.descriptor_matrix())
    write_descriptors(D32, os.path.join(out_dir, FRAMES_TDSC))
    write_poses(trav.pose_array(), os.path.join(out_dir, POSES_TRUTH))
    write_poses(odom, os.path.join(out_dir, ODOM_TXT))
    write_poses(dead_reckon(np.zeros(3), odom), os.path.join(out_dir, POSES_NOISY))
    return trav, odom


def stage_cluster(cfg: ExperimentConfig, out_dir, seed: int):
    D = read_descriptors(os.path.join(out_dir, FRAMES_TDSC)).astype(float)
    c = cfg.clustering
    fit, curve, saturated = _clustering.elbow_select_k(
        D,
        k_min=int(c["k_min"]),
        k_max=None if c["k_max"] is None else int(c["k_max"]),
        tau_elbow=float(c["tau_elbow"]),
        seed=seed + 3,
        max_iters=int(c["max_iters"]),
        tol=float(c["tol"]),
        restarts=int(c["restarts"]),
    )
    _clustering.write_clusters(os.path.join(out_dir, CLUSTERS_CSV), fit.labels)
    _clustering.write_elbow(os.path.join(out_dir, ELBOW_CSV), curve)
    return fit, curve, saturated


def stage_segment(cfg: ExperimentConfig, out_dir):
    labels = _clustering.read_clusters(os.path.join(out_dir, CLUSTERS_CSV))
    seqs = _topology.segment_sequences(labels, int(cfg.segmentation["min_len"]))
    _topology.write_sequences(os.path.join(out_dir, SEQUENCES_CSV), seqs)
    return seqs


def stage_aggregate(cfg: ExperimentConfig, out_dir, seed: int):
    D = read_descriptors(os.path.join(out_dir, FRAMES_TDSC)).astype(float)
    seqs = _topology.read_sequences(os.path.join(out_dir, SEQUENCES_CSV))
    agg = cfg.aggregator
    codebook = None
    if agg["method"] == "vlad":
        codebook = _topology.learn_codebook(D, int(agg["vlad_words"]), seed=seed + 4)
    _topology.attach_descriptors(
        seqs, D, method=agg["method"], length=int(agg["length"]), codebook=codebook
    )
    if seqs:
        write_descriptors(
            np.stack([s.descriptor for s in seqs]).astype(np.float32),
            os.path.join(out_dir, SEQDESC_TDSC),
        )
    return seqs


def stage_graph(cfg: ExperimentConfig, out_dir):
    seqs = _topology.read_sequences(os.path.join(out_dir, SEQUENCES_CSV))
    if seqs:
        S = read_descriptors(os.path.join(out_dir, SEQDESC_TDSC)).astype(float)
        for seq, row in zip(seqs, S):
            seq.descriptor = row
    graph = _topology.build_sequence_graph(
        seqs, t_s=float(cfg.detector["t_s"]), w_seq=int(cfg.detector["w_seq"])
    )
    _topology.write_seqgraph(os.path.join(out_dir, SEQGRAPH_CSV), graph)
    return graph


def _detect_floor_config(cfg: ExperimentConfig) -> _loopdetect.DetectorConfig:
    """Detector run at the sweep floor so one pass serves every threshold."""
    floor = min(float(cfg.detector["t_g"]), float(cfg.evaluation["sweep_floor"]))
    return _loopdetect.DetectorConfig(
        t_s=float(cfg.detector["t_s"]),
        t_g=floor,
        w_frame=int(cfg.detector["w_frame"]),
        w_seq=int(cfg.detector["w_seq"]),
    )


def stage_detect(cfg: ExperimentConfig, out_dir):
    trav = _load_traversal(out_dir)
    seqs = _topology.read_sequences(os.path.join(out_dir, SEQUENCES_CSV))
    edges = _topology.read_seqgraph_edges(os.path.join(out_dir, SEQGRAPH_CSV))
    graph = _topology.SequenceGraph(seqs, edges)
    pairs = _loopdetect.detect_hierarchical(trav, graph, _detect_floor_config(cfg))
    write_loop_pairs(pairs, os.path.join(out_dir, LOOPS_HIER))
    return pairs


def stage_baseline(cfg: ExperimentConfig, out_dir):
    trav = _load_traversal(out_dir)
    pairs = _loopdetect.detect_flat_baseline(trav, _detect_floor_config(cfg))
    write_loop_pairs(pairs, os.path.join(out_dir, LOOPS_FLAT))
    return pairs


def stage_truth(cfg: ExperimentConfig, out_dir):
    trav = _load_traversal(out_dir)
    scenario = cfg.resolve_scenario()
    truth = _loopdetect.ground_truth_pairs(
        trav, radius=scenario.loop_radius, w_frame=int(cfg.detector["w_frame"])
    )
    write_loop_pairs(sorted(truth), os.path.join(out_dir, LOOPS_TRUTH))
    return truth


def synthesize_measurements(cfg: ExperimentConfig, traversal, pairs, seed: int):
    """Loop measurements for the detected pairs at the operating t_g."""
    scenario = cfg.resolve_scenario()
    t_g = float(cfg.detector["t_g"])
    out = []
    n_false = 0
    for pair in pairs:
        if pair.score < t_g:
            continue
        meas, valid = _simulator.synthesize_loop_measurement(
            traversal,
            pair,
            ground_truth_radius=scenario.loop_radius,
            sigma_loop=scenario.sigma_loop,
            seed=seed + 2,
        )
        if not valid:
            n_false += 1
        out.append((pair, meas))
    return out, n_false


def build_loop_graph(cfg: ExperimentConfig, odometry, loops) -> _posegraph.PoseGraph:
    scenario = cfg.resolve_scenario()
    info_odom = _posegraph.info_from_sigmas(
        scenario.odometry.sigma_t, scenario.odometry.sigma_r
    )
    loop_info = float(cfg.solver["loop_info"])
    info_loop = np.diag([loop_info, loop_info, loop_info])
    return _posegraph.build_graph(odometry, loops, info_odom, info_loop)


def stage_optimize(cfg: ExperimentConfig, out_dir, which: str, seed: int):
    """Build and solve the pose graph for one detector's loop pairs.

    ``which`` is "hier" or "flat".  Reads odometry, detected loops and
    ground-truth poses (for measurement synthesis); writes the built
    graph, the optimized trajectory and the iteration log.
    """
    if which not in ("hier", "flat"):
        raise ConfigError(f"optimize stage got unknown detector {which!r}")
    trav = _load_traversal(out_dir)
    odom = np.array([p.to_array() for p in read_poses(os.path.join(out_dir, ODOM_TXT))])
    loops_file = LOOPS_HIER if which == "hier" else LOOPS_FLAT
    pairs = read_loop_pairs(os.path.join(out_dir, loops_file))
    loops, _ = synthesize_measurements(cfg, trav, pairs, seed)
    graph = build_loop_graph(cfg, odom, loops)
    _posegraph.save_graph(os.path.join(out_dir, f"graph_{which}.g2o"), graph)
    solved, log = _posegraph.optimize(graph, cfg.solver_config())
    write_poses(solved.vertices, os.path.join(out_dir, f"poses_{which}.txt"))
    _write_solver_log(os.path.join(out_dir, f"solver_{which}.csv"), log)
    return solved, log


def _write_solver_log(path, log) -> None:
    with open(path, "w") as fh:
        fh.write("iter,cost,lambda,dx_norm,accepted\n")
        for rec in log:
            fh.write(
                f"{rec['iter']},{rec['cost']:.9e},{rec['lambda']:.3e},"
                f"{rec['dx_norm']:.9e},{int(rec['accepted'])}\n"
            )


# ---------------------------------------------------------------------------
# full runs


def run_experiment(cfg: ExperimentConfig, out_dir, seed: int = 0) -> dict:
    """Execute every stage and write a summary report.

    Returns the report dict (also persisted as report.json).  The
    pose-dependent math runs on full-precision in-memory values; the
    persisted artifacts quantize poses to 9 decimals, so a stage rerun
    from files reproduces descriptor-chain artifacts exactly and pose
    artifacts to that precision.
    """
    os.makedirs(out_dir, exist_ok=True)
    scenario = cfg.resolve_scenario()
    trav, odom = stage_simulate(cfg, out_dir, seed)
    D = read_descriptors(os.path.join(out_dir, FRAMES_TDSC)).astype(float)
    trav = Traversal.from_arrays(D, trav.pose_array())

    fit, curve, saturated = stage_cluster(cfg, out_dir, seed)
    seqs = stage_segment(cfg, out_dir)
    seqs = stage_aggregate(cfg, out_dir, seed)
    graph = stage_graph(cfg, out_dir)

    det_floor = _detect_floor_config(cfg)
    pairs_hier = _loopdetect.detect_hierarchical(trav, graph, det_floor)
    write_loop_pairs(pairs_hier, os.path.join(out_dir, LOOPS_HIER))
    pairs_flat = _loopdetect.detect_flat_baseline(trav, det_floor)
    write_loop_pairs(pairs_flat, os.path.join(out_dir, LOOPS_FLAT))

    w_frame = int(cfg.detector["w_frame"])
    truth = _loopdetect.ground_truth_pairs(
        trav, radius=scenario.loop_radius, w_frame=w_frame
    )
    write_loop_pairs(sorted(truth), os.path.join(out_dir, LOOPS_TRUTH))

    noisy = dead_reckon(np.zeros(3), odom)
    truth_poses = trav.pose_array()
    reports = {"noisy": _evaluation.ape(noisy, truth_poses, align_first=True)}

    summary = {
        "name": cfg.name,
        "seed": seed,
        "n_frames": len(trav),
        "selected_k": fit.k,
        "elbow_saturated": bool(saturated),
        "n_sequences": len(seqs),
        "n_graph_edges": len(graph.edges),
        "n_truth_pairs": len(truth),
        "detectors": {},
    }

    thresholds = _sweep_thresholds(cfg)
    ev = cfg.evaluation
    for which, pairs in (("hier", pairs_hier), ("flat", pairs_flat)):
        filtered = _pair_filter(pairs, w_frame)
        points = _evaluation.pr_curve(
            filtered, truth, thresholds, mode=ev["mode"], w_tol=int(ev["w_tol"])
        )
        _evaluation.write_pr(
            os.path.join(out_dir, f"pr_{which}.csv"), points, mode=ev["mode"]
        )
        op = _evaluation.operating_point(points, float(ev["target_precision"]))
        op_pairs = [p for p in filtered if p.score >= op.threshold]
        counts, edges = _evaluation.rotation_histogram(
            op_pairs, truth_poses, bins=int(ev["hist_bins"])
        )
        _evaluation.write_hist(os.path.join(out_dir, f"hist_{which}.csv"), counts, edges)

        loops, n_false = synthesize_measurements(cfg, trav, pairs, seed)
        graph_pg = build_loop_graph(cfg, odom, loops)
        _posegraph.save_graph(os.path.join(out_dir, f"graph_{which}.g2o"), graph_pg)
        solved, log = _posegraph.optimize(graph_pg, cfg.solver_config())
        write_poses(solved.vertices, os.path.join(out_dir, f"poses_{which}.txt"))
        _write_solver_log(os.path.join(out_dir, f"solver_{which}.csv"), log)
        reports[which] = _evaluation.ape(solved.vertices, truth_poses, align_first=True)

        summary["detectors"][which] = {
            "n_candidates": len(filtered),
            "n_loop_edges": len(loops),
            "n_false_measurements": n_false,
            "operating_threshold": op.threshold,
            "operating_precision": op.precision,
            "operating_recall": op.recall,
            "max_recall": max(p.recall for p in points) if points else 0.0,
            "hist_mass_150_180": _evaluation.histogram_mass(counts, edges, 150.0, 180.0),
            "ape_mean": reports[which].mean,
            "solver_iters": len(log) - 1,
            "final_cost": log[-1]["cost"] if log else 0.0,
        }

    _evaluation.write_ape(os.path.join(out_dir, "ape.csv"), reports)
    summary["ape"] = {
        label: {"min": r.min, "mean": r.mean, "max": r.max, "rmse": r.rmse}
        for label, r in reports.items()
    }
    if reports["noisy"].mean > 0:
        summary["ape_improvement_hier"] = (
            reports["noisy"].mean - reports["hier"].mean
        ) / reports["noisy"].mean
    else:
        summary["ape_improvement_hier"] = 0.0

    with open(os.path.join(out_dir, REPORT_JSON), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def compare_detectors(cfg: ExperimentConfig, out_dir, seed: int = 0) -> dict:
    """Side-by-side detector report on identical inputs.

    Runs the full pipeline once (both detectors share every upstream
    stage and the t_g sweep) and returns the comparison block: per
    detector PR operating point, histogram mass and optimized APE.
    """
    summary = run_experiment(cfg, out_dir, seed)
    return {
        "name": summary["name"],
        "seed": summary["seed"],
        "n_truth_pairs": summary["n_truth_pairs"],
        "hier": summary["detectors"]["hier"],
        "flat": summary["detectors"]["flat"],
        "ape": summary["ape"],
    }
