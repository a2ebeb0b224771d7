"""
From raw descriptors to a sequence graph
=========================================

Frame descriptors are clustered with k-means (K picked by an elbow rule
over an inertia curve), the label stream is cut into temporally contiguous
sequences, each sequence gets one aggregated descriptor, and sequences
whose descriptors agree are joined into a graph.  Those graph edges are
the topological loop hypotheses that later gate image-level matching.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from toposlam.clustering import elbow_select_k
from toposlam.pipeline import load_builtin_config
from toposlam.simulator import simulate_scenario
from toposlam.topology import (
    attach_descriptors,
    build_sequence_graph,
    segment_sequences,
)

out_dir = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out_dir, exist_ok=True)

cfg = load_builtin_config("figure8")
scenario = cfg.resolve_scenario()
trav, _ = simulate_scenario(scenario, seed=0)
D = trav.descriptor_matrix()
D = D / np.linalg.norm(D, axis=1, keepdims=True)
print(f"figure8: {len(trav)} frames over {len(scenario.world.places)} places")

# Sweep k and stop where the relative inertia drop flattens out.
cl = cfg.clustering
fit, curve, saturated = elbow_select_k(
    D,
    k_min=int(cl["k_min"]),
    k_max=int(cl["k_max"]),
    tau_elbow=float(cl["tau_elbow"]),
    seed=3,
    restarts=int(cl["restarts"]),
)
print(f"elbow picked k = {fit.k} (saturated={saturated})")
for k, j in curve:
    print(f"  k={k:<3d} inertia={j:9.2f}")

# Contiguous runs of one label form sequences; short blips are dropped.
seqs = segment_sequences(fit.labels, min_len=int(cfg.segmentation["min_len"]))
lengths = [s.end_frame - s.start_frame + 1 for s in seqs]
print(f"{len(seqs)} sequences, lengths {min(lengths)}..{max(lengths)}")

# One descriptor per sequence, then join agreeing sequences.
attach_descriptors(seqs, D, method=cfg.aggregator["method"])
graph = build_sequence_graph(
    seqs, t_s=float(cfg.detector["t_s"]), w_seq=int(cfg.detector["w_seq"])
)
print(f"sequence graph: {len(graph.edges)} edges at t_s={cfg.detector['t_s']}")
for p, q, s in graph.edges[:8]:
    a, b = seqs[p], seqs[q]
    print(f"  seq {p:2d} (frames {a.start_frame:3d}-{a.end_frame:3d}) <->"
          f" seq {q:2d} (frames {b.start_frame:3d}-{b.end_frame:3d})  cos={s:.3f}")
if len(graph.edges) > 8:
    print(f"  ... and {len(graph.edges) - 8} more")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.5))
ax1.plot([k for k, _ in curve], [j for _, j in curve], "o-")
ax1.axvline(fit.k, color="tab:red", linestyle=":", label=f"selected k={fit.k}")
ax1.set_xlabel("k")
ax1.set_ylabel("inertia")
ax1.legend(fontsize=8)
ax1.set_title("elbow curve")
ax2.plot(fit.labels, ".", markersize=3)
for s in seqs:
    ax2.axvspan(s.start_frame, s.end_frame, alpha=0.08, color="tab:green")
ax2.set_xlabel("frame")
ax2.set_ylabel("cluster label")
ax2.set_title("label stream and its sequences")
fig.savefig(os.path.join(out_dir, "02_topology.png"), dpi=120, bbox_inches="tight")
print(f"wrote {os.path.join(out_dir, '02_topology.png')}")
