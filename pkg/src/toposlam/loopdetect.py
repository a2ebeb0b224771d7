"""Loop-pair detection.

Two detectors over one traversal:

- hierarchical: sequence-graph edges gate an exhaustive image-to-image
  match, so only frame pairs in same-topology sequences are compared;
- flat baseline: every earlier frame outside a temporal exclusion window
  is a retrieval candidate for every query frame.

Both emit canonical (i < j) pairs scored by descriptor cosine, sorted and
deduplicated, so downstream precision/recall treats them identically.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import LoopPair, Traversal
from .errors import ConsistencyError
from .topology import SequenceGraph


@dataclass(frozen=True)
class DetectorConfig:
    t_s: float = 0.8
    t_g: float = 0.8
    w_frame: int = 30
    w_seq: int = 10

    def __post_init__(self):
        for name in ("t_s", "t_g"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [-1, 1], got {v}")
        if self.w_frame < 0 or self.w_seq < 0:
            raise ValueError("exclusion windows must be >= 0")


def _unit_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero descriptor row")
    return X / norms


def detect_hierarchical(
    traversal: Traversal, graph: SequenceGraph, config: DetectorConfig
):
    """Image-level matching restricted to graph-joined sequence pairs.

    For every edge (p, q) each cross-sequence frame pair is scored; pairs
    with cosine >= t_g survive.  A pair reachable through several edges is
    emitted once (its score does not depend on the path).
    """
    D = _unit_rows(traversal.descriptor_matrix())
    n = len(traversal)
    for seq in graph.nodes:
        if seq.start_frame < 0 or seq.end_frame >= n:
            raise ConsistencyError(
                f"sequence {seq.seq_id} spans [{seq.start_frame}, {seq.end_frame}] "
                f"outside traversal of {n} frames"
            )
    found = {}
    for p, q, _ in graph.edges:
        a, b = graph.nodes[p], graph.nodes[q]
        sim = D[a.start_frame : a.end_frame + 1] @ D[b.start_frame : b.end_frame + 1].T
        for u, v in zip(*np.nonzero(sim >= config.t_g)):
            fi = a.start_frame + int(u)
            fj = b.start_frame + int(v)
            if fi == fj:
                continue
            key = (fi, fj) if fi < fj else (fj, fi)
            if key not in found:
                found[key] = float(np.clip(sim[u, v], -1.0, 1.0))
    return [LoopPair(i, j, found[(i, j)]) for (i, j) in sorted(found)]


def detect_flat_baseline(traversal: Traversal, config: DetectorConfig):
    """Single-image retrieval: every frame queries all earlier frames.

    Frame j matches any i < j - w_frame whose descriptor cosine reaches
    t_g.
    """
    n = len(traversal)
    if n < 2:
        raise ValueError("need at least 2 frames")
    D = _unit_rows(traversal.descriptor_matrix())
    sim = D @ D.T
    iu, ju = np.triu_indices(n, k=config.w_frame + 1)
    keep = sim[iu, ju] >= config.t_g
    scores = np.clip(sim[iu, ju][keep], -1.0, 1.0)
    return [
        LoopPair(int(i), int(j), float(s))
        for i, j, s in zip(iu[keep], ju[keep], scores)
    ]


def ground_truth_pairs(
    traversal: Traversal, radius: float = 5.0, w_frame: int = 30
):
    """All frame pairs that truly revisit: j > i + w_frame and within radius."""
    if not traversal.has_poses:
        raise ValueError("ground-truth pairs need poses on every frame")
    pos = traversal.positions()
    n = len(traversal)
    iu, ju = np.triu_indices(n, k=w_frame + 1)
    d = np.linalg.norm(pos[iu] - pos[ju], axis=1)
    keep = d <= radius
    return {LoopPair(int(i), int(j)) for i, j in zip(iu[keep], ju[keep])}
