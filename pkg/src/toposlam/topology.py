"""Temporal segmentation of clusters and the sequence graph.

A sequence is a maximal run of consecutive frames sharing one cluster id.
Each sequence is summarized by a single aggregated descriptor; sequences
whose descriptors agree (cosine at or above t_s) are joined by a graph
edge, declaring that they view the same place.
"""

from dataclasses import dataclass, field

import numpy as np

from .clustering import kmeans
from .errors import DataFormatError


@dataclass
class Sequence:
    """Maximal run [start_frame, end_frame] of frames in one cluster."""

    seq_id: int
    cluster_id: int
    start_frame: int
    end_frame: int
    descriptor: np.ndarray = None

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValueError(
                f"sequence {self.seq_id}: start {self.start_frame} > end {self.end_frame}"
            )

    def __len__(self) -> int:
        return self.end_frame - self.start_frame + 1

    @property
    def frames(self) -> range:
        return range(self.start_frame, self.end_frame + 1)


@dataclass
class SequenceGraph:
    """Sequences as nodes; edges join pairs judged same-place.

    Edges are canonical (p < q, sorted, no self-edges) and every stored
    similarity meets the threshold used to build the graph.
    """

    nodes: list
    edges: list = field(default_factory=list)


def segment_sequences(labels, min_len: int = 2):
    """Split a per-frame label stream into maximal constant runs.

    Runs shorter than ``min_len`` are dropped.  Returned sequences are
    ordered by start frame and renumbered 0..P-1.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("labels must be non-empty")
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    runs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            runs.append((int(labels[start]), start, i - 1))
            start = i
    out = []
    for cluster_id, s, e in runs:
        if e - s + 1 >= min_len:
            out.append(Sequence(len(out), cluster_id, s, e))
    return out


def _normalize_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero descriptor row")
    return X / norms


def _aggregate_mean(X: np.ndarray) -> np.ndarray:
    m = _normalize_rows(X).mean(axis=0)
    norm = np.linalg.norm(m)
    if norm == 0:
        raise ValueError("mean aggregate vanished (rows cancel exactly)")
    return m / norm


def _aggregate_concat_cap(X: np.ndarray, length: int) -> np.ndarray:
    if length < 1:
        raise ValueError("concat_cap length must be >= 1")
    if X.shape[0] >= length:
        rows = X[:length]
    else:
        pad = np.repeat(X[-1:], length - X.shape[0], axis=0)
        rows = np.vstack([X, pad])
    flat = rows.reshape(-1)
    return flat / np.linalg.norm(flat)


def _aggregate_vlad(X: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    codebook = np.asarray(codebook, dtype=float)
    if codebook.ndim != 2 or codebook.shape[1] != X.shape[1]:
        raise ValueError("codebook must be V x d_g matching the descriptors")
    V = codebook.shape[0]
    d2 = (
        np.sum(X**2, axis=1)[:, None]
        - 2.0 * (X @ codebook.T)
        + np.sum(codebook**2, axis=1)[None, :]
    )
    nearest = np.argmin(d2, axis=1)
    resid = np.zeros((V, X.shape[1]))
    for w in range(V):
        members = X[nearest == w]
        if len(members):
            resid[w] = (members - codebook[w]).sum(axis=0)
    if np.linalg.norm(resid) < 1e-12:
        # Frames sit exactly on codewords (reachable at convergence when a
        # word's members are exactly this sequence's frames); residuals carry
        # no signal, so fall back to the mean direction, tiled across the V
        # word slots to keep d_s = V * d_g uniform.
        flat = np.tile(_aggregate_mean(X), V)
        return flat / np.linalg.norm(flat)
    norms = np.linalg.norm(resid, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    resid = resid / norms
    flat = resid.reshape(-1)
    return flat / np.linalg.norm(flat)


AGGREGATORS = ("mean", "concat_cap", "vlad")


def aggregate_sequence(
    rows: np.ndarray,
    method: str = "mean",
    length: int = 5,
    codebook: np.ndarray = None,
) -> np.ndarray:
    """Summarize a sequence's frame descriptors as one unit vector.

    mean: normalized mean of normalized rows (d_s = d_g); handles any
    length.  concat_cap: first ``length`` rows concatenated, short
    sequences padded by repeating the last row (d_s = length * d_g).
    vlad: per-codeword residual aggregation against ``codebook``, intra-
    then globally normalized (d_s = V * d_g).
    """
    X = np.asarray(rows, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        raise ValueError("cannot aggregate an empty sequence")
    if method == "mean":
        return _aggregate_mean(X)
    if method == "concat_cap":
        return _aggregate_concat_cap(X, length)
    if method == "vlad":
        if codebook is None:
            raise ValueError("vlad aggregation needs a codebook")
        return _aggregate_vlad(X, codebook)
    raise ValueError(f"unknown aggregation method {method!r}")


def learn_codebook(descriptors: np.ndarray, n_words: int = 8, seed: int = 0) -> np.ndarray:
    """K-means codebook over all frame descriptors of a traversal."""
    X = np.asarray(descriptors, dtype=float)
    n_words = min(n_words, X.shape[0])
    return kmeans(X, n_words, seed=seed).centroids


def attach_descriptors(
    sequences,
    frame_descriptors: np.ndarray,
    method: str = "mean",
    length: int = 5,
    codebook: np.ndarray = None,
):
    """Fill each sequence's descriptor from its frames' rows, in place."""
    X = np.asarray(frame_descriptors, dtype=float)
    for seq in sequences:
        seq.descriptor = aggregate_sequence(
            X[seq.start_frame : seq.end_frame + 1], method, length, codebook
        )
    return sequences


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine undefined for zero vectors")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def build_sequence_graph(sequences, t_s: float = 0.8, w_seq: int = 10) -> SequenceGraph:
    """Join sequence pairs whose descriptors agree.

    Every unordered pair, within and across clusters, is checked against
    ``t_s``; pairs closer than ``w_seq`` frames in time (gap between end
    of one and start of the other) are skipped as trivial self-matches.
    """
    if sequences:
        d_s = {len(s.descriptor) for s in sequences if s.descriptor is not None}
        if len(d_s) > 1 or any(s.descriptor is None for s in sequences):
            raise ValueError("sequence descriptors missing or of mixed dimension")
    edges = []
    for p in range(len(sequences)):
        for q in range(p + 1, len(sequences)):
            a, b = sequences[p], sequences[q]
            gap = max(b.start_frame - a.end_frame, a.start_frame - b.end_frame)
            if gap < w_seq:
                continue
            s = cosine_similarity(a.descriptor, b.descriptor)
            if s >= t_s:
                edges.append((p, q, s))
    edges.sort(key=lambda e: (e[0], e[1]))
    return SequenceGraph(list(sequences), edges)


# ---------------------------------------------------------------------------
# artifacts


def write_sequences(path, sequences) -> None:
    with open(path, "w") as fh:
        fh.write("seq_id,cluster_id,start_frame,end_frame\n")
        for s in sequences:
            fh.write(f"{s.seq_id},{s.cluster_id},{s.start_frame},{s.end_frame}\n")


def read_sequences(path):
    out = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "seq_id,cluster_id,start_frame,end_frame":
            raise DataFormatError(f"bad sequences header: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataFormatError(f"line {lineno}: expected 4 fields")
            sid, cid, s, e = (int(x) for x in parts)
            out.append(Sequence(sid, cid, s, e))
    return out


def write_seqgraph(path, graph: SequenceGraph) -> None:
    with open(path, "w") as fh:
        fh.write("p,q,similarity\n")
        for p, q, s in graph.edges:
            fh.write(f"{p},{q},{s:.6f}\n")


def read_seqgraph_edges(path):
    edges = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "p,q,similarity":
            raise DataFormatError(f"bad seqgraph header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            p_s, q_s, s_s = line.split(",")
            edges.append((int(p_s), int(q_s), float(s_s)))
    return edges
