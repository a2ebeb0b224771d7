"""SE(2) pose-graph construction and nonlinear least-squares optimization.

The graph holds one vertex per frame and two edge kinds: odometry edges
between consecutive frames and loop edges from detected loop pairs.  Each
edge is a between-factor: its residual is the pose difference between the
predicted relative pose and the measured one, weighted by the edge's
information matrix.  Optimization is Levenberg-Marquardt on the sparse
normal equations, with an optional Huber kernel on loop edges so that
false loop measurements cannot drag the solution arbitrarily far.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import splu

from .errors import ConsistencyError, DataFormatError, NumericalError, OrderingError
from .se2 import compose, dead_reckon, invert, relative, rotation, wrap_angle

_SKEW = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass
class Edge:
    """Relative-pose constraint between vertices i and j.

    ``measurement`` is (dx, dy, dtheta) expressed in frame i; the
    information matrix is the inverse measurement covariance and must be
    symmetric positive-definite.
    """

    i: int
    j: int
    measurement: np.ndarray
    information: np.ndarray
    kind: str = "odometry"

    def __post_init__(self):
        m = np.asarray(self.measurement, dtype=float).copy()
        if m.shape != (3,):
            raise ValueError(f"measurement must be length 3, got {m.shape}")
        m[2] = wrap_angle(m[2])
        self.measurement = m
        info = np.asarray(self.information, dtype=float)
        if info.shape != (3, 3):
            raise ValueError(f"information must be 3x3, got {info.shape}")
        if not np.allclose(info, info.T, atol=1e-9):
            raise ValueError("information matrix must be symmetric")
        try:
            np.linalg.cholesky(info)
        except np.linalg.LinAlgError as exc:
            raise ValueError("information matrix must be positive-definite") from exc
        self.information = info
        if self.kind not in ("odometry", "loop"):
            raise ValueError(f"unknown edge kind {self.kind!r}")
        if self.i == self.j:
            raise ValueError(f"self-edge on vertex {self.i}")


@dataclass
class PoseGraph:
    """Vertices (N x 3 array of [x, y, theta]) plus constraints.

    Vertex ids are the row indices.  At least one vertex must be fixed or
    the rigid-motion gauge freedom makes the normal equations singular.
    """

    vertices: np.ndarray
    edges: list = field(default_factory=list)
    fixed: set = field(default_factory=set)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be an N x 3 array")
        v = v.copy()
        v[:, 2] = wrap_angle(v[:, 2])
        self.vertices = v
        n = len(v)
        for e in self.edges:
            if not (0 <= e.i < n and 0 <= e.j < n):
                raise ConsistencyError(
                    f"edge ({e.i}, {e.j}) references a vertex outside [0, {n})"
                )
        self.fixed = set(int(f) for f in self.fixed)
        for f in self.fixed:
            if not 0 <= f < n:
                raise ConsistencyError(f"fixed vertex {f} outside [0, {n})")
        if not self.fixed:
            raise ValueError("pose graph needs at least one fixed vertex")

    def copy(self) -> "PoseGraph":
        return PoseGraph(self.vertices.copy(), list(self.edges), set(self.fixed))


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 50
    lambda_init: float = 1e-4
    lambda_factor: float = 10.0
    tol_dx: float = 1e-8
    robust_kernel: str = "huber"
    huber_delta: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1 or self.lambda_init <= 0 or self.lambda_factor <= 1:
            raise ValueError("max_iters >= 1, lambda_init > 0, lambda_factor > 1 required")
        if self.tol_dx <= 0 or self.huber_delta <= 0:
            raise ValueError("tol_dx and huber_delta must be > 0")
        if self.robust_kernel not in ("none", "huber"):
            raise ValueError(f"unknown robust kernel {self.robust_kernel!r}")


def info_from_sigmas(sigma_t: float, sigma_r: float, floor: float = 1e-6) -> np.ndarray:
    """Diagonal information from noise sigmas, floored so zero noise stays finite."""
    st = max(float(sigma_t), floor)
    sr = max(float(sigma_r), floor)
    return np.diag([1.0 / st**2, 1.0 / st**2, 1.0 / sr**2])


DEFAULT_LOOP_INFO = np.diag([100.0, 100.0, 100.0])


def build_graph(
    odometry: np.ndarray,
    loops,
    info_odom: np.ndarray,
    info_loop: np.ndarray = None,
) -> PoseGraph:
    """Assemble a pose graph from odometry and loop measurements.

    ``odometry`` is an (N-1, 3) array of consecutive relative poses;
    ``loops`` is a list of (LoopPair, measurement) pairs.  Vertices are
    initialized by dead reckoning from the origin and vertex 0 is fixed.
    """
    odometry = np.asarray(odometry, dtype=float)
    if odometry.ndim != 2 or odometry.shape[1] != 3 or odometry.shape[0] < 1:
        raise ValueError("odometry must be an (N-1) x 3 array with N >= 2")
    if info_loop is None:
        info_loop = DEFAULT_LOOP_INFO
    n = odometry.shape[0] + 1
    vertices = dead_reckon(np.zeros(3), odometry)
    edges = [
        Edge(k, k + 1, odometry[k], info_odom, kind="odometry") for k in range(n - 1)
    ]
    for pair, meas in loops:
        if pair.j >= n:
            raise ConsistencyError(
                f"loop pair ({pair.i}, {pair.j}) references frame beyond {n - 1}"
            )
        edges.append(Edge(pair.i, pair.j, np.asarray(meas, dtype=float), info_loop, kind="loop"))
    return PoseGraph(vertices, edges, {0})


def residual(edge: Edge, xi, xj) -> np.ndarray:
    """Between-factor error: measured relative pose vs the predicted one.

    Zero exactly when xi^{-1} o xj equals the measurement; the angle
    component is wrapped to (-pi, pi].
    """
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    r = compose(invert(edge.measurement), relative(xi, xj))
    r[2] = wrap_angle(r[2])
    return r


def residual_jacobians(edge: Edge, xi, xj):
    """Analytic d(residual)/d(xi), d(residual)/d(xj), both 3x3.

    With Rm = R(dtheta_meas), Ri = R(theta_i) and dt = t_j - t_i:
    the translation rows are Rm^T [d(Ri^T dt)/d(.)] and the angle row is
    (0, 0, -1) for xi and (0, 0, +1) for xj.
    """
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    Ri_T = rotation(xi[2]).T
    Rm_T = rotation(edge.measurement[2]).T
    dt = xj[:2] - xi[:2]
    A = Rm_T @ Ri_T
    Ji = np.zeros((3, 3))
    Jj = np.zeros((3, 3))
    Ji[:2, :2] = -A
    Ji[:2, 2] = -(Rm_T @ _SKEW @ Ri_T) @ dt
    Ji[2, 2] = -1.0
    Jj[:2, :2] = A
    Jj[2, 2] = 1.0
    return Ji, Jj


def _huber_terms(e2: float, delta: float):
    """Robustified cost and IRLS weight for squared Mahalanobis error e2."""
    if e2 <= delta * delta:
        return e2, 1.0
    e = np.sqrt(e2)
    return 2.0 * delta * e - delta * delta, delta / e


def _edge_terms(edge: Edge, vertices: np.ndarray, config: SolverConfig):
    r = residual(edge, vertices[edge.i], vertices[edge.j])
    e2 = float(r @ edge.information @ r)
    if config.robust_kernel == "huber" and edge.kind == "loop":
        cost, w = _huber_terms(e2, config.huber_delta)
    else:
        cost, w = e2, 1.0
    return r, cost, w


class _EdgeBatch:
    """Columnar edge arrays so cost and normal equations vectorize.

    Semantically identical to looping _edge_terms / residual_jacobians
    over the edge list; the per-edge functions stay as the reference
    contract.
    """

    def __init__(self, edges, config: SolverConfig):
        self.i = np.array([e.i for e in edges], dtype=int)
        self.j = np.array([e.j for e in edges], dtype=int)
        self.meas = (
            np.stack([e.measurement for e in edges])
            if edges
            else np.zeros((0, 3))
        )
        self.info = (
            np.stack([e.information for e in edges])
            if edges
            else np.zeros((0, 3, 3))
        )
        robust = config.robust_kernel == "huber"
        self.robust = np.array(
            [robust and e.kind == "loop" for e in edges], dtype=bool
        )
        self.delta = config.huber_delta

    def residuals(self, vertices: np.ndarray) -> np.ndarray:
        r = compose(invert(self.meas), relative(vertices[self.i], vertices[self.j]))
        r[..., 2] = wrap_angle(r[..., 2])
        return r

    def cost_and_weights(self, vertices: np.ndarray):
        r = self.residuals(vertices)
        e2 = np.einsum("ea,eab,eb->e", r, self.info, r)
        over = self.robust & (e2 > self.delta**2)
        e = np.sqrt(np.maximum(e2, self.delta**2))
        cost = np.where(over, 2.0 * self.delta * e - self.delta**2, e2)
        w = np.where(over, self.delta / e, 1.0)
        return float(np.sum(cost)), w, r

    def cost(self, vertices: np.ndarray) -> float:
        return self.cost_and_weights(vertices)[0]

    def jacobians(self, vertices: np.ndarray):
        """Stacked (E, 3, 3) d r/d xi and d r/d xj blocks."""
        n = len(self.i)
        ti = vertices[self.i, 2]
        tm = self.meas[:, 2]
        ci, si = np.cos(ti), np.sin(ti)
        cm, sm = np.cos(tm), np.sin(tm)
        Ri_T = np.empty((n, 2, 2))
        Ri_T[:, 0, 0], Ri_T[:, 0, 1] = ci, si
        Ri_T[:, 1, 0], Ri_T[:, 1, 1] = -si, ci
        Rm_T = np.empty((n, 2, 2))
        Rm_T[:, 0, 0], Rm_T[:, 0, 1] = cm, sm
        Rm_T[:, 1, 0], Rm_T[:, 1, 1] = -sm, cm
        A = np.einsum("eab,ebc->eac", Rm_T, Ri_T)
        dt = vertices[self.j, :2] - vertices[self.i, :2]
        g = -np.einsum("eab,bc,ecd,ed->ea", Rm_T, _SKEW, Ri_T, dt)
        Ji = np.zeros((n, 3, 3))
        Jj = np.zeros((n, 3, 3))
        Ji[:, :2, :2] = -A
        Ji[:, :2, 2] = g
        Ji[:, 2, 2] = -1.0
        Jj[:, :2, :2] = A
        Jj[:, 2, 2] = 1.0
        return Ji, Jj

    def normal_equations(self, vertices: np.ndarray, free_index, n_free: int):
        """Assemble H = J^T W J and b = J^T W r over all edges (sparse COO)."""
        cost, w, r = self.cost_and_weights(vertices)
        Ji, Jj = self.jacobians(vertices)
        omega = w[:, None, None] * self.info
        fi = free_index[self.i] if len(self.i) else np.zeros(0, dtype=int)
        fj = free_index[self.j] if len(self.j) else np.zeros(0, dtype=int)

        b = np.zeros((n_free, 3))
        rows, cols, vals = [], [], []
        off = np.arange(3)
        for fa, Ja in ((fi, Ji), (fj, Jj)):
            keep = fa >= 0
            if np.any(keep):
                np.add.at(
                    b,
                    fa[keep],
                    np.einsum("eba,ebc,ec->ea", Ja[keep], omega[keep], r[keep]),
                )
            for fbi, Jb in ((fi, Ji), (fj, Jj)):
                both = keep & (fbi >= 0)
                if not np.any(both):
                    continue
                block = np.einsum(
                    "eca,ecd,edb->eab", Ja[both], omega[both], Jb[both]
                )
                rows.append(
                    (3 * fa[both][:, None, None] + off[None, :, None])
                    .repeat(3, axis=2)
                    .ravel()
                )
                cols.append(
                    (3 * fbi[both][:, None, None] + off[None, None, :])
                    .repeat(3, axis=1)
                    .ravel()
                )
                vals.append(block.ravel())
        if rows:
            H = coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(3 * n_free, 3 * n_free),
            ).tocsc()
        else:
            H = coo_matrix((3 * n_free, 3 * n_free)).tocsc()
        return H, b.ravel(), cost


def total_cost(graph: PoseGraph, config: SolverConfig) -> float:
    return sum(_edge_terms(e, graph.vertices, config)[1] for e in graph.edges)


def optimize(graph: PoseGraph, config: SolverConfig = SolverConfig()):
    """Levenberg-Marquardt over the free vertices.

    Returns ``(optimized_graph, log)`` where each log record carries the
    iteration number, the cost after the step, the damping value, the
    step norm and whether the step was accepted.  Accepted steps strictly
    decrease the robustified cost; fixed vertices are never touched.
    """
    free_ids = [i for i in range(len(graph.vertices)) if i not in graph.fixed]
    free_index = np.full(len(graph.vertices), -1, dtype=int)
    for slot, vid in enumerate(free_ids):
        free_index[vid] = slot
    n_free = len(free_ids)
    vertices = graph.vertices.copy()
    log = []
    if n_free == 0:
        return graph.copy(), log

    batch = _EdgeBatch(graph.edges, config)
    lam = config.lambda_init
    cost = batch.cost(vertices)
    log.append({"iter": 0, "cost": cost, "lambda": lam, "dx_norm": 0.0, "accepted": True})

    for it in range(1, config.max_iters + 1):
        H, b, cost = batch.normal_equations(vertices, free_index, n_free)
        diag = np.asarray(H.diagonal()).ravel()
        # A free vertex with no constraints would leave zero diagonal
        # entries that damping cannot cure.
        diag = np.where(diag > 0, diag, 1.0)
        step_taken = False
        solved_once = False
        for _ in range(60):
            damped = (H + diags(lam * diag)).tocsc()
            try:
                dx = splu(damped).solve(-b)
            except RuntimeError:
                lam *= config.lambda_factor
                continue
            if not np.all(np.isfinite(dx)):
                lam *= config.lambda_factor
                continue
            solved_once = True
            candidate = vertices.copy()
            candidate[free_ids] += dx.reshape(n_free, 3)
            candidate[:, 2] = wrap_angle(candidate[:, 2])
            new_cost = batch.cost(candidate)
            if np.isfinite(new_cost) and new_cost < cost:
                vertices = candidate
                dx_norm = float(np.linalg.norm(dx))
                lam = max(lam / config.lambda_factor, 1e-12)
                log.append(
                    {"iter": it, "cost": new_cost, "lambda": lam,
                     "dx_norm": dx_norm, "accepted": True}
                )
                step_taken = True
                break
            lam *= config.lambda_factor
            if lam > 1e14:
                break
        if not step_taken:
            if solved_once:
                # No descent direction left at overwhelming damping: we are
                # at a (local) minimum to working precision.
                break
            raise NumericalError(
                f"normal equations unsolvable after repeated damping increases "
                f"(lambda={lam:.3e})"
            )
        if log[-1]["dx_norm"] < config.tol_dx:
            break
    return PoseGraph(vertices, list(graph.edges), set(graph.fixed)), log


# ---------------------------------------------------------------------------
# text format (g2o-flavored)


def save_graph(path, graph: PoseGraph) -> None:
    """Write VERTEX_SE2 / EDGE_SE2 / FIX records, 9 decimals."""
    with open(path, "w") as fh:
        for vid, (x, y, th) in enumerate(graph.vertices):
            fh.write(f"VERTEX_SE2 {vid} {x:.9f} {y:.9f} {th:.9f}\n")
        for e in graph.edges:
            m = e.measurement
            I = e.information
            fh.write(
                f"EDGE_SE2 {e.i} {e.j} {m[0]:.9f} {m[1]:.9f} {m[2]:.9f} "
                f"{I[0, 0]:.9f} {I[0, 1]:.9f} {I[0, 2]:.9f} "
                f"{I[1, 1]:.9f} {I[1, 2]:.9f} {I[2, 2]:.9f}\n"
            )
        for vid in sorted(graph.fixed):
            fh.write(f"FIX {vid}\n")


def load_graph(path) -> PoseGraph:
    """Parse the text format written by save_graph.

    Vertex ids must be consecutive from 0.  Edge kind is inferred from
    the endpoints: |i - j| == 1 is odometry, anything else is a loop.
    """
    verts = {}
    raw_edges = []
    fixed = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            tag = parts[0]
            try:
                if tag == "VERTEX_SE2":
                    if len(parts) != 5:
                        raise DataFormatError(f"line {lineno}: VERTEX_SE2 needs 4 fields")
                    vid = int(parts[1])
                    if vid in verts:
                        raise DataFormatError(f"line {lineno}: duplicate vertex {vid}")
                    verts[vid] = [float(parts[2]), float(parts[3]), float(parts[4])]
                elif tag == "EDGE_SE2":
                    if len(parts) != 12:
                        raise DataFormatError(f"line {lineno}: EDGE_SE2 needs 11 fields")
                    i, j = int(parts[1]), int(parts[2])
                    vals = [float(v) for v in parts[3:]]
                    raw_edges.append((i, j, vals))
                elif tag == "FIX":
                    if len(parts) != 2:
                        raise DataFormatError(f"line {lineno}: FIX needs 1 field")
                    fixed.add(int(parts[1]))
                else:
                    raise DataFormatError(f"line {lineno}: unknown record {tag!r}")
            except ValueError as exc:
                raise DataFormatError(f"line {lineno}: {exc}") from exc
    if not verts:
        raise DataFormatError("no VERTEX_SE2 records")
    ids = sorted(verts)
    if ids != list(range(len(ids))):
        raise OrderingError("vertex ids must be consecutive from 0")
    vertices = np.array([verts[i] for i in ids])
    edges = []
    for i, j, vals in raw_edges:
        m = np.array(vals[:3])
        i11, i12, i13, i22, i23, i33 = vals[3:]
        info = np.array([[i11, i12, i13], [i12, i22, i23], [i13, i23, i33]])
        kind = "odometry" if abs(i - j) == 1 else "loop"
        edges.append(Edge(i, j, m, info, kind=kind))
    if not fixed:
        raise DataFormatError("no FIX record; graph gauge is unconstrained")
    return PoseGraph(vertices, edges, fixed)
