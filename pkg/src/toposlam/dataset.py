"""Canonical data model for traversals plus bit-exact file I/O.

Formats:
  * ``.tdsc``  descriptor matrices: magic ``TDSC``, u32 version=1, u32 N,
    u32 d, then N*d float32 little-endian, row-major (16-byte header).
  * ``poses.txt``  one ``id x y theta`` record per line, ids consecutive
    from 0, theta wrapped to (-pi, pi] at parse time.
  * ``loops.csv``  header ``i,j,score``, scores at 6 decimals, i < j.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CanonicalizationError,
    DataCorruptionError,
    DataFormatError,
    EmptyDataError,
    OrderingError,
)
from .se2 import wrap_angle

TDSC_MAGIC = b"TDSC"
TDSC_VERSION = 1
_TDSC_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class Pose2:
    """Planar pose; theta is wrapped to (-pi, pi] on construction."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, arr) -> "Pose2":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Frame:
    """One traversal frame: index, optional ground-truth pose, descriptor."""

    id: int
    pose: Pose2 | None
    descriptor: np.ndarray

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"frame id must be non-negative, got {self.id}")
        desc = np.asarray(self.descriptor)
        if desc.ndim != 1 or desc.size == 0:
            raise ValueError("descriptor must be a non-empty 1-d vector")
        object.__setattr__(self, "descriptor", desc)


@dataclass
class Traversal:
    """Ordered frames sharing one descriptor dimension."""

    frames: list[Frame]
    d_g: int = field(default=0)

    def __post_init__(self):
        if not self.frames:
            raise EmptyDataError("traversal must contain at least one frame")
        dims = {f.descriptor.shape[0] for f in self.frames}
        if len(dims) != 1:
            raise ValueError(f"frames disagree on descriptor dimension: {sorted(dims)}")
        d = dims.pop()
        if self.d_g == 0:
            self.d_g = d
        elif self.d_g != d:
            raise ValueError(f"declared d_g={self.d_g} but frames have d={d}")
        ids = [f.id for f in self.frames]
        if ids != list(range(len(self.frames))):
            raise OrderingError("frame ids must be consecutive from 0")

    def __len__(self) -> int:
        return len(self.frames)

    def descriptor_matrix(self) -> np.ndarray:
        return np.stack([f.descriptor for f in self.frames])

    @property
    def has_poses(self) -> bool:
        return all(f.pose is not None for f in self.frames)

    def poses(self) -> list[Pose2]:
        if not self.has_poses:
            raise ValueError("traversal has frames without ground-truth poses")
        return [f.pose for f in self.frames]

    def pose_array(self) -> np.ndarray:
        return np.stack([p.to_array() for p in self.poses()])

    def positions(self) -> np.ndarray:
        return self.pose_array()[:, :2]

    @classmethod
    def from_arrays(cls, descriptors, poses=None) -> "Traversal":
        descriptors = np.asarray(descriptors)
        if descriptors.ndim != 2:
            raise ValueError("descriptors must be an N x d matrix")
        frames = []
        for k, row in enumerate(descriptors):
            pose = None
            if poses is not None:
                p = poses[k]
                pose = p if isinstance(p, Pose2) else Pose2.from_array(p)
            frames.append(Frame(k, pose, row))
        return cls(frames)


@dataclass(frozen=True, order=True)
class LoopPair:
    """Candidate loop closure between frames i < j with a similarity score."""

    i: int
    j: int
    score: float = 0.0

    def __post_init__(self):
        if self.i >= self.j:
            raise CanonicalizationError(
                f"loop pair must satisfy i < j, got ({self.i}, {self.j})"
            )

    @classmethod
    def canonical(cls, a: int, b: int, score: float = 0.0) -> "LoopPair":
        """Build a pair from two frame ids in either order."""
        if a == b:
            raise CanonicalizationError(f"loop pair needs distinct frames, got {a}")
        return cls(min(a, b), max(a, b), score)

    @property
    def key(self) -> tuple:
        """Frame identity (i, j), ignoring the score."""
        return (self.i, self.j)


# ---------------------------------------------------------------------------
# descriptor binary format (.tdsc)


def write_descriptors(matrix, path) -> None:
    """Write an N x d float matrix in the .tdsc binary format (float32)."""
    matrix = np.ascontiguousarray(np.asarray(matrix, dtype=np.float32))
    if matrix.ndim != 2:
        raise ValueError("descriptor matrix must be 2-d")
    n, d = matrix.shape
    if n == 0 or d == 0:
        raise EmptyDataError(f"refusing to write empty descriptor matrix {matrix.shape}")
    with open(path, "wb") as fh:
        fh.write(_TDSC_HEADER.pack(TDSC_MAGIC, TDSC_VERSION, n, d))
        fh.write(matrix.astype("<f4", copy=False).tobytes())


def read_descriptors(path) -> np.ndarray:
    """Read a .tdsc file back into an N x d float32 matrix."""
    with open(path, "rb") as fh:
        header = fh.read(_TDSC_HEADER.size)
        if len(header) < _TDSC_HEADER.size:
            raise DataCorruptionError(f"{path}: header truncated ({len(header)} bytes)")
        magic, version, n, d = _TDSC_HEADER.unpack(header)
        if magic != TDSC_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic!r}, expected {TDSC_MAGIC!r}")
        if version != TDSC_VERSION:
            raise DataFormatError(f"{path}: unsupported version {version}")
        if n == 0 or d == 0:
            raise EmptyDataError(f"{path}: header declares empty matrix ({n} x {d})")
        payload = fh.read()
    expected = 4 * n * d
    if len(payload) != expected:
        raise DataCorruptionError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(n, d).copy()


# ---------------------------------------------------------------------------
# pose text format


def write_poses(poses, path) -> None:
    """Write poses as ``id x y theta`` lines, 9 decimals."""
    with open(path, "w") as fh:
        for k, p in enumerate(poses):
            if not isinstance(p, Pose2):
                p = Pose2.from_array(p)
            fh.write(f"{k} {p.x:.9f} {p.y:.9f} {p.theta:.9f}\n")


def read_poses(path) -> list[Pose2]:
    """Read a pose file; ids must be consecutive from 0, theta is wrapped."""
    poses = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise DataFormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                rec_id = int(parts[0])
                x, y, theta = (float(v) for v in parts[1:])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: non-numeric field: {exc}") from exc
            if rec_id != len(poses):
                raise OrderingError(
                    f"{path}:{lineno}: id {rec_id} out of order, expected {len(poses)}"
                )
            poses.append(Pose2(x, y, theta))
    if not poses:
        raise EmptyDataError(f"{path}: no pose records")
    return poses


# ---------------------------------------------------------------------------
# loop pair CSV


def write_loop_pairs(pairs, path) -> None:
    """Write loop pairs as CSV with 6-decimal scores."""
    with open(path, "w") as fh:
        fh.write("i,j,score\n")
        for p in pairs:
            fh.write(f"{p.i},{p.j},{p.score:.6f}\n")


def read_loop_pairs(path) -> list[LoopPair]:
    pairs = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "i,j,score":
            raise DataFormatError(f"{path}: bad header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataFormatError(f"{path}:{lineno}: expected 3 fields")
            try:
                i, j, score = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: non-numeric field: {exc}") from exc
            if i >= j:
                raise CanonicalizationError(f"{path}:{lineno}: pair ({i}, {j}) not canonical")
            pairs.append(LoopPair(i, j, score))
    return pairs
