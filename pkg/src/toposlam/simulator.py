"""Synthetic traversal generator.

Produces desk-scale stand-ins for real indoor runs: a ground-truth SE(2)
trajectory over a small world of places, viewpoint-conditioned noisy
descriptors, Gaussian-corrupted odometry, and synthesized relative-pose
measurements for loop candidates.

Descriptor model per frame::

    D = normalize(alpha * place_embedding + beta * view_basis[bin] + eps)

with ``eps ~ N(0, sigma_d^2 I)`` and the heading quantized into ``n_view``
bins, each owning one fixed random unit basis vector.  All randomness is
driven by numpy ``SeedSequence`` splits so runs are reproducible across
platforms.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Frame, LoopPair, Pose2, Traversal
from .errors import ConfigError, RouteError
from .se2 import compose, relative, wrap_angle

# SeedSequence spawn keys: keep purposes disjoint.
_KEY_EMBEDDINGS = 0
_KEY_VIEW_BASES = 1


@dataclass(frozen=True)
class Place:
    """A visually distinct location: position plus unit embedding."""

    id: int
    center: np.ndarray
    embedding: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        emb = np.asarray(self.embedding, dtype=float)
        norm = np.linalg.norm(emb)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"place {self.id}: embedding norm {norm:.8f} != 1")
        object.__setattr__(self, "embedding", emb)


@dataclass(frozen=True)
class World:
    """Set of places with a root seed for all derived randomness."""

    places: tuple
    seed: int

    def __post_init__(self):
        if len(self.places) < 2:
            raise ValueError("world needs at least 2 places")
        object.__setattr__(self, "places", tuple(self.places))

    @property
    def d_g(self) -> int:
        return self.places[0].embedding.shape[0]

    def place_by_id(self, pid: int) -> Place:
        for p in self.places:
            if p.id == pid:
                return p
        raise RouteError(f"unknown place id {pid}")

    def centers(self) -> np.ndarray:
        return np.stack([p.center for p in self.places])


@dataclass(frozen=True)
class DescriptorModel:
    alpha: float = 1.0
    beta: float = 0.0
    sigma_d: float = 0.0
    n_view: int = 8

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.beta < 0 or self.sigma_d < 0:
            raise ValueError("beta and sigma_d must be >= 0")
        if self.n_view < 1:
            raise ValueError("n_view must be >= 1")


@dataclass(frozen=True)
class OdometryNoise:
    sigma_t: float = 0.0
    sigma_r: float = 0.0

    def __post_init__(self):
        if self.sigma_t < 0 or self.sigma_r < 0:
            raise ValueError("noise sigmas must be >= 0")


def make_world(centers, d_g: int, seed: int) -> World:
    """Build a world with random unit embeddings, one per center."""
    centers = np.asarray(centers, dtype=float)
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_KEY_EMBEDDINGS,)))
    )
    embeddings = rng.standard_normal((len(centers), d_g))
    embeddings /= np.linalg.norm(embeddings, axis=1, keepdims=True)
    places = tuple(
        Place(i, centers[i], embeddings[i]) for i in range(len(centers))
    )
    return World(places, seed)


def view_bases(world: World, n_view: int) -> np.ndarray:
    """Fixed random unit basis vectors, one per heading bin.

    Derived from the world seed so every traversal of the same world sees
    the same viewpoint geometry.
    """
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(world.seed, spawn_key=(_KEY_VIEW_BASES,)))
    )
    bases = rng.standard_normal((n_view, world.d_g))
    bases /= np.linalg.norm(bases, axis=1, keepdims=True)
    return bases


def heading_bin(theta: float, n_view: int) -> int:
    """Quantize a heading into one of n_view uniform bins over [0, 2pi)."""
    t = math.fmod(theta, 2.0 * math.pi)
    if t < 0:
        t += 2.0 * math.pi
    return min(int(t / (2.0 * math.pi / n_view)), n_view - 1)


def _route_poses(world: World, route, steps_per_leg: int) -> np.ndarray:
    """Interpolate waypoint poses: position lerp, shortest-arc heading lerp."""
    if steps_per_leg < 1:
        raise ValueError("steps_per_leg must be >= 1")
    if len(route) < 2:
        raise ValueError("route needs at least 2 waypoints")
    waypoints = []
    for pid, heading in route:
        place = world.place_by_id(pid)
        waypoints.append((place.center, wrap_angle(float(heading))))
    poses = [np.array([waypoints[0][0][0], waypoints[0][0][1], waypoints[0][1]])]
    for (c0, h0), (c1, h1) in zip(waypoints[:-1], waypoints[1:]):
        dh = wrap_angle(h1 - h0)
        for s in range(1, steps_per_leg + 1):
            t = s / steps_per_leg
            pos = (1.0 - t) * c0 + t * c1
            poses.append(np.array([pos[0], pos[1], wrap_angle(h0 + t * dh)]))
    return np.stack(poses)


def generate_traversal(
    world: World,
    route,
    steps_per_leg: int,
    model: DescriptorModel,
    seed: int,
) -> Traversal:
    """Simulate a traversal along a waypoint route.

    ``route`` is a sequence of ``(place_id, heading_rad)`` waypoints.  The
    frame count is ``1 + (len(route) - 1) * steps_per_leg``.  Deterministic
    given (world, route, model, seed).
    """
    poses = _route_poses(world, route, steps_per_leg)
    centers = world.centers()
    bases = view_bases(world, model.n_view)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    frames = []
    for k, pose in enumerate(poses):
        d2 = np.sum((centers - pose[:2]) ** 2, axis=1)
        place = world.places[int(np.argmin(d2))]
        vec = model.alpha * place.embedding
        if model.beta > 0:
            vec = vec + model.beta * bases[heading_bin(pose[2], model.n_view)]
        if model.sigma_d > 0:
            vec = vec + rng.normal(0.0, model.sigma_d, size=world.d_g)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec = place.embedding.copy()
            norm = 1.0
        frames.append(Frame(k, Pose2.from_array(pose), vec / norm))
    return Traversal(frames)


def corrupt_odometry(
    traversal: Traversal, noise: OdometryNoise, seed: int
) -> np.ndarray:
    """Relative-pose measurements between consecutive frames, with noise.

    Measurement k is the true delta ``pose_k^{-1} ∘ pose_{k+1}`` composed
    with a perturbation drawn from N(0, diag(sigma_t^2, sigma_t^2,
    sigma_r^2)).  Returns an (N-1, 3) array.
    """
    if len(traversal) < 2:
        raise ValueError("need at least 2 frames for odometry")
    poses = traversal.pose_array()
    deltas = relative(poses[:-1], poses[1:])
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n = len(deltas)
    pert = np.zeros((n, 3))
    # Draw both blocks even when one sigma is zero so the stream layout is
    # stable under sigma changes.
    t_noise = rng.normal(0.0, 1.0, size=(n, 2)) * noise.sigma_t
    r_noise = rng.normal(0.0, 1.0, size=n) * noise.sigma_r
    pert[:, :2] = t_noise
    pert[:, 2] = r_noise
    return compose(deltas, pert)


def synthesize_loop_measurement(
    traversal: Traversal,
    pair: LoopPair,
    ground_truth_radius: float = 5.0,
    sigma_loop: float = 0.0,
    seed: int = 0,
):
    """Stand-in for a local-feature matcher on a detected loop pair.

    If the frames truly lie within ``ground_truth_radius`` the result is
    the true relative pose plus N(0, sigma_loop^2) on each component and a
    True flag; otherwise the matcher "wrongly believes coincidence" and
    emits the identity relative pose with a False flag.

    Returns ``(measurement, valid)`` where measurement is ``[dx, dy,
    dtheta]`` expressed in frame i.
    """
    n = len(traversal)
    if not (0 <= pair.i < n and 0 <= pair.j < n):
        raise ValueError(f"pair ({pair.i}, {pair.j}) outside traversal of {n} frames")
    poses = traversal.pose_array()
    pi, pj = poses[pair.i], poses[pair.j]
    dist = float(np.hypot(pj[0] - pi[0], pj[1] - pi[1]))
    if dist > ground_truth_radius:
        return np.zeros(3), False
    meas = relative(pi, pj)
    if sigma_loop > 0:
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(pair.i, pair.j)))
        )
        meas = meas + rng.normal(0.0, sigma_loop, size=3)
        meas[2] = wrap_angle(meas[2])
    return meas, True


# ---------------------------------------------------------------------------
# scenario config (JSON)


@dataclass
class Scenario:
    """Parsed simulator scenario: world, route and all model parameters."""

    world: World
    route: list
    steps_per_leg: int
    model: DescriptorModel
    odometry: OdometryNoise
    loop_radius: float = 5.0
    sigma_loop: float = 0.0
    name: str = ""
    extra: dict = field(default_factory=dict)


_SCENARIO_KEYS = {
    "version",
    "name",
    "seed",
    "d_g",
    "places",
    "route",
    "steps_per_leg",
    "descriptor",
    "odometry",
    "loop",
}


def scenario_from_dict(cfg: dict) -> Scenario:
    """Validate and materialize a scenario config dict.

    Route headings may be numbers (degrees) or ``"auto"``, which resolves
    to the bearing toward the next waypoint (the last waypoint inherits
    the previous heading).
    """
    unknown = set(cfg) - _SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    if cfg.get("version", 1) != 1:
        raise ConfigError(f"unsupported scenario version {cfg.get('version')}")
    try:
        seed = int(cfg.get("seed", 0))
        d_g = int(cfg.get("d_g", 64))
        centers = [(float(p["x"]), float(p["y"])) for p in cfg["places"]]
        steps_per_leg = int(cfg.get("steps_per_leg", 5))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario field: {exc}") from exc
    world = make_world(centers, d_g, seed)

    raw_route = cfg.get("route")
    if not raw_route or len(raw_route) < 2:
        raise ConfigError("scenario route needs at least 2 waypoints")
    pids = [int(r["place"]) for r in raw_route]
    known = {p.id for p in world.places}
    for pid in pids:
        if pid not in known:
            raise RouteError(f"route references unknown place id {pid}")
    headings = []
    for idx, r in enumerate(raw_route):
        h = r.get("heading_deg", "auto")
        if h == "auto":
            # Bearing toward the next waypoint that actually moves; dwell
            # entries (repeated place) inherit the surrounding heading.
            c0 = world.place_by_id(pids[idx]).center
            bearing = None
            for nxt in range(idx + 1, len(raw_route)):
                c1 = world.place_by_id(pids[nxt]).center
                if not np.allclose(c1, c0):
                    bearing = math.atan2(c1[1] - c0[1], c1[0] - c0[0])
                    break
            if bearing is None:
                if not headings:
                    raise ConfigError("route never moves; cannot resolve auto headings")
                bearing = headings[-1]
            headings.append(bearing)
        else:
            headings.append(math.radians(float(h)))
    route = list(zip(pids, headings))

    desc = dict(cfg.get("descriptor", {}))
    model = DescriptorModel(
        alpha=float(desc.pop("alpha", 1.0)),
        beta=float(desc.pop("beta", 0.0)),
        sigma_d=float(desc.pop("sigma_d", 0.0)),
        n_view=int(desc.pop("n_view", 8)),
    )
    if desc:
        raise ConfigError(f"unknown descriptor keys: {sorted(desc)}")

    odom = dict(cfg.get("odometry", {}))
    noise = OdometryNoise(
        sigma_t=float(odom.pop("sigma_t", 0.0)),
        sigma_r=float(odom.pop("sigma_r", 0.0)),
    )
    if odom:
        raise ConfigError(f"unknown odometry keys: {sorted(odom)}")

    loop = dict(cfg.get("loop", {}))
    radius = float(loop.pop("radius", 5.0))
    sigma_loop = float(loop.pop("sigma_loop", 0.0))
    if loop:
        raise ConfigError(f"unknown loop keys: {sorted(loop)}")

    return Scenario(
        world=world,
        route=route,
        steps_per_leg=steps_per_leg,
        model=model,
        odometry=noise,
        loop_radius=radius,
        sigma_loop=sigma_loop,
        name=str(cfg.get("name", "")),
    )


def scenario_from_json(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def simulate_scenario(scenario: Scenario, seed: int):
    """Run a scenario: returns (traversal, odometry measurements).

    ``seed`` drives descriptor noise; odometry noise uses an offset seed
    so the two streams never alias.
    """
    trav = generate_traversal(
        scenario.world, scenario.route, scenario.steps_per_leg, scenario.model, seed=seed
    )
    odom = corrupt_odometry(trav, scenario.odometry, seed=seed + 1)
    return trav, odom
