"""Planar rigid-motion helpers.

Poses and relative poses are ``(..., 3)`` arrays ``[x, y, theta]``; all
functions broadcast and keep angles wrapped to (-pi, pi].
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(theta):
    """Wrap an angle (or array of angles) to (-pi, pi].

    -pi maps to +pi so the interval is half-open on the left.
    """
    theta = np.asarray(theta, dtype=float)
    r = np.mod(theta + np.pi, TWO_PI)
    wrapped = np.where(r == 0.0, TWO_PI, r) - np.pi
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def compose(a, b):
    """Compose SE(2) transforms: returns a ∘ b (apply b in a's frame)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ca, sa = np.cos(a[..., 2]), np.sin(a[..., 2])
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 0] + ca * b[..., 0] - sa * b[..., 1]
    out[..., 1] = a[..., 1] + sa * b[..., 0] + ca * b[..., 1]
    out[..., 2] = wrap_angle(a[..., 2] + b[..., 2])
    return out


def invert(a):
    """Inverse transform: invert(a) ∘ a == identity."""
    a = np.asarray(a, dtype=float)
    ca, sa = np.cos(a[..., 2]), np.sin(a[..., 2])
    out = np.empty(a.shape)
    out[..., 0] = -(ca * a[..., 0] + sa * a[..., 1])
    out[..., 1] = -(-sa * a[..., 0] + ca * a[..., 1])
    out[..., 2] = wrap_angle(-a[..., 2])
    return out


def relative(a, b):
    """Relative pose of b expressed in a's frame: a^{-1} ∘ b."""
    return compose(invert(a), b)


def dead_reckon(start, deltas):
    """Chain relative measurements from a start pose.

    Returns an (N+1, 3) array whose row 0 is ``start`` and row k+1 is
    row k composed with ``deltas[k]``.
    """
    start = np.asarray(start, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    poses = np.empty((len(deltas) + 1, 3))
    poses[0] = start
    cur = start.copy()
    for k, d in enumerate(deltas):
        cur = compose(cur, d)
        poses[k + 1] = cur
    return poses


def rotation(theta):
    """2x2 rotation matrix (or stack of them) for heading theta."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack(
        [np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2
    )
