"""Rescaled geodesic random walks and the constructions built on them.

The empirical average process started at ``x0`` takes ``n`` steps
``S_k = Exp_{S_{k-1}}(X_k / n)`` with ``X_k`` drawn from the family at the
current point.  Alongside the points we carry an orthonormal frame
transported from ``x0`` along the walk's own piecewise-geodesic path; it turns
every increment into its pullback ``tau^{-1} X_k`` in ``T_{x0} M`` without a
second pass.

Batch simulations are split into fixed-size replica blocks, each driven by
its own counter-based stream keyed on ``(seed, tag, n, block)``, so results
do not depend on how blocks are scheduled.
"""
import csv
import dataclasses
import json
import math

import numpy as np

from .errors import PreconditionError
from .manifolds import get_manifold
from .rng import stream

BLOCK_SIZE = 8192

# stream tags keep the different simulation purposes statistically separate
TAG_TRAJECTORY = 1
TAG_BATCH = 2
TAG_ENDPOINT = 3


@dataclasses.dataclass
class WalkTrajectory:
    """One rescaled walk: points ``S_0..S_n``, raw increments and their pullbacks."""

    manifold_id: str
    x0: np.ndarray
    scale: float
    points: np.ndarray
    increments: np.ndarray
    transported_increments: np.ndarray

    @property
    def n(self):
        return len(self.increments)

    @property
    def manifold(self):
        return get_manifold(self.manifold_id)

    @property
    def endpoint(self):
        return self.points[-1]

    def to_csv(self, path):
        dim = self.points.shape[1]
        header = (["k"] + [f"x{i + 1}" for i in range(dim)] + [f"X{i + 1}" for i in range(dim)]
                  + [f"tX{i + 1}" for i in range(dim)])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, p in enumerate(self.points):
                if k == 0:
                    inc = [""] * dim
                    tin = [""] * dim
                else:
                    inc = [repr(float(a)) for a in self.increments[k - 1]]
                    tin = [repr(float(a)) for a in self.transported_increments[k - 1]]
                w.writerow([k] + [repr(float(a)) for a in p] + inc + tin)


def _frame_coords(manifold, x, v, frame):
    return np.einsum("...a,...ai,a->...i", v, frame, _metric_diag(manifold))


def _metric_diag(manifold):
    return getattr(manifold, "_metric", None) if getattr(manifold, "_metric", None) is not None \
        else np.ones(manifold.ambient_dim)


def _step(manifold, points, frame, increments, alpha):
    """Advance points by ``alpha * increments`` and transport the frame along the step."""
    step = alpha * increments
    new_points = manifold._exp(points, step)
    new_frame = np.stack([manifold._transport(points, step, frame[..., :, i])
                          for i in range(manifold.dim)], axis=-1)
    return new_points, new_frame


def run_rescaled_walk(family, x0, n, seed, replica=0):
    """Simulate one empirical-average walk with ``n`` steps of size ``1/n``.

    Increments are drawn from ``family`` at the current point (frame policy);
    their pullbacks to ``x0`` are read off the transported frame.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    m = family.manifold
    x0 = m.check_point(np.asarray(x0, float))
    rng = stream(seed, TAG_TRAJECTORY, n, replica)
    base_frame = m.frame(x0)
    frame = base_frame.copy()
    s = x0.copy()
    alpha = 1.0 / n
    points = [s]
    incs, pulled = [], []
    for _ in range(n):
        sampling_frame = frame if family.uses_transported_frame else None
        x = family.sample(s, rng, frame=sampling_frame)
        coords = _frame_coords(m, s, x, frame)
        incs.append(x)
        pulled.append(base_frame @ coords)
        s, frame = _step(m, s, frame, x, alpha)
        points.append(s)
    return WalkTrajectory(m.id, x0, alpha, np.array(points), np.array(incs), np.array(pulled))


def pullback_vectors(traj):
    """``v_k = Exp_{x0}^{-1}(S_k)`` (principal branch) for ``k = 0..n``."""
    m = traj.manifold
    inj = m.injectivity_radius(traj.x0)
    x0 = np.broadcast_to(traj.x0, traj.points.shape)
    d = m.dist(x0, traj.points)
    bad = np.nonzero(d >= inj)[0]
    if bad.size:
        raise PreconditionError(f"S_{int(bad[0])} is at distance {d[bad[0]]:.6g} from x0, "
                                f"not inside the injectivity radius {inj:.6g}")
    v, _ = m._log(x0, traj.points)
    return v


def transported_increment_sum(traj, l):
    """``(1/n) * sum_{k <= l} tau^{-1} X_k`` in ``T_{x0} M``."""
    if not 0 <= l <= traj.n:
        raise IndexError(f"l = {l} outside 0..{traj.n}")
    return traj.scale * traj.transported_increments[:l].sum(axis=0) if l else np.zeros_like(traj.x0)


# --- subdivision ---------------------------------------------------------------

SCHEMES = ("walk-path", "geodesic-anchored")


@dataclasses.dataclass
class SubdivisionRecord:
    m: int
    boundaries: list
    tilde_v: np.ndarray
    pulled_v: np.ndarray
    transport_scheme: str
    anchor: np.ndarray = None
    cut_locus_flags: list = dataclasses.field(default_factory=list)

    def to_json(self):
        return json.dumps({
            "m": self.m,
            "boundaries": list(map(int, self.boundaries)),
            "tilde_v": self.tilde_v.tolist(),
            "pulled_v": self.pulled_v.tolist(),
            "transport_scheme": self.transport_scheme,
            "anchor": None if self.anchor is None else np.asarray(self.anchor).tolist(),
            "cut_locus_flags": list(map(bool, self.cut_locus_flags)),
        }, sort_keys=True)


def boundaries(n, m):
    """``n_l = l * floor(n/m)`` for ``l < m`` and ``n_m = n``."""
    step = n // m
    return [l * step for l in range(m)] + [n]


def _anchor_transport(manifold, x0, anchor, m, i, x_i, vec, inverse):
    """``tau_{y_i x_i} tau_{x0 y_i}`` (or its inverse) applied to ``vec``.

    Returns ``(vector, cut)`` where ``cut`` flags a canonical tie-break.
    """
    y_i = manifold._exp(x0, (i / m) * anchor)
    w, cut = manifold._log(y_i, x_i)
    if not inverse:
        u = manifold._transport(x0, (i / m) * anchor, vec)
        return manifold._transport(y_i, w, u), bool(cut)
    # back from x_i to y_i along the reversed minimal geodesic, then back to x0
    back = -manifold._transport(y_i, w, w)
    u = manifold._transport(x_i, back, vec)
    anchor_end = manifold._transport(x0, (i / m) * anchor, (i / m) * anchor)
    return manifold._transport(y_i, -anchor_end, u), bool(cut)


def subdivide_walk(traj, m, scheme="walk-path", anchor=None):
    """Split the walk into ``m`` pieces and pull each piece's log back to ``x0``.

    ``walk-path`` transports along the chain of piece geodesics
    ``S_{n_0} -> S_{n_1} -> ...``; ``geodesic-anchored`` uses the anchor
    geodesic ``t -> Exp_{x0}(t v)`` and minimal geodesics to it, scaling the
    result by ``m`` to match :func:`psi_m`.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown transport scheme {scheme!r}")
    if (anchor is None) == (scheme == "geodesic-anchored"):
        raise ValueError("an anchor vector is required for, and only for, the geodesic-anchored scheme")
    man = traj.manifold
    n = traj.n
    if m < 1 or m > n:
        raise PreconditionError(f"m = {m} must lie in 1..n")
    r = float(np.max(man.norm(traj.points[:-1], traj.increments))) if n else 0.0
    inj = man.injectivity_radius(traj.x0)
    if m < 2 * r / inj:
        raise PreconditionError(f"m = {m} is below 2 r / injectivity radius = {2 * r / inj:.6g}")
    bnd = boundaries(n, m)
    x0 = traj.x0
    tilde, pulled, flags = [], [], []
    frame0 = man.frame(x0)
    frame = frame0.copy()
    for l in range(m):
        a, b = traj.points[bnd[l]], traj.points[bnd[l + 1]]
        if man.dist(a, b) >= man.injectivity_radius(a):
            raise PreconditionError(f"piece {l} is longer than the injectivity radius")
        w, _ = man._log(a, b)
        tilde.append(w)
        if scheme == "walk-path":
            coords = _frame_coords(man, a, w, frame)
            pulled.append(frame0 @ coords)
            frame = np.stack([man._transport(a, w, frame[:, i]) for i in range(man.dim)], axis=-1)
            flags.append(False)
        else:
            v, cut = _anchor_transport(man, x0, np.asarray(anchor, float), m, l, a, w, inverse=True)
            pulled.append(m * man.proj(x0, v))
            flags.append(cut)
    return SubdivisionRecord(m, bnd, np.array(tilde), np.array(pulled), scheme,
                             None if anchor is None else np.asarray(anchor, float), flags)


def psi_m(manifold, x0, vs, scheme="walk-path", anchor=None, return_flags=False):
    """Recursive exponential map ``(T_{x0}M)^m -> M``.

    ``walk-path``: ``x_{i+1} = Exp_{x_i}(tau v_{i+1})`` with ``tau`` along the
    chain of previous pieces, so ``psi_m(v/m, ..., v/m) = Exp_{x0}(v)``.
    ``geodesic-anchored``: ``x_{i+1} = Exp_{x_i}(tau_{y_i x_i} tau_{x0 y_i} v_{i+1} / m)``
    with ``y_i = Exp_{x0}(i v / m)``, so ``psi_m(v, ..., v) = Exp_{x0}(v)``.
    """
    man = get_manifold(manifold)
    x0 = man.check_point(np.asarray(x0, float))
    vs = [man.check_tangent(x0, v) for v in vs]
    m = len(vs)
    x = x0
    flags = []
    if scheme == "walk-path":
        frame0 = man.frame(x0)
        frame = frame0.copy()
        for v in vs:
            w = frame @ _frame_coords(man, x0, v, frame0)
            frame = np.stack([man._transport(x, w, frame[:, i]) for i in range(man.dim)], axis=-1)
            x = man._exp(x, w)
            flags.append(False)
    elif scheme == "geodesic-anchored":
        if anchor is None:
            raise ValueError("the geodesic-anchored scheme needs an anchor vector")
        anchor = np.asarray(anchor, float)
        for i, v in enumerate(vs):
            w, cut = _anchor_transport(man, x0, anchor, m, i, x, v, inverse=False)
            x = man._exp(x, w / m)
            flags.append(cut)
    else:
        raise ValueError(f"unknown transport scheme {scheme!r}")
    return (x, flags) if return_flags else x


# --- batched simulation ----------------------------------------------------------

@dataclasses.dataclass
class WalkBatch:
    """Endpoints of many replicas plus optional per-checkpoint statistics.

    ``pullback[l]`` holds ``Exp_{x0}^{-1} S_l`` and ``zsum[l]`` the sum
    ``(1/n) sum_{k<=l} tau^{-1} X_k`` for each replica.
    """

    n: int
    endpoints: np.ndarray
    pullback: dict
    zsum: dict


def simulate_walks(family, x0, n, replicas, seed, checkpoints=(), sampling="policy",
                   block_size=BLOCK_SIZE, tag=TAG_BATCH):
    """Run ``replicas`` independent rescaled walks in vectorized blocks.

    ``sampling="policy"`` draws each increment in the frame-policy frame at
    the current point; ``"transported"`` uses the frame carried from ``x0``.
    For isotropic families both give the same law and the latter is cheaper.
    """
    man = family.manifold
    x0 = man.check_point(np.asarray(x0, float))
    checkpoints = sorted(set(int(c) for c in checkpoints))
    if any(c < 0 or c > n for c in checkpoints):
        raise IndexError("checkpoint outside 0..n")
    frame0 = man.frame(x0)
    alpha = 1.0 / n
    ends, pulls, zs = [], {c: [] for c in checkpoints}, {c: [] for c in checkpoints}
    n_blocks = int(math.ceil(replicas / block_size))
    for b in range(n_blocks):
        size = min(block_size, replicas - b * block_size)
        rng = stream(seed, tag, n, b)
        s = np.broadcast_to(x0, (size, man.ambient_dim)).copy()
        frame = np.broadcast_to(frame0, (size,) + frame0.shape).copy()
        z = np.zeros((size, man.dim))
        for k in range(n + 1):
            if k in pulls:
                pulls[k].append(man._log(np.broadcast_to(x0, s.shape), s)[0])
                zs[k].append(alpha * z @ frame0.T)
            if k == n:
                break
            if sampling == "transported" or family.uses_transported_frame:
                x = family.sample(s, rng, frame=frame)
            else:
                x = family.sample(s, rng)
            if checkpoints:
                z += _frame_coords(man, s, x, frame)
            s, frame = _step(man, s, frame, x, alpha)
        ends.append(s)
    return WalkBatch(n, np.concatenate(ends),
                     {c: np.concatenate(v) for c, v in pulls.items()},
                     {c: np.concatenate(v) for c, v in zs.items()})


def simulate_endpoints(family, x0, n, replicas, seed, block_size=BLOCK_SIZE):
    """Endpoints only, with transported-frame sampling (same law, cheaper)."""
    return simulate_walks(family, x0, n, replicas, seed, sampling="transported",
                          block_size=block_size, tag=TAG_ENDPOINT).endpoints
