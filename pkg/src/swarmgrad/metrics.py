"""Behavioral metrics over recorded trajectories.

Five complementary summaries of a run: polarization (directional order),
relative circular area (how circular the group footprint is), maximum
center-of-mass displacement (net translation), center distance (minimum
agent distance to the center of mass, a cohesion proxy), and directional
fragmentation (DBSCAN over headings in circular space, giving mean
cluster count K and clustered fraction F).

Unless stated otherwise metrics are time-averaged over an evaluation
window (by default the final half of the run, excluding transients);
maximum displacement uses the full run. Fragmentation is evaluated every
DBSCAN_STRIDE steps of the window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .world import wrap_angle

DBSCAN_STRIDE = 10
NOISE = -1  # DBSCAN label for unclustered points


@dataclass(frozen=True)
class Trajectory:
    """Recorded run: per-step poses and the actions chosen at each step."""

    poses: np.ndarray  # (T, N, 3) x, y, theta
    actions: np.ndarray  # (T, N, 2) v, omega
    dt: float
    seed: int
    params: object = None  # SimParams echo when produced by the harness

    @property
    def n_steps(self):
        return self.poses.shape[0]

    @property
    def n_agents(self):
        return self.poses.shape[1]


@dataclass(frozen=True)
class MetricsReport:
    """The five metrics plus the window they were evaluated on."""

    P: float
    RCA: float
    D: float
    C: float
    K: float
    F: float
    eval_window: tuple

    def to_dict(self):
        return {
            "P": self.P, "RCA": self.RCA, "D": self.D,
            "C": self.C, "K": self.K, "F": self.F,
            "eval_window": list(self.eval_window),
        }


def eval_window(n_steps: int, fraction: float = 0.5) -> tuple:
    """Final ``fraction`` of steps as a half-open (start, stop) range."""
    start = n_steps - max(1, int(round(fraction * n_steps)))
    return (max(0, start), n_steps)


def polarization(trajectory: Trajectory, window: tuple) -> float:
    """Mean magnitude of the average unit-heading vector."""
    lo, hi = window
    th = trajectory.poses[lo:hi, :, 2]
    vx = np.cos(th).mean(axis=1)
    vy = np.sin(th).mean(axis=1)
    return float(np.hypot(vx, vy).mean())


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise convex hull by monotone chain.

    Collinear boundary points are excluded. Returns an (H, 2) array;
    degenerate inputs give fewer than 3 vertices.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def build(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    return np.array(hull)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def polygon_area(vertices) -> float:
    """Shoelace area of a simple polygon (positive for CCW order)."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def min_enclosing_circle(points, seed: int = 0):
    """Smallest circle containing all points (Welzl, move-to-front style).

    Expected linear time under the seeded shuffle; the circle itself is
    unique, so the seed affects only the search order. Returns
    (center (2,), radius).
    """
    pts = [tuple(map(float, p)) for p in np.asarray(points, dtype=float)]
    if not pts:
        raise ValueError("need at least one point")
    order = np.random.default_rng(seed).permutation(len(pts))
    pts = [pts[k] for k in order]

    c = (pts[0][0], pts[0][1], 0.0)
    for i, p in enumerate(pts[1:], start=1):
        if _in_circle(c, p):
            continue
        c = (p[0], p[1], 0.0)
        for k, q in enumerate(pts[:i]):
            if _in_circle(c, q):
                continue
            c = _circle_two(p, q)
            for r in pts[:k]:
                if not _in_circle(c, r):
                    c = _circumcircle(p, q, r)
    return np.array([c[0], c[1]]), c[2]


def _in_circle(c, p, slack=1e-9):
    return np.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * (1.0 + 1e-12) + slack


def _circle_two(a, b):
    cx = 0.5 * (a[0] + b[0])
    cy = 0.5 * (a[1] + b[1])
    r = max(np.hypot(a[0] - cx, a[1] - cy), np.hypot(b[0] - cx, b[1] - cy))
    return (cx, cy, r)


def _circumcircle(a, b, c):
    # relative to a for conditioning
    bx, by = b[0] - a[0], b[1] - a[1]
    cx, cy = c[0] - a[0], c[1] - a[1]
    d = 2.0 * (bx * cy - by * cx)
    if d == 0.0:  # collinear; fall back to the widest two-point circle
        cands = [_circle_two(a, b), _circle_two(a, c), _circle_two(b, c)]
        return max(cands, key=lambda circ: circ[2])
    ux = (cy * (bx * bx + by * by) - by * (cx * cx + cy * cy)) / d
    uy = (bx * (cx * cx + cy * cy) - cx * (bx * bx + by * by)) / d
    px, py = a[0] + ux, a[1] + uy
    r = max(
        np.hypot(px - a[0], py - a[1]),
        np.hypot(px - b[0], py - b[1]),
        np.hypot(px - c[0], py - c[1]),
    )
    return (px, py, r)


def rca(trajectory: Trajectory, window: tuple) -> float:
    """Time-averaged hull area over enclosing-circle area, in [0, 1].

    Steps whose configuration is degenerate (fewer than 3 distinct
    non-collinear agents, or a zero-radius circle) contribute 0.
    """
    lo, hi = window
    vals = []
    for t in range(lo, hi):
        pts = trajectory.poses[t, :, :2]
        hull = convex_hull(pts)
        area = polygon_area(hull)
        if area <= 0.0:
            vals.append(0.0)
            continue
        _, r = min_enclosing_circle(pts)
        vals.append(min(area / (np.pi * r * r), 1.0) if r > 0 else 0.0)
    return float(np.mean(vals))


def max_mean_displacement(trajectory: Trajectory) -> float:
    """Max over time of |COM(t) - COM(0)|, over the full run."""
    com = trajectory.poses[:, :, :2].mean(axis=1)
    return float(np.hypot(*(com - com[0]).T).max())


def center_distance(trajectory: Trajectory, window: tuple) -> float:
    """Time-averaged minimum agent distance to the center of mass."""
    lo, hi = window
    pos = trajectory.poses[lo:hi, :, :2]
    com = pos.mean(axis=1, keepdims=True)
    dists = np.hypot(pos[:, :, 0] - com[:, :, 0], pos[:, :, 1] - com[:, :, 1])
    return float(dists.min(axis=1).mean())


def mean_com_distance(trajectory: Trajectory, window: tuple) -> float:
    """Time-averaged mean agent distance to the center of mass.

    Not one of the five report metrics; used as the ring-radius proxy in
    regime checks.
    """
    lo, hi = window
    pos = trajectory.poses[lo:hi, :, :2]
    com = pos.mean(axis=1, keepdims=True)
    dists = np.hypot(pos[:, :, 0] - com[:, :, 0], pos[:, :, 1] - com[:, :, 1])
    return float(dists.mean())


def mean_mec_radius(trajectory: Trajectory, window: tuple, stride: int = DBSCAN_STRIDE) -> float:
    """Time-averaged minimum-enclosing-circle radius (regime diagnostics)."""
    lo, hi = window
    radii = [min_enclosing_circle(trajectory.poses[t, :, :2])[1]
             for t in range(lo, hi, stride)]
    return float(np.mean(radii))


def circular_dbscan(headings, eps: float, min_pts: int) -> np.ndarray:
    """DBSCAN on angles with metric |wrap(a - b)|.

    Returns integer labels: cluster ids 0, 1, ... in discovery order and
    NOISE (-1) for unclustered points. Core points need at least min_pts
    points (including themselves) within eps. Deterministic: points are
    visited in index order.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")
    h = np.asarray(headings, dtype=float)
    n = h.size
    adj = np.abs(wrap_angle(h[:, None] - h[None, :])) <= eps
    counts = adj.sum(axis=1)
    core = counts >= min_pts
    labels = np.full(n, NOISE, dtype=int)
    cluster = 0
    for start in range(n):
        if labels[start] != NOISE or not core[start]:
            continue
        labels[start] = cluster
        frontier = [start]
        while frontier:
            p = frontier.pop()
            if not core[p]:
                continue
            for q in np.nonzero(adj[p])[0]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                    frontier.append(q)
        cluster += 1
    return labels


def fragmentation(trajectory: Trajectory, window: tuple, eps: float,
                  min_pts: int, stride: int = DBSCAN_STRIDE):
    """Mean heading-cluster count K and clustered fraction F over the window."""
    lo, hi = window
    ks, fs = [], []
    for t in range(lo, hi, stride):
        labels = circular_dbscan(trajectory.poses[t, :, 2], eps, min_pts)
        n_clusters = labels.max() + 1 if labels.size else 0
        ks.append(n_clusters)
        fs.append(float(np.mean(labels != NOISE)))
    return float(np.mean(ks)), float(np.mean(fs))


def compute_report(trajectory: Trajectory, eps: float = 0.2, min_pts: int = 5,
                   window_fraction: float = 0.5) -> MetricsReport:
    """All five metrics for one trajectory."""
    window = eval_window(trajectory.n_steps, window_fraction)
    k, f = fragmentation(trajectory, window, eps, min_pts)
    return MetricsReport(
        P=polarization(trajectory, window),
        RCA=rca(trajectory, window),
        D=max_mean_displacement(trajectory),
        C=center_distance(trajectory, window),
        K=k,
        F=f,
        eval_window=window,
    )
