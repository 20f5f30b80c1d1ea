"""Cloud normalization, viewpoint occlusion splits, and view sampling.

A split removes the k points nearest to a viewpoint on the unit sphere,
simulating partial observation. k is round-half-up of m * missing_ratio and
both sides must stay nonempty. Everything here is a pure function of its
inputs and seed.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, as_cloud

_DEGENERATE_SCALE = 1e-15


@dataclass(frozen=True)
class ViewSpec:
    """A unit viewpoint direction plus the fraction of points to remove."""

    viewpoint: np.ndarray
    missing_ratio: float

    def __post_init__(self):
        v = np.asarray(self.viewpoint, dtype=np.float64).reshape(3)
        if not np.isfinite(v).all():
            raise ValueError("invalid coordinate: viewpoint contains NaN or Inf")
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValueError("viewpoint must lie on the unit sphere")
        if not (0.0 < self.missing_ratio < 1.0):
            raise ValueError("missing_ratio must be strictly inside (0, 1)")
        v.setflags(write=False)
        object.__setattr__(self, "viewpoint", v)


def normalize_cloud(cloud) -> PointCloud:
    """Center at the centroid and scale so the farthest point has norm 1.

    A cloud of identical points maps to all zeros. Idempotent up to float
    rounding, and invariant to any positive scaling or translation of the
    input.
    """
    c = as_cloud(cloud)
    if len(c) == 0:
        raise ValueError("empty cloud")
    centered = c.points - c.points.mean(axis=0)
    scale = float(np.linalg.norm(centered, axis=1).max())
    if scale < _DEGENERATE_SCALE:
        return PointCloud(np.zeros_like(centered), label=c.label)
    return PointCloud(centered / scale, label=c.label)


def split_by_viewpoint(complete, spec: ViewSpec) -> tuple[PointCloud, PointCloud]:
    """Split a cloud into (incomplete, missing) around a viewpoint.

    The missing side is the round(m * ratio) points nearest the viewpoint
    (distance ties broken by lowest point-id); the incomplete side is the
    rest. Both sides preserve input order and together restore the input
    exactly.
    """
    c = as_cloud(complete)
    m = len(c)
    if m < 2:
        raise ValueError("degenerate split: need at least 2 points")
    k = int(np.floor(m * spec.missing_ratio + 0.5))
    if k < 1 or k > m - 1:
        raise ValueError(f"degenerate split: ratio {spec.missing_ratio} leaves an empty side for {m} points")
    dists = ((c.points - spec.viewpoint) ** 2).sum(axis=1)
    order = np.argsort(dists, kind="stable")
    missing_ids = np.sort(order[:k])
    incomplete_ids = np.sort(order[k:])
    return (
        PointCloud(c.points[incomplete_ids], label=c.label),
        PointCloud(c.points[missing_ids], label=c.label),
    )


def _label_entropy(label: str | None) -> list[int]:
    return [] if label is None else [zlib.crc32(label.encode("utf-8"))]


def random_viewpoints(n: int, rng: np.random.Generator) -> np.ndarray:
    """n directions drawn uniformly on the unit sphere."""
    v = rng.standard_normal((n, 3))
    norms = np.linalg.norm(v, axis=1)
    degenerate = norms < 1e-12
    v[degenerate] = (1.0, 0.0, 0.0)
    norms[degenerate] = 1.0
    return v / norms[:, None]


def sample_view_set(complete, n: int, ratio: float, seed: int) -> list[tuple[PointCloud, PointCloud]]:
    """Draw n (incomplete, missing) splits from seeded random viewpoints.

    The generator is seeded by (seed, cloud label), so the same seed and
    object always reproduce the same views.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    c = as_cloud(complete)
    rng = np.random.default_rng([int(seed)] + _label_entropy(c.label))
    viewpoints = random_viewpoints(n, rng)
    return [split_by_viewpoint(c, ViewSpec(v, ratio)) for v in viewpoints]


def resample(cloud, m: int, seed: int = 0) -> PointCloud:
    """Return exactly m points from a cloud.

    Downsampling uses farthest-point sampling started from point 0;
    upsampling repeats points round-robin in id order. Deterministic; the
    seed parameter is reserved for alternative policies.
    """
    c = as_cloud(cloud)
    n = len(c)
    if n == 0:
        raise ValueError("empty cloud")
    if m < 1:
        raise ValueError("m must be >= 1")
    if n == m:
        return c
    pts = c.points
    if n < m:
        pad = pts[np.arange(m - n) % n]
        return PointCloud(np.vstack([pts, pad]), label=c.label)
    selected = np.empty(m, dtype=np.intp)
    selected[0] = 0
    dist = ((pts - pts[0]) ** 2).sum(axis=1)
    for i in range(1, m):
        j = int(np.argmax(dist))  # first max == lowest id on ties
        selected[i] = j
        dist = np.minimum(dist, ((pts - pts[j]) ** 2).sum(axis=1))
    return PointCloud(pts[selected], label=c.label)
