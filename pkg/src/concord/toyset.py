"""Synthetic shape corpus and adversarial toy-dataset mining.

The miner builds a dataset in which incomplete views are mutually similar
while the matching missing parts are dissimilar, the degenerate regime for
per-sample Chamfer supervision. Each pass samples a seed element, finds its
k1 nearest neighbors by incomplete-side Chamfer distance, keeps the k2 of
those with the highest missing-side Chamfer distance, and appends seed and
picks (skipping duplicates) until n unique elements are collected.

The uniform sampler provides the matched control dataset, and the shape
corpus stands in for a real scan collection: five parametric families
sampled uniformly by surface area and normalized to the unit sphere.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, as_cloud, build_index, chamfer_l2
from .losses import CompletionSample
from .views import ViewSpec, normalize_cloud, sample_view_set, split_by_viewpoint


@dataclass(frozen=True)
class ToyParams:
    """Mining knobs: neighbor pool k1, adversaries per seed k2, target size n."""

    k1: int = 100
    k2: int = 5
    n: int = 5000

    def __post_init__(self):
        if self.k1 < 1 or self.k2 < 1 or self.n < 1:
            raise ValueError("k1, k2 and n must all be >= 1")
        if self.k2 > self.k1:
            raise ValueError("k2 must not exceed k1")


@dataclass(frozen=True)
class MiningResult:
    """Mined dataset plus the neighbor groups that produced it."""

    elements: tuple[CompletionSample, ...]
    indices: tuple[int, ...]
    groups: tuple[tuple[int, tuple[int, ...]], ...]


def canonical_split(cloud, ratio: float = 0.75, seed: int = 0) -> CompletionSample:
    """Attach one fixed (incomplete, missing) view to a cloud for mining."""
    c = as_cloud(cloud)
    view = sample_view_set(c, 1, ratio, seed)[0]
    return CompletionSample(gt_complete=c, views=(view,))


def mine_adversarial_subset(corpus, params: ToyParams, seed: int) -> MiningResult:
    """Mine an n-element adversarial subset from elements with fixed splits.

    Every element of ``corpus`` is a CompletionSample whose first view is
    its canonical split. Deterministic in ``seed``; duplicates are detected
    by corpus index.
    """
    corpus = list(corpus)
    size = len(corpus)
    if size <= params.k1:
        raise ValueError(f"insufficient corpus: need more than k1={params.k1} elements, got {size}")
    if params.n > size:
        raise ValueError(f"insufficient corpus: cannot mine {params.n} unique elements from {size}")

    incs = [s.views[0][0] for s in corpus]
    miss = [s.views[0][1] for s in corpus]
    inc_idx = [build_index(c) for c in incs]
    mis_idx = [build_index(c) for c in miss]

    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    member = set()
    groups: list[tuple[int, tuple[int, ...]]] = []

    def add(i: int) -> None:
        if i not in member:
            member.add(i)
            chosen.append(i)

    max_rounds = 200 * size
    rounds = 0
    while len(chosen) < params.n:
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError("mining failed to reach the requested size")
        x = int(rng.integers(size))
        inc_cd = np.array([
            chamfer_l2(incs[x], incs[y], index_a=inc_idx[x], index_b=inc_idx[y])
            for y in range(size)
        ])
        pool = np.argsort(inc_cd, kind="stable")[: params.k1]
        mis_cd = np.array([
            chamfer_l2(miss[x], miss[z], index_a=mis_idx[x], index_b=mis_idx[z])
            for z in pool
        ])
        picks = pool[np.argsort(-mis_cd, kind="stable")[: params.k2]]
        add(x)
        for z in picks:
            add(int(z))
        groups.append((x, tuple(int(z) for z in picks)))

    chosen = chosen[: params.n]
    return MiningResult(
        elements=tuple(corpus[i] for i in chosen),
        indices=tuple(chosen),
        groups=tuple(groups),
    )


def sample_uniform_subset(corpus, n: int, seed: int) -> list[CompletionSample]:
    """n distinct elements drawn uniformly without replacement."""
    corpus = list(corpus)
    if n > len(corpus):
        raise ValueError(f"insufficient corpus: cannot draw {n} from {len(corpus)}")
    rng = np.random.default_rng(seed)
    indices = rng.choice(len(corpus), size=n, replace=False)
    return [corpus[int(i)] for i in indices]


def uniform_groups(count: int, group_size: int, population: int, seed: int) -> tuple[tuple[int, tuple[int, ...]], ...]:
    """Random groups shaped like mining groups, for the control statistic."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        ids = rng.choice(population, size=group_size, replace=False)
        out.append((int(ids[0]), tuple(int(i) for i in ids[1:])))
    return tuple(out)


def group_cd_stats(corpus, groups) -> tuple[float, float]:
    """Mean seed-to-pick CD of incomplete and of missing sides.

    A neighbor group is one seed element plus its selected adversaries; the
    selection pressure acts on exactly these pairs, so they carry the
    dataset's defining statistic.
    """
    corpus = list(corpus)
    inc_vals: list[float] = []
    mis_vals: list[float] = []
    for x, picks in groups:
        for z in picks:
            inc_vals.append(chamfer_l2(corpus[x].views[0][0], corpus[z].views[0][0]))
            mis_vals.append(chamfer_l2(corpus[x].views[0][1], corpus[z].views[0][1]))
    return float(np.mean(inc_vals)), float(np.mean(mis_vals))


# --- parametric shape corpus ---------------------------------------------


@dataclass(frozen=True)
class ShapeSpec:
    """One shape family with per-dimension sampling ranges and a point count."""

    family: str
    dims: dict[str, tuple[float, float]]
    points: int = 128

    def __post_init__(self):
        if self.family not in _BUILDERS:
            raise ValueError(f"invalid shape: unknown family {self.family!r}")
        if self.points < 1:
            raise ValueError("invalid shape: points must be >= 1")
        for name, (lo, hi) in self.dims.items():
            if not (np.isfinite(lo) and np.isfinite(hi) and 0.0 < lo <= hi):
                raise ValueError(f"invalid shape: dimension {name} range must be positive, got ({lo}, {hi})")


class _Patch:
    """A sampleable surface piece with a known area."""

    __slots__ = ("area", "_fn")

    def __init__(self, area: float, fn):
        self.area = float(area)
        self._fn = fn

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self._fn(count, rng)


def _rect(origin, u, v) -> _Patch:
    origin, u, v = (np.asarray(a, dtype=np.float64) for a in (origin, u, v))
    area = float(np.linalg.norm(np.cross(u, v)))

    def fn(count, rng):
        ab = rng.random((count, 2))
        return origin + ab[:, :1] * u + ab[:, 1:] * v

    return _Patch(area, fn)


def _disk(center, radius, e1, e2) -> _Patch:
    center, e1, e2 = (np.asarray(a, dtype=np.float64) for a in (center, e1, e2))

    def fn(count, rng):
        r = radius * np.sqrt(rng.random(count))
        theta = 2.0 * np.pi * rng.random(count)
        return center + (r * np.cos(theta))[:, None] * e1 + (r * np.sin(theta))[:, None] * e2

    return _Patch(np.pi * radius * radius, fn)


def _cylinder_side(radius, z0, z1) -> _Patch:
    def fn(count, rng):
        theta = 2.0 * np.pi * rng.random(count)
        z = z0 + (z1 - z0) * rng.random(count)
        return np.column_stack([radius * np.cos(theta), radius * np.sin(theta), z])

    return _Patch(2.0 * np.pi * radius * (z1 - z0), fn)


def _box(lo, hi) -> list[_Patch]:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    d = hi - lo
    ex, ey, ez = np.diag(d)
    return [
        _rect(lo, ex, ey),
        _rect(lo + (0, 0, d[2]), ex, ey),
        _rect(lo, ex, ez),
        _rect(lo + (0, d[1], 0), ex, ez),
        _rect(lo, ey, ez),
        _rect(lo + (d[0], 0, 0), ey, ez),
    ]


def _build_cuboid(dm):
    w, d, h = dm["width"], dm["depth"], dm["height"]
    return _box((-w / 2, -d / 2, -h / 2), (w / 2, d / 2, h / 2))


def _build_cylinder(dm):
    r, h = dm["radius"], dm["height"]
    ex, ey = np.eye(3)[0], np.eye(3)[1]
    return [
        _cylinder_side(r, -h / 2, h / 2),
        _disk((0, 0, -h / 2), r, ex, ey),
        _disk((0, 0, h / 2), r, ex, ey),
    ]


def _build_table(dm):
    w, d = dm["width"], dm["depth"]
    slab_t, leg_t, leg_h = dm["slab"], dm["leg"], dm["leg_height"]
    patches = _box((-w / 2, -d / 2, leg_h), (w / 2, d / 2, leg_h + slab_t))
    inset = leg_t / 2
    for sx in (-1, 1):
        for sy in (-1, 1):
            cx = sx * (w / 2 - inset - leg_t / 2)
            cy = sy * (d / 2 - inset - leg_t / 2)
            patches += _box((cx - leg_t / 2, cy - leg_t / 2, 0.0), (cx + leg_t / 2, cy + leg_t / 2, leg_h))
    return patches


def _build_bed(dm):
    w, d = dm["width"], dm["depth"]
    slab_t, head_t, head_h = dm["slab"], dm["head"], dm["head_height"]
    patches = _box((-w / 2, -d / 2, 0.0), (w / 2, d / 2, slab_t))
    patches += _box((-w / 2, -d / 2, slab_t), (-w / 2 + head_t, d / 2, slab_t + head_h))
    return patches


def _build_lbracket(dm):
    lx, lz = dm["arm_x"], dm["arm_z"]
    w, t = dm["width"], dm["thickness"]
    patches = _box((0.0, 0.0, 0.0), (lx, w, t))
    patches += _box((0.0, 0.0, t), (t, w, lz))
    return patches


_BUILDERS = {
    "cuboid": _build_cuboid,
    "cylinder": _build_cylinder,
    "table": _build_table,
    "bed": _build_bed,
    "lbracket": _build_lbracket,
}


def default_shape_specs(points: int = 128) -> list[ShapeSpec]:
    """The five stock families with their dimension ranges."""
    return [
        ShapeSpec("cuboid", {"width": (0.4, 1.6), "depth": (0.4, 1.6), "height": (0.4, 1.6)}, points),
        ShapeSpec("cylinder", {"radius": (0.25, 0.8), "height": (0.5, 1.8)}, points),
        ShapeSpec("table", {"width": (0.8, 1.6), "depth": (0.8, 1.6), "slab": (0.05, 0.12),
                            "leg": (0.06, 0.14), "leg_height": (0.5, 1.1)}, points),
        ShapeSpec("bed", {"width": (1.2, 2.0), "depth": (0.8, 1.4), "slab": (0.1, 0.25),
                          "head": (0.05, 0.12), "head_height": (0.4, 0.9)}, points),
        ShapeSpec("lbracket", {"arm_x": (0.6, 1.4), "arm_z": (0.6, 1.4), "width": (0.3, 0.8),
                               "thickness": (0.08, 0.2)}, points),
    ]


def sample_shape_surface(patches: list[_Patch], count: int, rng: np.random.Generator) -> np.ndarray:
    """Area-uniform samples over a list of patches."""
    areas = np.array([p.area for p in patches])
    probs = areas / areas.sum()
    picks = rng.choice(len(patches), size=count, p=probs)
    counts = np.bincount(picks, minlength=len(patches))
    blocks = [p.sample(c, rng) for p, c in zip(patches, counts) if c > 0]
    return np.vstack(blocks)


def generate_shape_cloud(spec: ShapeSpec, rng: np.random.Generator, label: str | None = None) -> PointCloud:
    """One normalized cloud with dimensions drawn from the spec's ranges."""
    dims = {name: lo + (hi - lo) * rng.random() for name, (lo, hi) in spec.dims.items()}
    patches = _BUILDERS[spec.family](dims)
    pts = sample_shape_surface(patches, spec.points, rng)
    return normalize_cloud(PointCloud(pts, label=label))


def generate_shape_corpus(specs, count_per_family: int, seed: int) -> list[PointCloud]:
    """count_per_family normalized clouds from each spec, deterministic in seed."""
    if count_per_family < 1:
        raise ValueError("count_per_family must be >= 1")
    out = []
    for fam_id, spec in enumerate(specs):
        for i in range(count_per_family):
            rng = np.random.default_rng([seed, fam_id, i])
            out.append(generate_shape_cloud(spec, rng, label=f"{spec.family}-{i:04d}"))
    return out


# --- explicit one-to-many corpus ------------------------------------------

_UNDER_Z = (-0.55, 0.15)
N_UNDERSTRUCTURES = 4


def _understructure(variant: int, reach: float) -> list[_Patch]:
    """One of four structurally distinct supports under a shared tabletop.

    All variants are xy-symmetric and span the same height band, so sibling
    objects normalize almost identically and differ only below the top.
    """
    z0, z1 = _UNDER_Z
    if variant == 0:  # twin pillars
        return (_box((reach - 0.09, -0.09, z0), (reach + 0.09, 0.09, z1))
                + _box((-reach - 0.09, -0.09, z0), (-reach + 0.09, 0.09, z1)))
    if variant == 1:  # central column
        return _box((-0.13, -0.13, z0), (0.13, 0.13, z1))
    if variant == 2:  # four corner legs
        patches = []
        for sx in (1, -1):
            for sy in (1, -1):
                cx, cy = sx * 0.8 * reach, sy * 0.8 * reach
                patches += _box((cx - 0.06, cy - 0.06, z0), (cx + 0.06, cy + 0.06, z1))
        return patches
    if variant == 3:  # panel wall along x
        return _box((-reach - 0.09, -0.05, z0), (reach + 0.09, 0.05, z1))
    raise ValueError(f"invalid shape: unknown understructure variant {variant}")


def generate_one_to_many_corpus(n_groups: int, points: int = 128, seed: int = 0) -> list[PointCloud]:
    """Groups of objects sharing an identical tabletop over different supports.

    Every group samples one slab point set and reuses it across all
    understructure variants, so an observer who only sees the top cannot
    tell the variants apart: the one-to-many completion regime in its purest
    form. A quarter of each cloud is slab, the rest understructure, matching
    the hard 0.75 missing ratio when viewed from below.
    """
    if n_groups < 1:
        raise ValueError("n_groups must be >= 1")
    if points < 8:
        raise ValueError("points must be >= 8")
    out = []
    n_slab = points // 4
    for g in range(n_groups):
        grng = np.random.default_rng([seed, 0xB0B, g])
        w = 1.3 + 0.5 * grng.random()
        d = 1.3 + 0.5 * grng.random()
        t = 0.08 + 0.06 * grng.random()
        slab = _box((-w / 2, -d / 2, 0.55), (w / 2, d / 2, 0.55 + t))
        slab_pts = sample_shape_surface(slab, n_slab, grng)
        reach = 0.35 * min(w, d)
        for v in range(N_UNDERSTRUCTURES):
            rng = np.random.default_rng([seed, 0xB0B, g, v])
            under_pts = sample_shape_surface(_understructure(v, reach), points - n_slab, rng)
            cloud = PointCloud(np.vstack([slab_pts, under_pts]), label=f"shared-top-{g:03d}-{v}")
            out.append(normalize_cloud(cloud))
    return out


def underside_split(cloud, seed: int = 0, jitter: float = 0.05) -> CompletionSample:
    """Canonical mining split observing an object from below.

    The viewpoint is the -z axis with a small seeded perturbation; for
    shared-top objects this leaves the tabletop as the incomplete cloud and
    removes the understructure, at the hard 0.75 ratio.
    """
    c = as_cloud(cloud)
    rng = np.random.default_rng([int(seed)] + ([zlib.crc32(c.label.encode())] if c.label else []))
    v = np.array([0.0, 0.0, -1.0]) + jitter * rng.standard_normal(3)
    v /= np.linalg.norm(v)
    inc, mis = split_by_viewpoint(c, ViewSpec(v, 0.75))
    return CompletionSample(gt_complete=c, views=((inc, mis),))
