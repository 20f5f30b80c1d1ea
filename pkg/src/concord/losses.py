"""Training objective for multi-view point completion.

One sample bundles a complete cloud with n (incomplete, missing) views and
the n predicted missing clouds. The total loss combines, per sample:

  * reconstruction: squared-Chamfer between each prediction and its
    ground-truth missing set, averaged over views;
  * self-guided consistency: mean pairwise squared-Chamfer among the n
    completed views (prediction united with its own incomplete input),
    weighted by alpha;
  * target-guided consistency: mean squared-Chamfer between each completed
    view and the complete ground truth, weighted by beta;
  * optionally a density-aware Chamfer term on (prediction, missing),
    averaged over views and weighted by delta.

``loss_gradient`` returns the exact gradient of the total with respect to
every predicted coordinate, holding nearest-neighbor assignments fixed at
their argmin (the standard Chamfer subgradient; ties frozen at the lowest
point-id). Incomplete points inside a completed view contribute matches but
receive no gradient: they are inputs, not parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import (
    PointCloud,
    as_cloud,
    build_index,
    chamfer_l2,
    _min_sqdists,
    _nn_ids_sqd,
)


@dataclass(frozen=True)
class LossWeights:
    """Scaling factors: alpha (self-guided), beta (target-guided), delta (density-aware)."""

    alpha: float = 0.1
    beta: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "delta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class CompletionSample:
    """A complete cloud, its n (incomplete, missing) views, and optional predictions."""

    gt_complete: PointCloud
    views: tuple[tuple[PointCloud, PointCloud], ...]
    predictions: tuple[PointCloud, ...] | None = None

    def __post_init__(self):
        views = tuple((as_cloud(i), as_cloud(m)) for i, m in self.views)
        if len(views) < 1:
            raise ValueError("a sample needs at least one view")
        object.__setattr__(self, "gt_complete", as_cloud(self.gt_complete))
        object.__setattr__(self, "views", views)
        if self.predictions is not None:
            preds = tuple(as_cloud(p) for p in self.predictions)
            if len(preds) != len(views):
                raise ValueError("predictions must align one-to-one with views")
            object.__setattr__(self, "predictions", preds)

    @property
    def n(self) -> int:
        return len(self.views)

    def with_predictions(self, predictions) -> "CompletionSample":
        return replace(self, predictions=tuple(as_cloud(p) for p in predictions))

    def validate(self) -> None:
        """Check each view is a disjoint multiset split of the complete cloud."""
        complete = np.sort(self.gt_complete.points.view([("x", "f8"), ("y", "f8"), ("z", "f8")]), axis=0)
        for i, (inc, mis) in enumerate(self.views):
            if len(inc) == 0 or len(mis) == 0:
                raise ValueError(f"view {i}: empty cloud")
            both = np.vstack([inc.points, mis.points])
            union = np.sort(both.view([("x", "f8"), ("y", "f8"), ("z", "f8")]), axis=0)
            if union.shape != complete.shape or not np.array_equal(union, complete):
                raise ValueError(f"view {i}: incomplete and missing do not reassemble the complete cloud")
            inc_rows = {}
            for row in inc.points:
                key = row.tobytes()
                inc_rows[key] = inc_rows.get(key, 0) + 1
            for row in mis.points:
                if inc_rows.get(row.tobytes(), 0) > 0:
                    raise ValueError(f"view {i}: incomplete and missing share a point")


def completed_view(sample: CompletionSample, i: int) -> np.ndarray:
    """Prediction i united with incomplete view i (prediction rows first)."""
    if sample.predictions is None:
        raise ValueError("predictions absent")
    return np.vstack([sample.predictions[i].points, sample.views[i][0].points])


def _cd_l2_terms(x, y, idx_x, idx_y, weight, grad_x=None, grad_y=None):
    """Squared-Chamfer between x and y; accumulate weight * dCD into grads.

    grad_x / grad_y may be None when that operand holds no parameters.
    """
    if grad_x is None and grad_y is None or weight == 0.0:
        return float(_min_sqdists(idx_y, x).mean() + _min_sqdists(idx_x, y).mean())
    ids_xy, sq_xy = _nn_ids_sqd(idx_y, x)
    ids_yx, sq_yx = _nn_ids_sqd(idx_x, y)
    value = float(sq_xy.mean() + sq_yx.mean())
    p, q = len(x), len(y)
    diff_xy = x - y[ids_xy]  # x's term: ||x - nn(x)||^2
    diff_yx = y - x[ids_yx]
    if grad_x is not None:
        grad_x += (2.0 * weight / p) * diff_xy
        np.add.at(grad_x, ids_yx, (2.0 * weight / q) * -diff_yx)
    if grad_y is not None:
        grad_y += (2.0 * weight / q) * diff_yx
        np.add.at(grad_y, ids_xy, (2.0 * weight / p) * -diff_xy)
    return value


def _dacd_terms(x, y, idx_x, idx_y, weight, grad_x=None):
    """Density-aware Chamfer between x and y; gradient only into x."""
    if grad_x is None or weight == 0.0:
        d_xy = np.sqrt(_min_sqdists(idx_y, x))
        d_yx = np.sqrt(_min_sqdists(idx_x, y))
        return float((1.0 - np.exp(-d_xy)).mean() + (1.0 - np.exp(-d_yx)).mean())
    ids_xy, sq_xy = _nn_ids_sqd(idx_y, x)
    ids_yx, sq_yx = _nn_ids_sqd(idx_x, y)
    d_xy = np.sqrt(sq_xy)
    d_yx = np.sqrt(sq_yx)
    value = float((1.0 - np.exp(-d_xy)).mean() + (1.0 - np.exp(-d_yx)).mean())
    if weight != 0.0 and grad_x is not None:
        p, q = len(x), len(y)
        # d/dx (1 - e^-||x-y||) = e^-d * (x-y)/d; zero at coincident points.
        with np.errstate(divide="ignore", invalid="ignore"):
            coeff = np.where(d_xy > 0.0, np.exp(-d_xy) / np.where(d_xy > 0.0, d_xy, 1.0), 0.0)
            coeff_b = np.where(d_yx > 0.0, np.exp(-d_yx) / np.where(d_yx > 0.0, d_yx, 1.0), 0.0)
        grad_x += (weight / p) * coeff[:, None] * (x - y[ids_xy])
        np.add.at(grad_x, ids_yx, (weight / q) * coeff_b[:, None] * (x[ids_yx] - y))
    return value


def _evaluate(sample: CompletionSample, w: LossWeights, want_grad: bool):
    if sample.predictions is None:
        raise ValueError("predictions absent")
    n = sample.n
    if w.alpha > 0.0 and n < 2:
        raise ValueError("insufficient views: self-guided consistency needs n >= 2")

    preds = [p.points for p in sample.predictions]
    incs = [inc.points for inc, _ in sample.views]
    miss = [mis.points for _, mis in sample.views]
    for arr in preds + miss:
        if len(arr) == 0:
            raise ValueError("empty cloud")

    completed = [np.vstack([preds[i], incs[i]]) if len(incs[i]) else preds[i] for i in range(n)]
    idx_pred = [build_index(p) for p in preds]
    idx_mis = [build_index(m) for m in miss]

    grad_pred = [np.zeros_like(p) for p in preds] if want_grad else None
    grad_comp = [np.zeros_like(c) for c in completed] if want_grad else None

    def gp(i):
        return grad_pred[i] if want_grad else None

    def gc(i):
        return grad_comp[i] if want_grad else None

    rec = np.array([
        _cd_l2_terms(preds[i], miss[i], idx_pred[i], idx_mis[i], 1.0 / n, grad_x=gp(i))
        for i in range(n)
    ])
    total = float(np.mean(rec))

    sg = 0.0
    tg = 0.0
    need_completed = w.alpha > 0.0 or w.beta > 0.0
    if need_completed:
        idx_comp = [build_index(c) for c in completed]
        if w.beta > 0.0:
            idx_gt = build_index(sample.gt_complete)
            tg_terms = np.array([
                _cd_l2_terms(completed[i], sample.gt_complete.points, idx_comp[i], idx_gt,
                             w.beta / n, grad_x=gc(i))
                for i in range(n)
            ])
            tg = float(np.mean(tg_terms))
            total += w.beta * tg
        if w.alpha > 0.0:
            coeff = 2.0 / (n * (n - 1))
            pair_values = []
            for i in range(n - 1):
                for j in range(i + 1, n):
                    pair_values.append(
                        _cd_l2_terms(completed[i], completed[j], idx_comp[i], idx_comp[j],
                                     w.alpha * coeff, grad_x=gc(i), grad_y=gc(j))
                    )
            sg = float(coeff * np.sum(pair_values))
            total += w.alpha * sg

    if w.delta > 0.0:
        da_terms = np.array([
            _dacd_terms(preds[i], miss[i], idx_pred[i], idx_mis[i], w.delta / n, grad_x=gp(i))
            for i in range(n)
        ])
        total += w.delta * float(np.mean(da_terms))

    if want_grad:
        grads = [grad_pred[i] + grad_comp[i][: len(preds[i])] for i in range(n)]
        return total, grads
    return total, None


def reconstruction_loss(pred_missing, gt_missing) -> float:
    """Squared-Chamfer between a predicted missing set and the true one."""
    return chamfer_l2(pred_missing, gt_missing)


def self_guided_consistency(sample: CompletionSample) -> float:
    """Mean pairwise squared-Chamfer among the n completed views."""
    if sample.predictions is None:
        raise ValueError("predictions absent")
    n = sample.n
    if n < 2:
        raise ValueError("insufficient views: self-guided consistency needs n >= 2")
    completed = [completed_view(sample, i) for i in range(n)]
    indexes = [build_index(c) for c in completed]
    total = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            total += chamfer_l2(completed[i], completed[j], index_a=indexes[i], index_b=indexes[j])
    return float(2.0 / (n * (n - 1)) * total)


def target_guided_consistency(sample: CompletionSample) -> float:
    """Mean squared-Chamfer between each completed view and the complete cloud."""
    if sample.predictions is None:
        raise ValueError("predictions absent")
    idx_gt = build_index(sample.gt_complete)
    values = [
        chamfer_l2(completed_view(sample, i), sample.gt_complete, index_b=idx_gt)
        for i in range(sample.n)
    ]
    return float(np.mean(values))


def total_loss(sample: CompletionSample, w: LossWeights) -> float:
    """alpha * self-guided + beta * target-guided + mean reconstruction
    (+ delta * mean density-aware term when delta > 0)."""
    value, _ = _evaluate(sample, w, want_grad=False)
    return value


def loss_gradient(sample: CompletionSample, w: LossWeights) -> list[np.ndarray]:
    """Exact per-point gradient of total_loss for each predicted cloud."""
    _, grads = _evaluate(sample, w, want_grad=True)
    return grads


def loss_and_gradient(sample: CompletionSample, w: LossWeights) -> tuple[float, list[np.ndarray]]:
    """total_loss and its per-predicted-point gradients in one pass."""
    value, grads = _evaluate(sample, w, want_grad=True)
    return value, grads
