"""Losses module: objective values against hand math, gradients against FD."""

import numpy as np
import pytest

from concord import (
    CompletionSample,
    LossWeights,
    PointCloud,
    chamfer_l2,
    completed_view,
    loss_and_gradient,
    loss_gradient,
    reconstruction_loss,
    self_guided_consistency,
    target_guided_consistency,
    total_loss,
)
from oracles import (
    brute_chamfer_l2,
    fd_gradient_wrt_predictions,
    min_assignment_margin,
    random_split_sample,
    rel_error,
)


def degenerate_sample(completed_clouds, gt):
    """Views with empty incomplete sides so CompletedView_i == prediction_i."""
    empty = PointCloud(np.zeros((0, 3)))
    views = tuple((empty, PointCloud(gt)) for _ in completed_clouds)
    preds = tuple(PointCloud(c) for c in completed_clouds)
    return CompletionSample(PointCloud(gt), views, preds)


class TestWeights:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            LossWeights(alpha=-0.1)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            LossWeights(beta=np.inf)


class TestSampleType:
    def test_validate_accepts_real_splits(self, rng):
        s = random_split_sample(rng)
        s.validate()

    def test_validate_rejects_overlap(self):
        pts = np.array([(0.0, 0, 0), (1.0, 0, 0), (2.0, 0, 0)])
        views = ((PointCloud(pts[:2]), PointCloud(pts[1:])),)
        s = CompletionSample(PointCloud(pts), views, None)
        with pytest.raises(ValueError):
            s.validate()

    def test_prediction_count_must_match(self, rng):
        s = random_split_sample(rng)
        with pytest.raises(ValueError, match="one-to-one"):
            s.with_predictions([s.predictions[0]])


class TestReconstruction:
    def test_zero_at_truth(self, rng):
        s = random_split_sample(rng)
        assert reconstruction_loss(s.views[0][1], s.views[0][1]) == 0.0

    def test_singleton(self):
        assert reconstruction_loss([(0, 0, 0)], [(1, 0, 0)]) == 2.0

    def test_equals_chamfer(self, rng):
        a = rng.random((32, 3))
        b = rng.random((32, 3))
        assert reconstruction_loss(a, b) == chamfer_l2(a, b)
        assert reconstruction_loss(a, b) == pytest.approx(brute_chamfer_l2(a, b), rel=1e-12)


class TestSelfGuided:
    def test_identical_views_zero(self, rng):
        pts = rng.random((12, 3))
        inc = PointCloud(pts[:4])
        mis = PointCloud(pts[4:])
        pred = PointCloud(rng.random((5, 3)))
        s = CompletionSample(PointCloud(pts), ((inc, mis), (inc, mis), (inc, mis)),
                             (pred, pred, pred))
        assert self_guided_consistency(s) == 0.0

    def test_two_singleton_completed_views(self):
        s = degenerate_sample([[(0.0, 0, 0)], [(1.0, 0, 0)]], [(0.5, 0, 0)])
        assert self_guided_consistency(s) == 2.0

    def test_mean_of_pairwise_cds(self, rng):
        s = random_split_sample(rng, n_views=3)
        views = [completed_view(s, i) for i in range(3)]
        expected = np.mean([
            brute_chamfer_l2(views[0], views[1]),
            brute_chamfer_l2(views[0], views[2]),
            brute_chamfer_l2(views[1], views[2]),
        ])
        assert self_guided_consistency(s) == pytest.approx(expected, rel=1e-12)

    def test_needs_two_views(self, rng):
        s = random_split_sample(rng, n_views=1)
        with pytest.raises(ValueError, match="insufficient views"):
            self_guided_consistency(s)

    def test_needs_predictions(self, rng):
        s = random_split_sample(rng)
        s = CompletionSample(s.gt_complete, s.views, None)
        with pytest.raises(ValueError, match="predictions absent"):
            self_guided_consistency(s)


class TestTargetGuided:
    def test_zero_when_views_complete(self, rng):
        # prediction = exactly the missing part, so completed == complete
        s = random_split_sample(rng)
        s = s.with_predictions([mis for _, mis in s.views])
        assert target_guided_consistency(s) == 0.0

    def test_singleton(self):
        s = degenerate_sample([[(0.0, 0, 0)]], [(1.0, 0, 0)])
        assert target_guided_consistency(s) == 2.0

    def test_mean_of_cds(self, rng):
        s = random_split_sample(rng, n_views=3)
        expected = np.mean([
            brute_chamfer_l2(completed_view(s, i), s.gt_complete.points) for i in range(3)
        ])
        assert target_guided_consistency(s) == pytest.approx(expected, rel=1e-12)


class TestTotalLoss:
    def test_collapse_to_reconstruction(self, rng):
        for _ in range(20):
            s = random_split_sample(rng, n_views=int(rng.integers(1, 5)))
            mean_rec = float(np.mean([
                reconstruction_loss(s.predictions[i], s.views[i][1]) for i in range(s.n)
            ]))
            assert total_loss(s, LossWeights(0, 0, 0)) == mean_rec

    def test_perfect_predictions_zero(self, rng):
        s = random_split_sample(rng)
        s = s.with_predictions([mis for _, mis in s.views])
        for w in (LossWeights(0, 0, 0), LossWeights(0.1, 1, 0), LossWeights(1, 1, 1)):
            assert total_loss(s, w) == 0.0

    def test_recomposition(self, rng):
        s = random_split_sample(rng, n_views=3)
        w = LossWeights(0.1, 1.0, 0.0)
        expected = (0.1 * self_guided_consistency(s)
                    + 1.0 * target_guided_consistency(s)
                    + np.mean([reconstruction_loss(s.predictions[i], s.views[i][1])
                               for i in range(3)]))
        assert total_loss(s, w) == pytest.approx(expected, rel=1e-12)

    def test_affine_in_weights(self, rng):
        s = random_split_sample(rng, n_views=3)
        base = total_loss(s, LossWeights(0, 0, 0))
        sg = self_guided_consistency(s)
        tg = target_guided_consistency(s)
        for a, b in [(0.3, 0.7), (1.0, 0.0), (2.0, 3.0)]:
            assert total_loss(s, LossWeights(a, b, 0)) == pytest.approx(
                a * sg + b * tg + base, rel=1e-12)

    def test_view_permutation_invariance(self, rng):
        s = random_split_sample(rng, n_views=4)
        perm = rng.permutation(4)
        s2 = CompletionSample(
            s.gt_complete,
            tuple(s.views[i] for i in perm),
            tuple(s.predictions[i] for i in perm),
        )
        w = LossWeights(0.1, 1.0, 0.5)
        assert total_loss(s2, w) == pytest.approx(total_loss(s, w), rel=1e-12)
        assert self_guided_consistency(s2) == pytest.approx(self_guided_consistency(s), rel=1e-12)
        assert target_guided_consistency(s2) == pytest.approx(target_guided_consistency(s), rel=1e-12)

    def test_alpha_needs_two_views(self, rng):
        s = random_split_sample(rng, n_views=1)
        with pytest.raises(ValueError, match="insufficient views"):
            total_loss(s, LossWeights(0.5, 0, 0))


class TestGradient:
    def test_zero_at_perfect_predictions(self, rng):
        s = random_split_sample(rng)
        s = s.with_predictions([mis for _, mis in s.views])
        for g in loss_gradient(s, LossWeights(0.1, 1.0, 0.5)):
            assert np.all(g == 0.0)

    def test_singleton_reconstruction_gradient(self):
        p = np.array([[0.25, -0.5, 0.75]])
        g = np.array([[1.0, 0.5, 0.0]])
        s = degenerate_sample([p], g)
        (grad,) = loss_gradient(s, LossWeights(0, 0, 0))
        # both Chamfer directions pull the lone point toward the target
        np.testing.assert_allclose(grad, 2 * (p - g) * 2, atol=1e-14)

    @pytest.mark.parametrize("weights", [
        LossWeights(0, 0, 0),
        LossWeights(0.1, 1.0, 0.0),
        LossWeights(0.1, 1.0, 0.5),
    ])
    def test_matches_finite_differences(self, rng, weights):
        checked = 0
        while checked < 8:
            s = random_split_sample(rng, n_views=3, m_complete=20)
            if min_assignment_margin(s) < 5e-3:
                continue  # FD would straddle an assignment switch
            checked += 1
            grads = loss_gradient(s, weights)
            view = int(rng.integers(s.n))
            fd = fd_gradient_wrt_predictions(s, weights, view)
            assert rel_error(grads[view], fd) < 1e-3

    def test_loss_and_gradient_consistent(self, rng):
        s = random_split_sample(rng)
        w = LossWeights(0.1, 1.0, 0.5)
        value, grads = loss_and_gradient(s, w)
        assert value == pytest.approx(total_loss(s, w), rel=1e-12)
        grads2 = loss_gradient(s, w)
        for a, b in zip(grads, grads2):
            np.testing.assert_array_equal(a, b)
