"""Exactness of the chain layer against explicit path enumeration."""
import itertools
import math

import numpy as np
import pytest

from seqcrf.chain import (
    brute_force_posteriors,
    fb_adjoint,
    forward_backward,
    masked_forward_backward,
    restricted_log_partition,
    viterbi,
)


def path_score(path, scores, trans):
    total = sum(scores[j, s] for j, s in enumerate(path))
    total += sum(trans[a, b] for a, b in zip(path, path[1:]))
    return total


def all_paths(t, h):
    return itertools.product(range(h), repeat=t)


class TestForwardBackward:
    def test_hand_computed_two_frames(self):
        scores = np.array([[0.1, -0.3], [0.2, 0.5]])
        trans = np.array([[0.0, 1.0], [-1.0, 0.3]])
        weights = [math.exp(path_score(p, scores, trans)) for p in all_paths(2, 2)]
        z = sum(weights)
        post = forward_backward(scores, trans)
        assert post.log_z == pytest.approx(math.log(z), abs=1e-12)
        # P(h_0 = 0) sums the paths starting in state 0
        expect = (weights[0] + weights[1]) / z
        assert post.node_marginals[0, 0] == pytest.approx(expect, abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            t = int(rng.integers(1, 7))
            h = int(rng.integers(1, 5))
            scores = rng.normal(size=(t, h))
            trans = rng.normal(size=(h, h))
            fast = forward_backward(scores, trans)
            slow = brute_force_posteriors(scores, trans)
            assert fast.log_z == pytest.approx(slow.log_z, abs=1e-10)
            np.testing.assert_allclose(fast.node_marginals, slow.node_marginals, atol=1e-12)
            np.testing.assert_allclose(fast.edge_marginals, slow.edge_marginals, atol=1e-12)

    def test_single_frame_is_softmax(self):
        scores = np.array([[1.0, -2.0, 0.5]])
        post = forward_backward(scores, np.zeros((3, 3)))
        expect = np.exp(scores[0]) / np.exp(scores[0]).sum()
        np.testing.assert_allclose(post.node_marginals[0], expect, atol=1e-14)
        assert post.edge_marginals.shape == (0, 3, 3)

    def test_marginals_normalize(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(size=(5, 4))
        trans = rng.normal(size=(4, 4))
        post = forward_backward(scores, trans)
        np.testing.assert_allclose(post.node_marginals.sum(axis=1), 1.0, atol=1e-12)
        # edge tables are consistent with both adjacent node tables
        np.testing.assert_allclose(
            post.edge_marginals.sum(axis=2), post.node_marginals[:-1], atol=1e-12
        )
        np.testing.assert_allclose(
            post.edge_marginals.sum(axis=1), post.node_marginals[1:], atol=1e-12
        )

    def test_score_shift_moves_log_z_not_marginals(self):
        rng = np.random.default_rng(4)
        scores = rng.normal(size=(4, 3))
        trans = rng.normal(size=(3, 3))
        base = forward_backward(scores, trans)
        shifted = scores.copy()
        shifted[2] += 7.5
        moved = forward_backward(shifted, trans)
        assert moved.log_z == pytest.approx(base.log_z + 7.5, abs=1e-10)
        np.testing.assert_allclose(moved.node_marginals, base.node_marginals, atol=1e-10)

    def test_rejects_nonfinite_scores(self):
        with pytest.raises(ValueError):
            forward_backward(np.array([[0.0, np.inf]]), np.zeros((2, 2)))


class TestMaskedForwardBackward:
    def test_matches_restricted_enumeration(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            t = int(rng.integers(1, 6))
            h = int(rng.integers(2, 5))
            scores = rng.normal(size=(t, h))
            trans = rng.normal(size=(h, h))
            allowed = rng.random((t, h)) < 0.6
            allowed[np.arange(t), rng.integers(0, h, size=t)] = True  # keep rows nonempty
            total = 0.0
            for path in all_paths(t, h):
                if all(allowed[j, s] for j, s in enumerate(path)):
                    total += math.exp(path_score(path, scores, trans))
            post = masked_forward_backward(scores, trans, allowed)
            assert post.log_z == pytest.approx(math.log(total), abs=1e-10)
            assert restricted_log_partition(scores, trans, allowed) == pytest.approx(
                math.log(total), abs=1e-10
            )
            # no probability may leak onto masked-out states
            assert np.all(post.node_marginals[~allowed] == 0.0)

    def test_all_allowed_equals_free(self):
        rng = np.random.default_rng(22)
        scores = rng.normal(size=(4, 3))
        trans = rng.normal(size=(3, 3))
        free = forward_backward(scores, trans)
        masked = masked_forward_backward(scores, trans, np.ones((4, 3), dtype=bool))
        assert masked.log_z == pytest.approx(free.log_z, abs=1e-12)
        np.testing.assert_allclose(masked.node_marginals, free.node_marginals, atol=1e-12)

    def test_empty_frame_raises(self):
        allowed = np.ones((3, 2), dtype=bool)
        allowed[1] = False
        with pytest.raises(ValueError):
            masked_forward_backward(np.zeros((3, 2)), np.zeros((2, 2)), allowed)


class TestViterbi:
    def test_matches_enumeration(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            t = int(rng.integers(1, 6))
            h = int(rng.integers(1, 4))
            scores = rng.normal(size=(t, h))
            trans = rng.normal(size=(h, h))
            best = max(all_paths(t, h), key=lambda p: path_score(p, scores, trans))
            path, score = viterbi(scores, trans)
            assert score == pytest.approx(path_score(best, scores, trans), abs=1e-10)
            assert list(path) == list(best)

    def test_ties_prefer_lower_state(self):
        path, score = viterbi(np.zeros((4, 3)), np.zeros((3, 3)))
        assert list(path) == [0, 0, 0, 0]
        assert score == 0.0


class TestAdjoint:
    """fb_adjoint must reproduce finite differences of any linear
    functional of the node marginals."""

    def objective(self, scores, trans, upstream):
        return float(np.sum(upstream * forward_backward(scores, trans).node_marginals))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(41)
        step = 1e-6
        for _ in range(10):
            t = int(rng.integers(1, 6))
            h = int(rng.integers(1, 4))
            scores = rng.normal(size=(t, h))
            trans = rng.normal(size=(h, h))
            upstream = rng.normal(size=(t, h))
            g_scores, g_trans = fb_adjoint(scores, trans, upstream)
            for idx in np.ndindex(t, h):
                hi = scores.copy()
                hi[idx] += step
                lo = scores.copy()
                lo[idx] -= step
                fd = (self.objective(hi, trans, upstream)
                      - self.objective(lo, trans, upstream)) / (2 * step)
                assert g_scores[idx] == pytest.approx(fd, abs=1e-7)
            for idx in np.ndindex(h, h):
                hi = trans.copy()
                hi[idx] += step
                lo = trans.copy()
                lo[idx] -= step
                fd = (self.objective(scores, hi, upstream)
                      - self.objective(scores, lo, upstream)) / (2 * step)
                assert g_trans[idx] == pytest.approx(fd, abs=1e-7)

    def test_constant_upstream_gives_zero_gradient(self):
        # marginals always sum to T, so a constant functional is flat
        rng = np.random.default_rng(42)
        scores = rng.normal(size=(5, 3))
        trans = rng.normal(size=(3, 3))
        g_scores, g_trans = fb_adjoint(scores, trans, np.full((5, 3), 2.7))
        np.testing.assert_allclose(g_scores, 0.0, atol=1e-12)
        np.testing.assert_allclose(g_trans, 0.0, atol=1e-12)

    def test_single_frame_softmax_jacobian(self):
        scores = np.array([[0.4, -1.2, 0.9]])
        upstream = np.array([[1.0, -2.0, 0.5]])
        mu = np.exp(scores[0]) / np.exp(scores[0]).sum()
        expect = mu * (upstream[0] - float(upstream[0] @ mu))
        g_scores, g_trans = fb_adjoint(scores, np.zeros((3, 3)), upstream)
        np.testing.assert_allclose(g_scores[0], expect, atol=1e-12)
        np.testing.assert_allclose(g_trans, 0.0, atol=1e-12)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            fb_adjoint(np.zeros((3, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
