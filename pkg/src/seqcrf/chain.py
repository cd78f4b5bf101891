"""Log-space inference over a linear chain of hidden states.

The chain distribution is Gibbs: P(h | x) proportional to
exp(sum_j score[j, h_j] + sum_j trans[h_j, h_{j+1}]), with one shared
transition matrix across all adjacent pairs.  Everything runs in the log
domain with max-shifted log-sum-exp, so score magnitudes up to a few
hundred cause no overflow.

Conventions: trans[a, b] scores a transition from state a at position j
to state b at position j+1; edge_marginals[j, a, b] = P(h_j=a, h_{j+1}=b).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

BRUTE_FORCE_LIMIT = 10**6


@dataclass
class ChainPosteriors:
    """Partition function and exact marginals of the chain."""

    log_z: float
    node_marginals: np.ndarray  # (T, H)
    edge_marginals: np.ndarray  # (T-1, H, H)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")


def _alpha_beta(scores: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Forward/backward log messages; tolerates -inf entries in scores."""
    t, h = scores.shape
    log_alpha = np.empty((t, h))
    log_alpha[0] = scores[0]
    for j in range(1, t):
        log_alpha[j] = scores[j] + logsumexp(log_alpha[j - 1][:, None] + trans, axis=0)
    log_beta = np.zeros((t, h))
    for j in range(t - 2, -1, -1):
        log_beta[j] = logsumexp(
            trans + scores[j + 1][None, :] + log_beta[j + 1][None, :], axis=1
        )
    log_z = float(logsumexp(log_alpha[t - 1]))
    return log_alpha, log_beta, log_z


def _posteriors_from_messages(
    scores: np.ndarray,
    trans: np.ndarray,
    log_alpha: np.ndarray,
    log_beta: np.ndarray,
    log_z: float,
) -> ChainPosteriors:
    t, h = scores.shape
    node = np.exp(log_alpha + log_beta - log_z)
    edge = np.empty((max(t - 1, 0), h, h))
    for j in range(t - 1):
        edge[j] = np.exp(
            log_alpha[j][:, None]
            + trans
            + scores[j + 1][None, :]
            + log_beta[j + 1][None, :]
            - log_z
        )
    return ChainPosteriors(log_z=log_z, node_marginals=node, edge_marginals=edge)


def forward_backward(node_scores: np.ndarray, trans_weights: np.ndarray) -> ChainPosteriors:
    """Exact log partition function plus node and edge marginals."""
    node_scores = np.asarray(node_scores, dtype=np.float64)
    trans_weights = np.asarray(trans_weights, dtype=np.float64)
    _check_finite("node_scores", node_scores)
    _check_finite("trans_weights", trans_weights)
    log_alpha, log_beta, log_z = _alpha_beta(node_scores, trans_weights)
    return _posteriors_from_messages(node_scores, trans_weights, log_alpha, log_beta, log_z)


def masked_forward_backward(
    node_scores: np.ndarray, trans_weights: np.ndarray, allowed: np.ndarray
) -> ChainPosteriors:
    """Posteriors of the chain restricted to ``allowed`` states per frame.

    Disallowed states receive zero marginal mass exactly; log_z is the
    log partition of the restricted chain.
    """
    node_scores = np.asarray(node_scores, dtype=np.float64)
    trans_weights = np.asarray(trans_weights, dtype=np.float64)
    allowed = np.asarray(allowed, dtype=bool)
    _check_finite("node_scores", node_scores)
    _check_finite("trans_weights", trans_weights)
    if allowed.shape != node_scores.shape:
        raise ValueError("allowed mask must match node_scores shape")
    if not np.all(allowed.any(axis=1)):
        raise ValueError("every frame needs at least one allowed state")
    masked = np.where(allowed, node_scores, -np.inf)
    log_alpha, log_beta, log_z = _alpha_beta(masked, trans_weights)
    return _posteriors_from_messages(masked, trans_weights, log_alpha, log_beta, log_z)


def restricted_log_partition(
    node_scores: np.ndarray, trans_weights: np.ndarray, allowed: np.ndarray
) -> float:
    """Log of the summed Gibbs weight over paths staying inside ``allowed``."""
    node_scores = np.asarray(node_scores, dtype=np.float64)
    allowed = np.asarray(allowed, dtype=bool)
    _check_finite("node_scores", node_scores)
    if not np.all(allowed.any(axis=1)):
        raise ValueError("every frame needs at least one allowed state")
    masked = np.where(allowed, node_scores, -np.inf)
    _, _, log_z = _alpha_beta(masked, np.asarray(trans_weights, dtype=np.float64))
    return log_z


def brute_force_posteriors(
    node_scores: np.ndarray, trans_weights: np.ndarray
) -> ChainPosteriors:
    """Posteriors by enumerating every hidden path; test oracle only."""
    node_scores = np.asarray(node_scores, dtype=np.float64)
    trans_weights = np.asarray(trans_weights, dtype=np.float64)
    t, h = node_scores.shape
    n_paths = h**t
    if n_paths > BRUTE_FORCE_LIMIT:
        raise ValueError(f"instance too large to enumerate: {h}^{t} paths")
    idx = np.arange(n_paths)
    paths = (idx[:, None] // h ** np.arange(t - 1, -1, -1)) % h  # (N, T), base-h digits
    log_w = np.zeros(n_paths)
    for j in range(t):
        log_w += node_scores[j, paths[:, j]]
    for j in range(t - 1):
        log_w += trans_weights[paths[:, j], paths[:, j + 1]]
    log_z = float(logsumexp(log_w))
    w = np.exp(log_w - log_z)
    node = np.empty((t, h))
    for j in range(t):
        node[j] = np.bincount(paths[:, j], weights=w, minlength=h)
    edge = np.empty((max(t - 1, 0), h, h))
    for j in range(t - 1):
        flat = paths[:, j] * h + paths[:, j + 1]
        edge[j] = np.bincount(flat, weights=w, minlength=h * h).reshape(h, h)
    return ChainPosteriors(log_z=log_z, node_marginals=node, edge_marginals=edge)


def viterbi(node_scores: np.ndarray, trans_weights: np.ndarray) -> tuple[np.ndarray, float]:
    """Max-score hidden path and its score; ties go to the lower state index."""
    node_scores = np.asarray(node_scores, dtype=np.float64)
    trans_weights = np.asarray(trans_weights, dtype=np.float64)
    _check_finite("node_scores", node_scores)
    _check_finite("trans_weights", trans_weights)
    t, h = node_scores.shape
    delta = node_scores[0].copy()
    back = np.zeros((t, h), dtype=np.int64)
    for j in range(1, t):
        cand = delta[:, None] + trans_weights  # (from, to)
        back[j] = np.argmax(cand, axis=0)  # first index on ties
        delta = node_scores[j] + cand[back[j], np.arange(h)]
    path = np.zeros(t, dtype=np.int64)
    path[t - 1] = int(np.argmax(delta))
    for j in range(t - 1, 0, -1):
        path[j - 1] = back[j, path[j]]
    return path, float(delta[path[t - 1]])


def fb_adjoint(
    node_scores: np.ndarray,
    trans_weights: np.ndarray,
    grad_node_marginals: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Pull an upstream gradient on node marginals back onto the potentials.

    Given dL/d(node_marginals) for any scalar L, returns the exact
    dL/d(node_scores) and dL/d(trans_weights) by reversing the
    forward-backward recursions.  Cost O(T * H^2); all softmax weights
    are formed from differences of log messages, so no underflow.
    """
    node_scores = np.asarray(node_scores, dtype=np.float64)
    trans_weights = np.asarray(trans_weights, dtype=np.float64)
    upstream = np.asarray(grad_node_marginals, dtype=np.float64)
    _check_finite("node_scores", node_scores)
    _check_finite("trans_weights", trans_weights)
    _check_finite("grad_node_marginals", upstream)
    if upstream.shape != node_scores.shape:
        raise ValueError("upstream gradient must match node_scores shape")

    t, h = node_scores.shape
    log_alpha, log_beta, log_z = _alpha_beta(node_scores, trans_weights)
    marg = np.exp(log_alpha + log_beta - log_z)

    weighted = upstream * marg
    alpha_bar = weighted.copy()
    beta_bar = weighted.copy()
    log_z_bar = -float(np.sum(weighted))
    alpha_bar[t - 1] += log_z_bar * np.exp(log_alpha[t - 1] - log_z)

    grad_scores = np.zeros((t, h))
    grad_trans = np.zeros((h, h))

    # reverse sweep of the backward recursion (computed from t-2 down to 0,
    # so adjoints propagate 0 -> t-2); row-softmax weights sum to 1
    for j in range(t - 1):
        r = np.exp(
            trans_weights
            + node_scores[j + 1][None, :]
            + log_beta[j + 1][None, :]
            - log_beta[j][:, None]
        )
        w = beta_bar[j][:, None] * r
        grad_trans += w
        col = w.sum(axis=0)
        grad_scores[j + 1] += col
        beta_bar[j + 1] += col

    # reverse sweep of the forward recursion; column-softmax weights
    for j in range(t - 1, 0, -1):
        q = np.exp(
            log_alpha[j - 1][:, None]
            + trans_weights
            - (log_alpha[j] - node_scores[j])[None, :]
        )
        w = q * alpha_bar[j][None, :]
        grad_trans += w
        grad_scores[j] += alpha_bar[j]
        alpha_bar[j - 1] += w.sum(axis=1)
    grad_scores[0] += alpha_bar[0]

    return grad_scores, grad_trans
