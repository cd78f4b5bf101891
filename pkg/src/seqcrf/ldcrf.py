"""Latent-dynamic layer: label marginals from hidden-state posteriors,
the frame-supervised training objective, and frame decoding.

Each label owns a contiguous block of hidden states; summing node
marginals within a block gives the per-frame label probability.  With one
state per label the model degenerates to a plain linear-chain CRF, which
is how the CRF baseline is realized.
"""
from __future__ import annotations

import numpy as np

from .chain import ChainPosteriors, forward_backward, masked_forward_backward, viterbi
from .features import FeatureConfig, HiddenStateMap, ModelParams, node_scores, observation_matrix
from .seqdata import Sequence


def frame_label_marginals(posteriors: ChainPosteriors, hidden_map: HiddenStateMap) -> np.ndarray:
    """T x L table q with q[j, a] = P(label at frame j is a)."""
    t, h = posteriors.node_marginals.shape
    if h != hidden_map.num_states:
        raise ValueError(
            f"posterior state count {h} != hidden map state count {hidden_map.num_states}"
        )
    return posteriors.node_marginals.reshape(
        t, hidden_map.num_labels, hidden_map.states_per_label
    ).sum(axis=2)


def label_marginals(
    seq: Sequence, params: ModelParams, hidden_map: HiddenStateMap, config: FeatureConfig
) -> np.ndarray:
    """Convenience: q table straight from a sequence."""
    posteriors = forward_backward(node_scores(seq, params, config), params.trans_weights)
    return frame_label_marginals(posteriors, hidden_map)


def _allowed_mask(frame_labels: list[int], hidden_map: HiddenStateMap) -> np.ndarray:
    owner = hidden_map.state_owner()  # (H,)
    labels = np.asarray(frame_labels, dtype=np.int64)
    return owner[None, :] == labels[:, None]  # (T, H)


def sequence_label_likelihood(
    seq: Sequence, params: ModelParams, hidden_map: HiddenStateMap, config: FeatureConfig
) -> float:
    """log P(frame labeling | x): restricted path sum minus free log partition.

    Computed by masking each frame to the labeled block and re-running
    the forward pass, so the cost stays O(T * H^2).
    """
    if seq.frame_labels is None:
        raise ValueError(f"sequence {seq.id!r} has no frame_labels")
    scores = node_scores(seq, params, config)
    free = forward_backward(scores, params.trans_weights)
    restricted = masked_forward_backward(
        scores, params.trans_weights, _allowed_mask(seq.frame_labels, hidden_map)
    )
    return restricted.log_z - free.log_z


def ldcrf_frame_objective(
    batch: list[Sequence],
    params: ModelParams,
    hidden_map: HiddenStateMap,
    config: FeatureConfig,
    l2: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Negative frame-supervised log-likelihood plus L2, with exact gradient.

    The gradient is the classic difference of feature expectations under
    the free chain and the label-restricted chain, plus 2*l2*theta,
    returned flat in the ModelParams layout.
    """
    grad_state = np.zeros_like(params.state_weights)
    grad_trans = np.zeros_like(params.trans_weights)
    loss = 0.0
    for seq in batch:
        if seq.frame_labels is None:
            raise ValueError(f"sequence {seq.id!r} has no frame_labels")
        obs = observation_matrix(seq, config)
        scores = obs @ params.state_weights.T
        free = forward_backward(scores, params.trans_weights)
        restricted = masked_forward_backward(
            scores, params.trans_weights, _allowed_mask(seq.frame_labels, hidden_map)
        )
        loss += free.log_z - restricted.log_z
        diff = free.node_marginals - restricted.node_marginals  # (T, H)
        grad_state += diff.T @ obs
        if seq.num_frames > 1:
            grad_trans += (free.edge_marginals - restricted.edge_marginals).sum(axis=0)
    if not np.isfinite(loss):
        raise FloatingPointError("frame objective is not finite")
    theta = params.flatten()
    loss += l2 * float(theta @ theta)
    grad = np.concatenate([grad_state.ravel(), grad_trans.ravel()]) + 2.0 * l2 * theta
    return loss, grad


def decode_frames(
    seq: Sequence, params: ModelParams, hidden_map: HiddenStateMap, config: FeatureConfig
) -> list[int]:
    """Per-frame argmax of the label marginals; ties to the lower label id.

    Marginal decoding maximizes expected per-frame accuracy; the returned
    ids may include the blank label.
    """
    q = label_marginals(seq, params, hidden_map, config)
    return [int(a) for a in np.argmax(q, axis=1)]


def decode_frames_viterbi(
    seq: Sequence, params: ModelParams, hidden_map: HiddenStateMap, config: FeatureConfig
) -> list[int]:
    """Joint most-probable hidden path, mapped to owning labels."""
    path, _ = viterbi(node_scores(seq, params, config), params.trans_weights)
    return [hidden_map.label_of_state(int(s)) for s in path]
