"""Windowed feature functions and the flat parameter vector shared by all models.

State features are linear in a windowed observation vector: the frames in
a symmetric window around each position, zero-padded at the boundaries,
with an optional trailing bias component.  Pairwise features are
position-independent transition indicators, one weight per ordered pair
of hidden states.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .seqdata import LabelSet, Sequence, atomic_write_text


@dataclass(frozen=True)
class FeatureConfig:
    """Window size and observation layout."""

    input_dim: int
    window: int = 1
    include_bias: bool = True

    def __post_init__(self) -> None:
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")

    @property
    def obs_dim(self) -> int:
        """D = d * (2w + 1), plus one for the bias."""
        return self.input_dim * (2 * self.window + 1) + int(self.include_bias)


@dataclass(frozen=True)
class HiddenStateMap:
    """Disjoint contiguous block of hidden states for every label.

    Label a owns states [a*h, (a+1)*h); the blank label gets the same
    number of states as real labels.
    """

    num_labels: int
    states_per_label: int

    def __post_init__(self) -> None:
        if self.num_labels < 1 or self.states_per_label < 1:
            raise ValueError("num_labels and states_per_label must be >= 1")

    @property
    def num_states(self) -> int:
        return self.num_labels * self.states_per_label

    def block(self, label: int) -> slice:
        h = self.states_per_label
        if not 0 <= label < self.num_labels:
            raise ValueError(f"label {label} out of range")
        return slice(label * h, (label + 1) * h)

    def label_of_state(self, state: int) -> int:
        if not 0 <= state < self.num_states:
            raise ValueError(f"state {state} out of range")
        return state // self.states_per_label

    def state_owner(self) -> np.ndarray:
        """Length-H vector giving the owning label of every hidden state."""
        return np.repeat(np.arange(self.num_labels), self.states_per_label)


@dataclass
class ModelParams:
    """State weights (H x D) and transition weights (H x H).

    Flattening order is state weights row-major, then transitions
    row-major; flatten/unflatten round-trips exactly.
    """

    state_weights: np.ndarray
    trans_weights: np.ndarray

    def __post_init__(self) -> None:
        self.state_weights = np.asarray(self.state_weights, dtype=np.float64)
        self.trans_weights = np.asarray(self.trans_weights, dtype=np.float64)
        h = self.state_weights.shape[0]
        if self.trans_weights.shape != (h, h):
            raise ValueError(
                f"trans_weights shape {self.trans_weights.shape} does not match "
                f"{h} hidden states"
            )

    @property
    def num_states(self) -> int:
        return self.state_weights.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.state_weights.shape[1]

    @property
    def size(self) -> int:
        return self.state_weights.size + self.trans_weights.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.state_weights.ravel(), self.trans_weights.ravel()])

    @classmethod
    def unflatten(cls, theta: np.ndarray, num_states: int, obs_dim: int) -> "ModelParams":
        theta = np.asarray(theta, dtype=np.float64)
        n_state = num_states * obs_dim
        if theta.shape != (n_state + num_states * num_states,):
            raise ValueError(
                f"parameter vector length {theta.shape} does not match "
                f"H={num_states}, D={obs_dim}"
            )
        return cls(
            state_weights=theta[:n_state].reshape(num_states, obs_dim).copy(),
            trans_weights=theta[n_state:].reshape(num_states, num_states).copy(),
        )

    @classmethod
    def zeros(cls, num_states: int, obs_dim: int) -> "ModelParams":
        return cls(
            state_weights=np.zeros((num_states, obs_dim)),
            trans_weights=np.zeros((num_states, num_states)),
        )

    @classmethod
    def random_init(
        cls, num_states: int, obs_dim: int, seed: int, scale: float = 0.1
    ) -> "ModelParams":
        """Uniform init in [-scale, scale]; small range keeps exp well-conditioned."""
        rng = np.random.default_rng(seed)
        return cls(
            state_weights=rng.uniform(-scale, scale, size=(num_states, obs_dim)),
            trans_weights=rng.uniform(-scale, scale, size=(num_states, num_states)),
        )

    def copy(self) -> "ModelParams":
        return ModelParams(self.state_weights.copy(), self.trans_weights.copy())


# ---------------------------------------------------------------------------
# Observations and node scores
# ---------------------------------------------------------------------------


def windowed_obs(seq: Sequence, j: int, config: FeatureConfig) -> np.ndarray:
    """Observation vector at position j: frames j-w..j+w, zero-padded."""
    if not 0 <= j < seq.num_frames:
        raise IndexError(f"frame index {j} out of range")
    return observation_matrix(seq, config)[j]


def observation_matrix(seq: Sequence, config: FeatureConfig) -> np.ndarray:
    """T x D matrix of windowed observations for the whole sequence."""
    if seq.dim != config.input_dim:
        raise ValueError(
            f"sequence dimension {seq.dim} != configured input_dim {config.input_dim}"
        )
    frames = seq.frames
    t, d = frames.shape
    w = config.window
    if w == 0:
        obs = frames
    else:
        padded = np.zeros((t + 2 * w, d))
        padded[w : w + t] = frames
        cols = [padded[off : off + t] for off in range(2 * w + 1)]
        obs = np.concatenate(cols, axis=1)
    if config.include_bias:
        obs = np.concatenate([obs, np.ones((t, 1))], axis=1)
    return obs


def node_scores(seq: Sequence, params: ModelParams, config: FeatureConfig) -> np.ndarray:
    """T x H matrix of linear state scores (no exponentiation)."""
    obs = observation_matrix(seq, config)
    return node_scores_from_obs(obs, params)


def node_scores_from_obs(obs: np.ndarray, params: ModelParams) -> np.ndarray:
    if obs.shape[1] != params.obs_dim:
        raise ValueError(
            f"observation dimension {obs.shape[1]} != parameter dimension {params.obs_dim}"
        )
    return obs @ params.state_weights.T


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    """Everything needed to run a trained model: labels, layout, weights."""

    label_set: LabelSet
    hidden_map: HiddenStateMap
    feature_config: FeatureConfig
    params: ModelParams

    def __post_init__(self) -> None:
        if self.hidden_map.num_labels != self.label_set.num_labels:
            raise ValueError("hidden map label count does not match label set")
        if self.params.num_states != self.hidden_map.num_states:
            raise ValueError("parameter state count does not match hidden map")
        if self.params.obs_dim != self.feature_config.obs_dim:
            raise ValueError("parameter obs dim does not match feature config")

    def to_json(self) -> str:
        payload = {
            "labels": list(self.label_set.names),
            "blank_id": self.label_set.blank_id,
            "states_per_label": self.hidden_map.states_per_label,
            "window": self.feature_config.window,
            "input_dim": self.feature_config.input_dim,
            "include_bias": self.feature_config.include_bias,
            "theta": self.params.flatten().tolist(),
        }
        return json.dumps(payload, sort_keys=True)

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.to_json() + "\n")

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        payload = json.loads(text)
        label_set = LabelSet(names=tuple(payload["labels"]), blank_id=int(payload["blank_id"]))
        hidden_map = HiddenStateMap(
            num_labels=label_set.num_labels,
            states_per_label=int(payload["states_per_label"]),
        )
        feature_config = FeatureConfig(
            input_dim=int(payload["input_dim"]),
            window=int(payload["window"]),
            include_bias=bool(payload["include_bias"]),
        )
        params = ModelParams.unflatten(
            np.asarray(payload["theta"], dtype=np.float64),
            hidden_map.num_states,
            feature_config.obs_dim,
        )
        return cls(label_set, hidden_map, feature_config, params)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Checkpoint":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())
