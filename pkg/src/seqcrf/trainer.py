"""Training loop and objectives.

Three configurations are supported: frame-supervised training of the
latent chain, training from unsegmented label sequences through the
alignment-marginalizing (CTC) loss, and a two-stage protocol that
pretrains frame-wise on single-class subsequences before fine-tuning on
full unsegmented sequences.

The unsegmented objective offers two gradient modes.  "exact"
differentiates through the forward-backward recursions (fb_adjoint);
"local" treats each frame's hidden-state marginal as an independent
softmax of its node scores and applies that per-frame Jacobian,
ignoring the coupling through shared transitions and neighbouring
frames.  The two coincide when the transition weights are zero (the
chain then factorizes over frames) and generally differ otherwise;
``local_vs_exact_divergence`` measures the gap.  Transition-weight
gradients have no per-frame form, so local mode reuses the exact ones.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass

import numpy as np

from .chain import fb_adjoint, forward_backward
from .ctc import CtcInfeasibleError, ctc_error_table, ctc_forward_backward, min_frames_required
from .features import (
    Checkpoint,
    FeatureConfig,
    HiddenStateMap,
    ModelParams,
    node_scores_from_obs,
    observation_matrix,
)
from .ldcrf import frame_label_marginals, label_marginals, ldcrf_frame_objective
from .seqdata import (
    Dataset,
    FoldPlan,
    Sequence,
    confusion_matrix,
    extract_segment_subsequences,
    frame_accuracy,
    remap_blank_predictions,
    roc_curve,
)

logger = logging.getLogger(__name__)

MODES = ("unsegmented", "frame_wise", "pretrain_finetune")
GRAD_MODES = ("exact", "local")


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the partial report and checkpoint."""

    def __init__(self, message: str, report: "TrainReport | None" = None,
                 checkpoint: Checkpoint | None = None) -> None:
        super().__init__(message)
        self.report = report
        self.checkpoint = checkpoint


class EmptyBatchError(ValueError):
    """Every sequence in a batch was skipped; the batch loss is undefined."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for all training configurations.

    ``pretrain_epochs`` only matters in pretrain_finetune mode and
    defaults to half the epoch budget; the remainder goes to the
    unsegmented fine-tuning stage.
    """

    mode: str = "unsegmented"
    grad_mode: str = "exact"
    learning_rate: float = 0.02
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 8
    l2: float = 1e-3
    seed: int = 0
    window: int = 1
    hidden_per_label: int = 2
    pretrain_epochs: int | None = None
    init_scale: float = 0.1

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}, got {self.grad_mode!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.hidden_per_label < 1:
            raise ValueError("hidden_per_label must be >= 1")
        if self.pretrain_epochs is not None and not 0 <= self.pretrain_epochs <= self.epochs:
            raise ValueError("pretrain_epochs must lie in [0, epochs]")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")

    def stage_epochs(self) -> tuple[int, int]:
        """(pretraining epochs, fine-tuning epochs) summing to ``epochs``."""
        pre = self.epochs // 2 if self.pretrain_epochs is None else self.pretrain_epochs
        return pre, self.epochs - pre

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass
class TrainReport:
    """What happened during a run; serializes without wall-clock by default
    so reports are byte-identical across repeated runs."""

    mode: str
    grad_mode: str
    epochs_completed: int
    epoch_losses: list[float]
    grad_norms: list[float]
    pretrain_epochs: int | None = None
    diverged: bool = False
    checkpoint_path: str | None = None
    evaluation: dict | None = None
    wall_clock_seconds: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "mode": self.mode,
            "grad_mode": self.grad_mode,
            "epochs_completed": self.epochs_completed,
            "epoch_losses": list(self.epoch_losses),
            "grad_norms": list(self.grad_norms),
            "pretrain_epochs": self.pretrain_epochs,
            "diverged": self.diverged,
            "checkpoint_path": self.checkpoint_path,
            "evaluation": self.evaluation,
        }
        if include_timing:
            out["wall_clock_seconds"] = self.wall_clock_seconds
        return out

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True)


# ---------------------------------------------------------------------------
# Composite objective
# ---------------------------------------------------------------------------


def ctc_ldcrf_loss_and_grad(
    batch: list[Sequence],
    params: ModelParams,
    hidden_map: HiddenStateMap,
    feature_config: FeatureConfig,
    blank_id: int,
    grad_mode: str = "exact",
    l2: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Summed negative alignment log-likelihood plus l2 * ||theta||^2.

    Per sequence: node scores -> chain posteriors -> per-frame label
    marginals q -> alignment lattice over label_seq.  The upstream
    gradient on a hidden state's marginal is minus the error-table entry
    of its owning label; it is pulled back onto the weights either
    exactly or with the per-frame local Jacobian (see module docstring).

    Sequences whose target cannot be aligned, or whose alignment mass
    underflows to zero, are skipped with a logged warning; if that
    leaves nothing, EmptyBatchError is raised.
    """
    if grad_mode not in GRAD_MODES:
        raise ValueError(f"grad_mode must be one of {GRAD_MODES}, got {grad_mode!r}")
    grad_state = np.zeros_like(params.state_weights)
    grad_trans = np.zeros_like(params.trans_weights)
    owner = hidden_map.state_owner()
    loss = 0.0
    used = 0
    for seq in batch:
        if seq.label_seq is None:
            raise ValueError(f"sequence {seq.id!r} has no label_seq")
        obs = observation_matrix(seq, feature_config)
        scores = node_scores_from_obs(obs, params)
        post = forward_backward(scores, params.trans_weights)
        q = frame_label_marginals(post, hidden_map)
        try:
            tables = ctc_forward_backward(q, seq.label_seq, blank_id)
        except CtcInfeasibleError as exc:
            logger.warning("sequence %s skipped: %s", seq.id, exc)
            continue
        if not np.isfinite(tables.log_prob):
            logger.warning("sequence %s skipped: alignment mass underflowed to zero", seq.id)
            continue
        used += 1
        loss -= tables.log_prob
        err = ctc_error_table(tables, q)  # d log P / d q, (T, L)
        upstream = -err[:, owner]  # d loss / d mu, (T, H)
        g_scores, g_trans = fb_adjoint(scores, params.trans_weights, upstream)
        if grad_mode == "local":
            mu = post.node_marginals
            inner = np.sum(upstream * mu, axis=1, keepdims=True)
            g_scores = mu * (upstream - inner)
        grad_state += g_scores.T @ obs
        grad_trans += g_trans
    if used == 0:
        raise EmptyBatchError("every sequence in the batch was skipped; loss undefined")
    theta = params.flatten()
    loss += l2 * float(theta @ theta)
    grad = np.concatenate([grad_state.ravel(), grad_trans.ravel()]) + 2.0 * l2 * theta
    return loss, grad


def _composite_loss(
    seq: Sequence,
    theta: np.ndarray,
    hidden_map: HiddenStateMap,
    feature_config: FeatureConfig,
    blank_id: int,
    l2: float,
) -> float:
    """Loss-only evaluation used by the finite-difference checks."""
    params = ModelParams.unflatten(theta, hidden_map.num_states, feature_config.obs_dim)
    scores = node_scores_from_obs(observation_matrix(seq, feature_config), params)
    post = forward_backward(scores, params.trans_weights)
    q = frame_label_marginals(post, hidden_map)
    log_prob = ctc_forward_backward(q, seq.label_seq, blank_id).log_prob
    return -log_prob + l2 * float(theta @ theta)


# ---------------------------------------------------------------------------
# Optimization loop
# ---------------------------------------------------------------------------


@dataclass
class _StageResult:
    theta: np.ndarray
    losses: list[float]
    grad_norms: list[float]
    diverged: bool


def _run_sgd(
    sequences: list[Sequence],
    theta: np.ndarray,
    hidden_map: HiddenStateMap,
    feature_config: FeatureConfig,
    blank_id: int,
    config: TrainConfig,
    epochs: int,
    objective: str,
    shuffle_rng: np.random.Generator,
) -> _StageResult:
    """Mini-batch gradient descent with momentum; mutates nothing it is given.

    The step uses the batch-mean gradient so the learning rate keeps its
    meaning for partial batches.  Batch accumulation order follows the
    shuffled order, which is deterministic for a fixed generator state.
    """
    n = len(sequences)
    theta = theta.copy()
    velocity = np.zeros_like(theta)
    losses: list[float] = []
    norms: list[float] = []
    for _ in range(epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        batch_norms: list[float] = []
        for start in range(0, n, config.batch_size):
            batch = [sequences[int(i)] for i in order[start:start + config.batch_size]]
            if not np.all(np.isfinite(theta)):
                return _StageResult(theta, losses, norms, True)
            params = ModelParams.unflatten(theta, hidden_map.num_states, feature_config.obs_dim)
            try:
                if objective == "frame":
                    loss, grad = ldcrf_frame_objective(
                        batch, params, hidden_map, feature_config, l2=config.l2
                    )
                else:
                    loss, grad = ctc_ldcrf_loss_and_grad(
                        batch, params, hidden_map, feature_config, blank_id,
                        grad_mode=config.grad_mode, l2=config.l2,
                    )
            except EmptyBatchError:
                logger.warning("batch starting at %d skipped entirely", start)
                continue
            except FloatingPointError:
                return _StageResult(theta, losses, norms, True)
            if not np.isfinite(loss):
                return _StageResult(theta, losses, norms, True)
            step_grad = grad / len(batch)
            velocity = config.momentum * velocity - config.learning_rate * step_grad
            theta = theta + velocity
            epoch_loss += loss
            batch_norms.append(float(np.linalg.norm(step_grad)))
        losses.append(float(epoch_loss))
        norms.append(float(np.mean(batch_norms)) if batch_norms else 0.0)
    return _StageResult(theta, losses, norms, False)


def _stage_rng(seed: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stage,)))


def _require_labels(sequences: list[Sequence], attr: str) -> None:
    for seq in sequences:
        if getattr(seq, attr) is None:
            raise ValueError(f"sequence {seq.id!r} has no {attr}, required by this mode")


def _init_model(
    dataset: Dataset, config: TrainConfig
) -> tuple[HiddenStateMap, FeatureConfig, np.ndarray]:
    hidden_map = HiddenStateMap(dataset.label_set.num_labels, config.hidden_per_label)
    feature_config = FeatureConfig(input_dim=dataset.dim, window=config.window)
    params = ModelParams.random_init(
        hidden_map.num_states, feature_config.obs_dim,
        seed=config.seed, scale=config.init_scale,
    )
    return hidden_map, feature_config, params.flatten()


def train(dataset: Dataset, config: TrainConfig) -> tuple[Checkpoint, TrainReport]:
    """Train per ``config.mode``; deterministic for fixed seed/config/data.

    Raises TrainingDivergedError (with the partial report and checkpoint
    attached) if the loss stops being finite.
    """
    if config.mode == "pretrain_finetune":
        return pretrain_finetune(dataset, config)
    hidden_map, feature_config, theta = _init_model(dataset, config)
    blank_id = dataset.label_set.blank_id
    if config.mode == "frame_wise":
        _require_labels(dataset.sequences, "frame_labels")
        objective = "frame"
    else:
        _require_labels(dataset.sequences, "label_seq")
        objective = "ctc"
    start = time.perf_counter()
    result = _run_sgd(
        dataset.sequences, theta, hidden_map, feature_config, blank_id,
        config, config.epochs, objective, _stage_rng(config.seed, 1),
    )
    return _finish(dataset, config, hidden_map, feature_config, result,
                   pretrain_epochs=None, started=start)


def pretrain_finetune(dataset: Dataset, config: TrainConfig) -> tuple[Checkpoint, TrainReport]:
    """Frame-wise pretraining on single-class subsequences, then
    unsegmented fine-tuning on the full sequences, from one epoch budget.

    Requires segment boundaries in the dataset meta (the generator
    records them); raises DatasetFormatError otherwise.
    """
    pieces = extract_segment_subsequences(dataset)
    _require_labels(dataset.sequences, "label_seq")
    pre_epochs, fine_epochs = config.stage_epochs()
    hidden_map, feature_config, theta = _init_model(dataset, config)
    blank_id = dataset.label_set.blank_id
    start = time.perf_counter()
    stage1 = _run_sgd(
        pieces.sequences, theta, hidden_map, feature_config, blank_id,
        config, pre_epochs, "frame", _stage_rng(config.seed, 1),
    )
    if stage1.diverged:
        return _finish(dataset, config, hidden_map, feature_config, stage1,
                       pretrain_epochs=pre_epochs, started=start)
    stage2 = _run_sgd(
        dataset.sequences, stage1.theta, hidden_map, feature_config, blank_id,
        config, fine_epochs, "ctc", _stage_rng(config.seed, 2),
    )
    combined = _StageResult(
        theta=stage2.theta,
        losses=stage1.losses + stage2.losses,
        grad_norms=stage1.grad_norms + stage2.grad_norms,
        diverged=stage2.diverged,
    )
    return _finish(dataset, config, hidden_map, feature_config, combined,
                   pretrain_epochs=pre_epochs, started=start)


def _finish(
    dataset: Dataset,
    config: TrainConfig,
    hidden_map: HiddenStateMap,
    feature_config: FeatureConfig,
    result: _StageResult,
    pretrain_epochs: int | None,
    started: float,
) -> tuple[Checkpoint, TrainReport]:
    report = TrainReport(
        mode=config.mode,
        grad_mode=config.grad_mode,
        epochs_completed=len(result.losses),
        epoch_losses=result.losses,
        grad_norms=result.grad_norms,
        pretrain_epochs=pretrain_epochs,
        diverged=result.diverged,
        wall_clock_seconds=time.perf_counter() - started,
    )
    theta = result.theta
    if not np.all(np.isfinite(theta)):
        # keep the checkpoint loadable even when optimization blew up
        theta = np.where(np.isfinite(theta), theta, 0.0)
    checkpoint = Checkpoint(
        dataset.label_set,
        hidden_map,
        feature_config,
        ModelParams.unflatten(theta, hidden_map.num_states, feature_config.obs_dim),
    )
    if result.diverged:
        raise TrainingDivergedError(
            "training loss became non-finite", report=report, checkpoint=checkpoint
        )
    return checkpoint, report


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    """Frame-level metrics; confusion rows are true labels, columns predicted."""

    frame_accuracy: float
    num_sequences: int
    num_frames: int
    confusion: list[list[int]]
    blank_policy: str
    fold_accuracies: list[float] | None = None
    fold_mean_accuracy: float | None = None
    roc_points: list[list[float]] | None = None
    roc_auc: float | None = None
    positive_label: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def evaluate(
    dataset: Dataset,
    checkpoint: Checkpoint,
    fold_plan: FoldPlan | None = None,
    blank_policy: str = "previous",
    positive_label: str | None = None,
) -> EvalReport:
    """Score marginal-argmax frame decoding against ground-truth labels.

    Blank predictions are remapped per ``blank_policy`` before scoring.
    With a fold plan, per-fold accuracies and their mean are added.  For
    binary label sets a frame-level ROC (score = marginal probability of
    the positive label, default the last real label) is included when
    both classes occur in the data.
    """
    if dataset.label_set.names != checkpoint.label_set.names:
        raise ValueError("dataset and checkpoint use different label sets")
    label_set = checkpoint.label_set
    binary = len(label_set.real_names) == 2
    pos_id: int | None = None
    if binary:
        pos_name = positive_label if positive_label is not None else label_set.real_names[-1]
        pos_id = label_set.id_of(pos_name)
        if pos_id == label_set.blank_id:
            raise ValueError("positive label may not be the blank")
    elif positive_label is not None:
        raise ValueError("positive_label only applies to binary label sets")

    preds: dict[str, list[int]] = {}
    truths: dict[str, list[int]] = {}
    scores: list[float] = []
    score_truth: list[int] = []
    for seq in dataset.sequences:
        if seq.frame_labels is None:
            raise ValueError(f"sequence {seq.id!r} has no frame_labels; cannot score")
        q = label_marginals(seq, checkpoint.params, checkpoint.hidden_map,
                            checkpoint.feature_config)
        raw = [int(a) for a in np.argmax(q, axis=1)]
        preds[seq.id] = remap_blank_predictions(raw, label_set.blank_id, policy=blank_policy)
        truths[seq.id] = list(seq.frame_labels)
        if binary:
            scores.extend(float(v) for v in q[:, pos_id])
            score_truth.extend(int(t == pos_id) for t in seq.frame_labels)

    ordered = [seq.id for seq in dataset.sequences]
    accuracy = frame_accuracy([preds[i] for i in ordered], [truths[i] for i in ordered])
    confusion = confusion_matrix(
        [preds[i] for i in ordered], [truths[i] for i in ordered], label_set.num_labels
    )

    fold_accuracies = None
    fold_mean = None
    if fold_plan is not None:
        fold_accuracies = []
        for fold in range(fold_plan.k):
            ids = [sid for sid in fold_plan.fold_ids(fold) if sid in preds]
            if not ids:
                raise ValueError(f"fold {fold} contains no scored sequences")
            fold_accuracies.append(
                frame_accuracy([preds[i] for i in ids], [truths[i] for i in ids])
            )
        fold_mean = float(np.mean(fold_accuracies))

    roc_points = None
    auc = None
    pos_name_out = None
    if binary:
        pos_name_out = label_set.name_of(pos_id)
        if 0 < sum(score_truth) < len(score_truth):
            points, auc = roc_curve(scores, score_truth)
            roc_points = [[float(x), float(y)] for x, y in points]

    return EvalReport(
        frame_accuracy=accuracy,
        num_sequences=len(dataset.sequences),
        num_frames=sum(len(t) for t in truths.values()),
        confusion=confusion.tolist(),
        blank_policy=blank_policy,
        fold_accuracies=fold_accuracies,
        fold_mean_accuracy=fold_mean,
        roc_points=roc_points,
        roc_auc=auc,
        positive_label=pos_name_out,
    )


# ---------------------------------------------------------------------------
# Gradient checking and the two-mode comparison
# ---------------------------------------------------------------------------


def gradient_check(
    seq: Sequence,
    params: ModelParams,
    hidden_map: HiddenStateMap,
    feature_config: FeatureConfig,
    blank_id: int,
    grad_mode: str = "exact",
    l2: float = 0.0,
    step: float = 1e-5,
) -> float:
    """Worst deviation between the analytic gradient and central finite
    differences of the composite loss, relative to max(1, |a|, |b|)."""
    _, grad = ctc_ldcrf_loss_and_grad(
        [seq], params, hidden_map, feature_config, blank_id, grad_mode=grad_mode, l2=l2
    )
    theta = params.flatten()
    worst = 0.0
    for k in range(theta.size):
        up = theta.copy()
        up[k] += step
        down = theta.copy()
        down[k] -= step
        fd = (
            _composite_loss(seq, up, hidden_map, feature_config, blank_id, l2)
            - _composite_loss(seq, down, hidden_map, feature_config, blank_id, l2)
        ) / (2.0 * step)
        rel = abs(grad[k] - fd) / max(1.0, abs(grad[k]), abs(fd))
        worst = max(worst, rel)
    return worst


def _random_instance(
    rng: np.random.Generator,
    max_frames: int = 6,
    max_states: int = 4,
    max_dim: int = 4,
    param_scale: float = 0.5,
) -> tuple[Sequence, ModelParams, HiddenStateMap, FeatureConfig, int]:
    """Small random model + sequence with a feasible target, for the
    finite-difference and mode-comparison sweeps."""
    combos = [
        (labels, h)
        for labels in range(2, max_states + 1)
        for h in range(1, max_states + 1)
        if labels * h <= max_states
    ]
    num_labels, h = combos[int(rng.integers(len(combos)))]
    t = int(rng.integers(2, max_frames + 1))
    d = int(rng.integers(1, max_dim + 1))
    hidden_map = HiddenStateMap(num_labels, h)
    feature_config = FeatureConfig(input_dim=d, window=int(rng.integers(0, 2)))
    blank_id = num_labels - 1
    while True:
        m = int(rng.integers(1, min(t, 3) + 1))
        z = [int(a) for a in rng.integers(0, num_labels - 1, size=m)]
        if min_frames_required(z) <= t:
            break
    seq = Sequence(id="probe", frames=rng.normal(size=(t, d)), label_seq=z)
    params = ModelParams(
        state_weights=rng.uniform(
            -param_scale, param_scale, size=(hidden_map.num_states, feature_config.obs_dim)
        ),
        trans_weights=rng.uniform(
            -param_scale, param_scale, size=(hidden_map.num_states, hidden_map.num_states)
        ),
    )
    return seq, params, hidden_map, feature_config, blank_id


def gradient_check_suite(
    trials: int = 100,
    seed: int = 1,
    step: float = 1e-5,
    grad_mode: str = "exact",
    l2: float = 1e-3,
) -> float:
    """Max relative gradient error across random small instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        seq, params, hidden_map, feature_config, blank_id = _random_instance(rng)
        worst = max(
            worst,
            gradient_check(seq, params, hidden_map, feature_config, blank_id,
                           grad_mode=grad_mode, l2=l2, step=step),
        )
    return worst


def local_vs_exact_divergence(
    trials: int = 20,
    seed: int = 0,
    zero_transitions: bool = False,
    transition_scale: float = 1.0,
) -> list[dict]:
    """Measure how far the local gradient mode strays from the exact one.

    Returns one row per trial comparing the state-weight gradient blocks:
    {"trial", "frames", "hidden_states", "max_abs_diff", "max_rel_diff"}.
    With zero transitions the two are analytically equal; with random
    transitions in [-scale, scale] the gap is whatever it is — callers
    report it rather than assert on it.
    """
    rng = np.random.default_rng(seed)
    rows: list[dict] = []
    for i in range(trials):
        seq, params, hidden_map, feature_config, blank_id = _random_instance(rng)
        if zero_transitions:
            trans = np.zeros_like(params.trans_weights)
        else:
            trans = rng.uniform(-transition_scale, transition_scale,
                                size=params.trans_weights.shape)
        params = ModelParams(params.state_weights, trans)
        _, g_exact = ctc_ldcrf_loss_and_grad(
            [seq], params, hidden_map, feature_config, blank_id, grad_mode="exact"
        )
        _, g_local = ctc_ldcrf_loss_and_grad(
            [seq], params, hidden_map, feature_config, blank_id, grad_mode="local"
        )
        n_state = hidden_map.num_states * feature_config.obs_dim
        a = g_exact[:n_state]
        b = g_local[:n_state]
        diff = np.abs(a - b)
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
        rows.append(
            {
                "trial": i,
                "frames": seq.num_frames,
                "hidden_states": hidden_map.num_states,
                "max_abs_diff": float(diff.max()),
                "max_rel_diff": float((diff / denom).max()),
            }
        )
    return rows
