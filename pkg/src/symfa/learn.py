"""Symbol extraction and gradient training against automaton losses.

The extractor maps an m-dimensional observation to one probability per
vocabulary symbol through independent logistic units. Sequence-level
(binary cross entropy on acceptance) and per-step (cross entropy on the
state distribution) losses are differentiated exactly through the circuit
evaluations and the state recursion, so training is plain gradient
descent; no sampling or approximation is involved anywhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .automaton import (
    CompiledSfa,
    _accepting_mask,
    acceptance_batch,
    backward_gradient,
    forward_alphas,
)
from .errors import DivergenceError

LOG_CLAMP = 1e-7

CHECKPOINT_MAGIC = b"SYMF"
CHECKPOINT_VERSION = 1


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LinearExtractor:
    """Per-symbol logistic units: p[i] = sigmoid(weights[i] . o + bias[i]).

    Any model exposing extract() with the same contract can stand in for
    this class; the losses only consume probabilities and the jacobian.
    """

    weights: np.ndarray  # (num_symbols, feature_dim)
    bias: np.ndarray  # (num_symbols,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (num_symbols, feature_dim), bias (num_symbols,)")

    @classmethod
    def init_random(cls, num_symbols: int, feature_dim: int, rng: np.random.Generator):
        return cls(
            rng.uniform(-0.1, 0.1, size=(num_symbols, feature_dim)),
            rng.uniform(-0.1, 0.1, size=num_symbols),
        )

    @property
    def num_symbols(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LinearExtractor":
        return LinearExtractor(self.weights.copy(), self.bias.copy())

    def extract(self, features, want_jacobian: bool = False):
        """Symbol probabilities for observations of shape (..., feature_dim).

        With `want_jacobian`, also returns dp/dfeatures of shape
        (..., num_symbols, feature_dim).
        """
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.feature_dim:
            raise ValueError(
                f"feature dimension {features.shape[-1]} != extractor's {self.feature_dim}"
            )
        probs = _sigmoid(features @ self.weights.T + self.bias)
        if not want_jacobian:
            return probs
        slope = probs * (1.0 - probs)  # (..., num_symbols)
        jac = slope[..., :, None] * self.weights
        return probs, jac


@dataclass
class LabeledSequence:
    """Observations plus either a binary sequence label or per-step labels.

    Exactly one of `label` (0/1 for the whole sequence) and `step_labels`
    (one entry per observation; None entries mark unlabeled steps) is set.
    """

    features: np.ndarray  # (steps, feature_dim)
    label: int | None = None
    step_labels: Sequence[int | None] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a (steps, feature_dim) array")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if (self.label is None) == (self.step_labels is None):
            raise ValueError("set exactly one of label / step_labels")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"sequence label must be 0 or 1, got {self.label}")
        if self.step_labels is not None and len(self.step_labels) != len(self.features):
            raise ValueError("need one step label (or None) per observation")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    optimizer: str = "adam"  # "adam" | "sgd"
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch size and max epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    metric: float  # training accuracy


def _clamped_log_grad(prob: float | np.ndarray):
    """log of a clamped probability and d/dprob of that log (0 when clamped)."""
    clamped = np.clip(prob, LOG_CLAMP, 1.0 - LOG_CLAMP)
    inside = (prob > LOG_CLAMP) & (prob < 1.0 - LOG_CLAMP)
    return np.log(clamped), np.where(inside, 1.0 / clamped, 0.0)


def _param_grads(features, probs, dloss_dprobs):
    """Chain per-step probability gradients into (dW, db)."""
    slope = probs * (1.0 - probs) * dloss_dprobs  # (..., num_symbols)
    flat_s = slope.reshape(-1, slope.shape[-1])
    flat_f = features.reshape(-1, features.shape[-1])
    return flat_s.T @ flat_f, flat_s.sum(axis=0)


def _batch_sequence_loss(c: CompiledSfa, extractor, features, labels):
    """Mean BCE over a batch of equal-length sequences, with gradients.

    features: (B, T, m); labels: (B,) of 0/1. Returns (loss, dW, db).
    """
    labels = np.asarray(labels, dtype=np.float64)
    probs = extractor.extract(features)
    accept = acceptance_batch(c, probs)  # (B,)
    log_p, dlog_p = _clamped_log_grad(accept)
    log_q, dlog_q = _clamped_log_grad(1.0 - accept)
    losses = -(labels * log_p + (1.0 - labels) * log_q)
    batch = labels.shape[0]
    # dLoss/dAccept for the batch-mean loss
    dacc = (-(labels * dlog_p) + (1.0 - labels) * dlog_q) / batch
    mask = _accepting_mask(c)
    alpha_grads = np.zeros(features.shape[:2] + (c.num_states,))
    alpha_grads[:, -1, :] = dacc[:, None] * mask
    dprobs = backward_gradient(c, probs, alpha_grads)
    dw, db = _param_grads(features, probs, dprobs)
    return float(losses.mean()), dw, db


def sequence_loss(c: CompiledSfa, extractor, seq: LabeledSequence):
    """Binary cross entropy between acceptance probability and the label.

    Returns (loss, (dW, db)). The acceptance probability is clamped to
    [1e-7, 1 - 1e-7] inside the logs.
    """
    if seq.label is None:
        raise ValueError("sequence_loss needs a sequence-level binary label")
    loss, dw, db = _batch_sequence_loss(
        c, extractor, seq.features[None, :, :], np.array([seq.label])
    )
    return loss, (dw, db)


def _step_label_matrix(c, state_to_label, step_labels, num_steps):
    """Per-step 0/1 mask over states matching the step's label; None rows stay 0."""
    sel = np.zeros((num_steps, c.num_states))
    active = np.zeros(num_steps, dtype=bool)
    for t, lab in enumerate(step_labels):
        if lab is None:
            continue
        active[t] = True
        hits = [q for q in range(c.num_states) if state_to_label[q] == lab]
        if not hits:
            raise ValueError(f"label {lab!r} at step {t} matches no state")
        sel[t, hits] = 1.0
    return sel, active


def _batch_tagging_loss(c, extractor, features, label_masks, active):
    """Summed per-step CE over a batch: features (B,T,m), masks (B,T,Q)."""
    probs = extractor.extract(features)
    alphas = forward_alphas(c, probs)  # (B, T, Q)
    step_probs = (alphas * label_masks).sum(axis=-1)  # (B, T)
    log_p, dlog_p = _clamped_log_grad(step_probs)
    per_seq = -(log_p * active).sum(axis=-1)
    batch = features.shape[0]
    dstep = -(dlog_p * active) / batch  # (B, T)
    alpha_grads = dstep[..., None] * label_masks
    dprobs = backward_gradient(c, probs, alpha_grads)
    dw, db = _param_grads(features, probs, dprobs)
    return float(per_seq.mean()), dw, db


def tagging_loss(c: CompiledSfa, extractor, seq: LabeledSequence, state_to_label):
    """Per-step cross entropy on the state distribution.

    `state_to_label` maps each state index to its emitted label; the
    probability of the step's label is the summed mass of the matching
    states, clamped inside the log. Steps labeled None contribute nothing.
    Returns (loss, (dW, db)).
    """
    if seq.step_labels is None:
        raise ValueError("tagging_loss needs per-step labels")
    sel, active = _step_label_matrix(c, state_to_label, seq.step_labels, len(seq.features))
    loss, dw, db = _batch_tagging_loss(
        c, extractor, seq.features[None], sel[None], active[None]
    )
    return loss, (dw, db)


# --- optimizers -------------------------------------------------------------

class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class _Adam:
    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        for k, (p, g) in enumerate(zip(params, grads)):
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            mhat = self.m[k] / (1 - self.beta1**self.t)
            vhat = self.v[k] / (1 - self.beta2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _group_equal_length(batch: list[LabeledSequence]):
    """Bucket a minibatch by sequence length, preserving first-seen order."""
    groups: dict[int, list[LabeledSequence]] = {}
    for seq in batch:
        groups.setdefault(len(seq.features), []).append(seq)
    return list(groups.values())


@dataclass
class TrainResult:
    extractor: LinearExtractor
    history: list[EpochRecord] = field(default_factory=list)


def train(
    c: CompiledSfa,
    data: Sequence[LabeledSequence],
    cfg: TrainConfig,
    state_to_label=None,
    init: LinearExtractor | None = None,
) -> TrainResult:
    """Gradient-descent training of the extractor on labeled sequences.

    All sequences must carry the same kind of label. Sequence-level labels
    train with BCE on acceptance; per-step labels with summed cross
    entropy (state_to_label defaults to the identity map). Training stops
    early when the epoch loss has not improved for `patience` epochs, and
    the parameters with the best training loss are returned. Everything is
    seeded: identical inputs give bitwise-identical results.
    """
    data = list(data)
    if not data:
        raise ValueError("training data is empty")
    kinds = {seq.label is None for seq in data}
    if len(kinds) != 1:
        raise ValueError("mix of sequence-level and per-step labels")
    tagging = data[0].label is None
    if tagging and state_to_label is None:
        state_to_label = {q: q for q in range(c.num_states)}

    feature_dim = data[0].features.shape[1]
    rng = np.random.default_rng(cfg.seed)
    if init is not None and init.num_symbols != len(c.vocab):
        raise ValueError(
            f"extractor emits {init.num_symbols} symbols, automaton has {len(c.vocab)}"
        )
    extractor = (init or LinearExtractor.init_random(len(c.vocab), feature_dim, rng)).copy()
    opt = _Adam(cfg.learning_rate) if cfg.optimizer == "adam" else _Sgd(cfg.learning_rate)

    best = extractor.copy()
    best_loss = np.inf
    stale = 0
    history: list[EpochRecord] = []

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(data))
        epoch_loss = 0.0
        correct = 0
        total = 0
        for start in range(0, len(data), cfg.batch_size):
            batch = [data[k] for k in order[start : start + cfg.batch_size]]
            dw = np.zeros_like(extractor.weights)
            db = np.zeros_like(extractor.bias)
            batch_loss = 0.0
            for group in _group_equal_length(batch):
                feats = np.stack([seq.features for seq in group])
                share = len(group) / len(batch)
                if tagging:
                    masks = []
                    actives = []
                    for seq in group:
                        sel, act = _step_label_matrix(
                            c, state_to_label, seq.step_labels, len(seq.features)
                        )
                        masks.append(sel)
                        actives.append(act)
                    loss, gdw, gdb = _batch_tagging_loss(
                        c, extractor, feats, np.stack(masks), np.stack(actives)
                    )
                    probs = extractor.extract(feats)
                    alphas = forward_alphas(c, probs)
                    pred_labels = np.array(
                        [[state_to_label[q] for q in row] for row in alphas.argmax(axis=-1)]
                    )
                    for b, seq in enumerate(group):
                        for t, lab in enumerate(seq.step_labels):
                            if lab is not None:
                                total += 1
                                correct += int(pred_labels[b, t] == lab)
                else:
                    labels = np.array([seq.label for seq in group])
                    loss, gdw, gdb = _batch_sequence_loss(c, extractor, feats, labels)
                    probs = extractor.extract(feats)
                    predicted = acceptance_batch(c, probs) >= 0.5
                    correct += int((predicted == labels.astype(bool)).sum())
                    total += len(group)
                # group losses/grads are means over the group; reweight to
                # make the minibatch objective the mean over the minibatch
                batch_loss += loss * share
                dw += gdw * len(group) / len(batch)
                db += gdb * len(group) / len(batch)
            if not np.isfinite(batch_loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}: {batch_loss}"
                )
            opt.step([extractor.weights, extractor.bias], [dw, db])
            if not (
                np.all(np.isfinite(extractor.weights)) and np.all(np.isfinite(extractor.bias))
            ):
                raise DivergenceError(f"non-finite parameters at epoch {epoch}")
            epoch_loss += batch_loss * len(batch)
        epoch_loss /= len(data)
        history.append(EpochRecord(epoch, epoch_loss, correct / max(total, 1)))
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            best = extractor.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return TrainResult(best, history)


# --- checkpoints -------------------------------------------------------------
#
# Byte layout (little endian):
#   0:4   magic  b"SYMF"
#   4:8   format version, uint32 (currently 1)
#   8:12  num_symbols, uint32
#   12:16 feature_dim, uint32
#   16:   weights, float64 row-major (num_symbols * feature_dim values)
#   then  bias, float64 (num_symbols values)

def save_extractor(extractor: LinearExtractor, path) -> None:
    header = CHECKPOINT_MAGIC + struct.pack(
        "<III", CHECKPOINT_VERSION, extractor.num_symbols, extractor.feature_dim
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(extractor.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(extractor.bias, dtype="<f8").tobytes())


def load_extractor(path) -> LinearExtractor:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an extractor checkpoint")
    version, num_symbols, feature_dim = struct.unpack_from("<III", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    expect = 16 + 8 * num_symbols * (feature_dim + 1)
    if len(blob) != expect:
        raise ValueError(f"{path}: truncated checkpoint ({len(blob)} of {expect} bytes)")
    w_end = 16 + 8 * num_symbols * feature_dim
    weights = np.frombuffer(blob[16:w_end], dtype="<f8").reshape(num_symbols, feature_dim)
    bias = np.frombuffer(blob[w_end:], dtype="<f8")
    return LinearExtractor(weights.copy(), bias.copy())
