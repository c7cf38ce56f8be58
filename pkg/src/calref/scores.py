"""Proper losses, their entropies/divergences, and metrics over prediction sets.

Conventions: natural log throughout; probabilities are clamped to
[1e-15, 1] before any log so the logloss stays finite on degenerate inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import xlogy
from scipy.stats import rankdata

from .errors import DegenerateLabelsError, ValidationError

LOG_CLIP = 1e-15
SUM_TOL = 1e-9


class LossKind(str, Enum):
    LOGLOSS = "logloss"
    BRIER = "brier"

    @classmethod
    def parse(cls, name: str) -> "LossKind":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValidationError(f"unknown loss {name!r}; expected logloss or brier")


def _as_prob_matrix(probs, renormalize: bool = False) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    if p.ndim != 2 or p.shape[1] < 2:
        raise ValidationError(f"probabilities must be (n, k) with k >= 2, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("probabilities contain non-finite entries")
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        bad = int(np.argmax(np.any((p < -1e-12) | (p > 1 + 1e-12), axis=1)))
        raise ValidationError(f"probability entries outside [0, 1] at row {bad}")
    sums = p.sum(axis=1)
    if renormalize:
        if np.any(sums <= 0):
            raise ValidationError("cannot renormalize a row with nonpositive sum")
        p = p / sums[:, None]
    elif np.any(np.abs(sums - 1.0) > SUM_TOL):
        bad = int(np.argmax(np.abs(sums - 1.0) > SUM_TOL))
        raise ValidationError(
            f"probability row {bad} sums to {sums[bad]:.12g}, outside 1 +/- {SUM_TOL}"
        )
    return np.clip(p, 0.0, 1.0)


def validate_prob_vector(p) -> np.ndarray:
    """Validate a single probability vector and return it as float64."""
    return _as_prob_matrix(p)[0]


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class PredictionSet:
    """An (n, k) matrix of probability rows paired with integer class labels."""

    probs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if probs.ndim != 2 or probs.shape[1] < 2:
            raise ValidationError(f"probs must be (n, k) with k >= 2, got shape {probs.shape}")
        if labels.ndim != 1 or labels.shape[0] != probs.shape[0]:
            raise ValidationError(
                f"labels shape {labels.shape} does not match {probs.shape[0]} prediction rows"
            )
        if probs.shape[0] and (labels.min() < 0 or labels.max() >= probs.shape[1]):
            raise ValidationError("labels must lie in {0..k-1}")
        probs = _as_prob_matrix(probs) if probs.shape[0] else probs
        probs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def k(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def from_probs(cls, probs, labels, renormalize: bool = False) -> "PredictionSet":
        return cls(_as_prob_matrix(probs, renormalize=renormalize), labels)

    @classmethod
    def from_logits(cls, logits, labels) -> "PredictionSet":
        z = np.asarray(logits, dtype=np.float64)
        if not np.all(np.isfinite(z)):
            raise ValidationError("logits contain non-finite entries")
        return cls(softmax(z), labels)

    def replace_probs(self, probs) -> "PredictionSet":
        return PredictionSet(probs, self.labels)


def _require_rows(data: PredictionSet, what: str):
    if data.n == 0:
        raise ValidationError(f"{what} is undefined on an empty prediction set")


def clipped_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, LOG_CLIP, 1.0))


def pointwise_losses(loss: LossKind, data: PredictionSet) -> np.ndarray:
    """Per-row loss values ell(p_i, y_i)."""
    rows = np.arange(data.n)
    if loss == LossKind.LOGLOSS:
        return -clipped_log(data.probs[rows, data.labels])
    sq = (data.probs**2).sum(axis=1)
    return sq - 2.0 * data.probs[rows, data.labels] + 1.0


def loss_pointwise(loss: LossKind, p, y: int) -> float:
    p = validate_prob_vector(p)
    if not 0 <= y < p.shape[0]:
        raise ValidationError(f"label {y} out of range for k={p.shape[0]}")
    if loss == LossKind.LOGLOSS:
        return float(-clipped_log(p[y]))
    return float((p**2).sum() - 2.0 * p[y] + 1.0)


def entropy_rows(loss: LossKind, q: np.ndarray) -> np.ndarray:
    if loss == LossKind.LOGLOSS:
        return -xlogy(q, q).sum(axis=-1)
    return (q * (1.0 - q)).sum(axis=-1)


def entropy(loss: LossKind, q) -> float:
    """ell-entropy e(q) = ell(q, q): Shannon entropy (nats) or Gini index."""
    return float(entropy_rows(loss, validate_prob_vector(q)))


def expected_loss_rows(loss: LossKind, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """ell(p, q) = E_{Y~q}[ell(p, Y)], row-wise."""
    if loss == LossKind.LOGLOSS:
        return -(q * clipped_log(p)).sum(axis=-1)
    return (p**2).sum(axis=-1) - 2.0 * (p * q).sum(axis=-1) + 1.0


def divergence_rows(loss: LossKind, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return expected_loss_rows(loss, p, q) - entropy_rows(loss, q)


def divergence(loss: LossKind, p, q) -> float:
    """ell-divergence d(p, q) = ell(p, q) - ell(q, q): KL(q||p) or ||p - q||^2."""
    p = validate_prob_vector(p)
    q = validate_prob_vector(q)
    if p.shape != q.shape:
        raise ValidationError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return float(divergence_rows(loss, p, q))


def empirical_risk(loss: LossKind, data: PredictionSet) -> float:
    _require_rows(data, "empirical risk")
    return float(pointwise_losses(loss, data).mean())


def accuracy(data: PredictionSet) -> float:
    _require_rows(data, "accuracy")
    return float((data.probs.argmax(axis=1) == data.labels).mean())


def auroc_ovr(data: PredictionSet) -> float:
    """One-vs-rest AUROC, macro-averaged over the classes present in labels.

    Ties are handled with midranks. Raises DegenerateLabelsError when all
    labels coincide (no class has both positives and negatives).
    """
    _require_rows(data, "AUROC")
    present = np.unique(data.labels)
    if present.size < 2:
        raise DegenerateLabelsError("AUROC undefined: all labels identical")
    aucs = []
    for c in present:
        pos = data.labels == c
        n_pos = int(pos.sum())
        n_neg = data.n - n_pos
        ranks = rankdata(data.probs[:, c])
        auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
        aucs.append(auc)
    return float(np.mean(aucs))
