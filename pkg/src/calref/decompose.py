"""Estimators of the calibration-refinement decomposition.

The variational estimator returns the empirical risk after fitting a post-hoc
calibrator on the same data (the cross-validated variant is separate).  The
brute-force estimator realizes the optimal relabeling on discrete predictions:
each distinct prediction row is mapped to the empirical conditional mean of
the one-hot labels in its group, which is the exact minimizer over all
relabelings for any proper loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .calibrate import apply_temperature, fit_isotonic, fit_temperature, apply_isotonic
from .errors import MethodCompatibilityError, ValidationError
from .scores import (
    LossKind,
    PredictionSet,
    divergence_rows,
    empirical_risk,
    entropy_rows,
    pointwise_losses,
)

ECE_BINS = 15


class EstimatorKind(str, Enum):
    TS = "ts"
    ISOTONIC = "isotonic"
    BRUTEFORCE = "bruteforce"

    @classmethod
    def parse(cls, name: str) -> "EstimatorKind":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValidationError(f"unknown estimator {name!r}")


@dataclass(frozen=True)
class Decomposition:
    risk: float
    calibration: float
    refinement: float
    loss: LossKind
    estimator: EstimatorKind


@dataclass(frozen=True)
class SharpnessReport:
    uncertainty: float
    sharpness: float


def _grouped_conditional_means(data: PredictionSet):
    """Group identical prediction rows (exact equality) and return
    (row group index, group predictions, group conditional means, group counts)."""
    uniq, inverse = np.unique(data.probs, axis=0, return_inverse=True)
    n_groups = uniq.shape[0]
    counts = np.bincount(inverse, minlength=n_groups).astype(np.float64)
    cond = np.zeros((n_groups, data.k))
    np.add.at(cond, (inverse, data.labels), 1.0)
    cond /= counts[:, None]
    return inverse, uniq, cond, counts


def bruteforce_decomposition(data: PredictionSet, loss: LossKind) -> Decomposition:
    """Oracle decomposition on discrete predictions (conditional-mean relabeling)."""
    if data.n == 0:
        raise ValidationError("cannot decompose an empty prediction set")
    _, uniq, cond, counts = _grouped_conditional_means(data)
    w = counts / data.n
    refinement = float(w @ entropy_rows(loss, cond))
    calibration = float(w @ divergence_rows(loss, uniq, cond))
    return Decomposition(
        risk=calibration + refinement,
        calibration=calibration,
        refinement=refinement,
        loss=loss,
        estimator=EstimatorKind.BRUTEFORCE,
    )


def refinement_estimate(
    data: PredictionSet,
    loss: LossKind,
    estimator: EstimatorKind = EstimatorKind.TS,
    smoothing: bool = False,
) -> float:
    """Empirical risk after post-hoc recalibration, fitted on the same data."""
    if data.n == 0:
        raise ValidationError("cannot estimate refinement on an empty prediction set")
    if estimator == EstimatorKind.BRUTEFORCE:
        return bruteforce_decomposition(data, loss).refinement
    if estimator == EstimatorKind.TS:
        cal = fit_temperature(data, loss, smoothing=smoothing)
        recal = apply_temperature(cal, data.probs)
    elif estimator == EstimatorKind.ISOTONIC:
        if data.k != 2:
            raise MethodCompatibilityError("isotonic refinement requires k=2")
        cal = fit_isotonic(data, smoothing=smoothing)
        recal = apply_isotonic(cal, data.probs)
    else:  # pragma: no cover
        raise ValidationError(f"unknown estimator {estimator}")
    return empirical_risk(loss, data.replace_probs(recal))


def calibration_estimate(
    data: PredictionSet,
    loss: LossKind,
    estimator: EstimatorKind = EstimatorKind.TS,
    smoothing: bool = False,
) -> float:
    if estimator == EstimatorKind.BRUTEFORCE:
        return bruteforce_decomposition(data, loss).calibration
    return empirical_risk(loss, data) - refinement_estimate(data, loss, estimator, smoothing)


def decompose_risk(
    data: PredictionSet,
    loss: LossKind,
    estimator: EstimatorKind = EstimatorKind.TS,
    smoothing: bool = False,
) -> Decomposition:
    """Bundle (risk, calibration, refinement); risk = calibration + refinement
    holds exactly by construction."""
    if estimator == EstimatorKind.BRUTEFORCE:
        return bruteforce_decomposition(data, loss)
    risk = empirical_risk(loss, data)
    refinement = refinement_estimate(data, loss, estimator, smoothing)
    return Decomposition(
        risk=risk,
        calibration=risk - refinement,
        refinement=refinement,
        loss=loss,
        estimator=estimator,
    )


def sharpness_report(data: PredictionSet, loss: LossKind) -> SharpnessReport:
    """Uncertainty is the entropy of the empirical label marginal; sharpness is
    uncertainty minus the brute-force refinement (Eq. uncertainty - sharpness)."""
    if data.n == 0:
        raise ValidationError("cannot compute sharpness on an empty prediction set")
    marginal = np.bincount(data.labels, minlength=data.k) / data.n
    uncertainty = float(entropy_rows(loss, marginal))
    refinement = bruteforce_decomposition(data, loss).refinement
    return SharpnessReport(uncertainty=uncertainty, sharpness=uncertainty - refinement)


def binned_ece(data: PredictionSet, bins: int = ECE_BINS) -> float:
    """Top-label ECE with equal-width confidence bins on [0, 1]."""
    if data.n == 0:
        raise ValidationError("cannot compute ECE on an empty prediction set")
    conf = data.probs.max(axis=1)
    correct = (data.probs.argmax(axis=1) == data.labels).astype(np.float64)
    idx = np.minimum((conf * bins).astype(np.int64), bins - 1)
    n_b = np.bincount(idx, minlength=bins)
    conf_b = np.bincount(idx, weights=conf, minlength=bins)
    acc_b = np.bincount(idx, weights=correct, minlength=bins)
    occupied = n_b > 0
    gaps = np.abs(conf_b[occupied] - acc_b[occupied])
    return float(gaps.sum() / data.n)


def cv_refinement(
    data: PredictionSet,
    loss: LossKind,
    folds: int = 5,
    seed: int = 0,
    smoothing: bool = False,
) -> float:
    """Mean out-of-fold loss after temperature scaling fitted on in-fold data.

    Folds are contiguous after a seeded shuffle, so results are deterministic
    per seed.
    """
    if folds < 2:
        raise ValidationError(f"cv_refinement requires folds >= 2, got {folds}")
    if data.n < folds:
        raise ValidationError(f"need at least {folds} rows, got {data.n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    losses = []
    for part in np.array_split(perm, folds):
        mask = np.ones(data.n, dtype=bool)
        mask[part] = False
        train = PredictionSet(data.probs[mask], data.labels[mask])
        cal = fit_temperature(train, loss, smoothing=smoothing)
        out = apply_temperature(cal, data.probs[part])
        held = PredictionSet(out, data.labels[part])
        losses.append(pointwise_losses(loss, held).mean())
    return float(np.mean(losses))
