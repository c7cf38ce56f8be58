"""Post-hoc calibrators: temperature scaling and binary isotonic regression.

Temperature scaling follows the bisection scheme on b = log(beta): the loss
of softmax(beta * log p) is convex in beta for the logloss, so its derivative
in b changes sign exactly once on the search bracket [-16, 16].  Laplace
smoothing mixes the calibrated output with the uniform distribution at weight
1/(N_cal + 1); it is stored on the calibrator, never inside the fit objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import MethodCompatibilityError, ValidationError
from .scores import LossKind, PredictionSet, clipped_log, softmax

B_MIN, B_MAX = -16.0, 16.0
BISECTION_STEPS = 30
GRAD_TOL = 1e-12

_LOSS_ID = {LossKind.LOGLOSS: 0, LossKind.BRIER: 1}


@dataclass(frozen=True)
class TemperatureCalibrator:
    """Map p -> softmax(beta * log p), optionally Laplace-smoothed."""

    beta: float
    smoothing_n: int = 0

    def __post_init__(self):
        if not np.exp(B_MIN) <= self.beta <= np.exp(B_MAX):
            raise ValidationError(f"beta {self.beta} outside [e^-16, e^16]")
        if self.smoothing_n < 0:
            raise ValidationError("smoothing_n must be >= 0")

    def to_dict(self) -> dict:
        return {"type": "temperature", "beta": self.beta, "smoothing_n": self.smoothing_n}


@dataclass(frozen=True)
class IsotonicCalibrator:
    """Nondecreasing step function on the class-1 score, binary only."""

    breakpoints: np.ndarray
    values: np.ndarray
    smoothing_n: int = 0

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if bp.ndim != 1 or bp.shape != vals.shape or bp.size == 0:
            raise ValidationError("breakpoints and values must be equal-length 1-D arrays")
        if np.any(np.diff(bp) <= 0):
            raise ValidationError("breakpoints must be strictly increasing")
        if np.any(np.diff(vals) < -1e-12) or vals.min() < -1e-12 or vals.max() > 1 + 1e-12:
            raise ValidationError("values must be nondecreasing probabilities")
        if self.smoothing_n < 0:
            raise ValidationError("smoothing_n must be >= 0")
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def to_dict(self) -> dict:
        return {
            "type": "isotonic",
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
            "smoothing_n": self.smoothing_n,
        }


def calibrator_from_dict(d: dict):
    kind = d.get("type")
    if kind == "temperature":
        return TemperatureCalibrator(beta=float(d["beta"]), smoothing_n=int(d["smoothing_n"]))
    if kind == "isotonic":
        return IsotonicCalibrator(
            breakpoints=np.asarray(d["breakpoints"], dtype=np.float64),
            values=np.asarray(d["values"], dtype=np.float64),
            smoothing_n=int(d["smoothing_n"]),
        )
    raise ValidationError(f"unknown calibrator type {kind!r}")


def _loss_and_grad(logp, labels, b: float, loss: LossKind):
    return kernels.ts_value_grad(logp, labels, b, _LOSS_ID[loss])


def fit_temperature(
    data: PredictionSet, loss: LossKind = LossKind.LOGLOSS, smoothing: bool = False
) -> TemperatureCalibrator:
    """Fit beta* = exp(b*) with 30 bisection steps on dL/db over b in [-16, 16].

    A midpoint with |dL/db| < 1e-12 is accepted as the root immediately; if
    the derivative has the same sign at both endpoints, the endpoint with the
    lower loss is returned.
    """
    if data.n == 0:
        raise ValidationError("cannot fit temperature on an empty prediction set")
    logp = clipped_log(data.probs)
    labels = data.labels
    n_smooth = data.n if smoothing else 0

    def bisect(lo, hi, loss_lo, loss_hi):
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            loss_mid, grad_mid = _loss_and_grad(logp, labels, mid, loss)
            if abs(grad_mid) < GRAD_TOL:
                # Vanishing derivative: a root, unless softmax saturation
                # flushed it on a flank; bracket-edge losses disambiguate.
                if loss_mid <= loss_lo and loss_mid <= loss_hi:
                    return mid, loss_mid
                if loss_lo <= loss_hi:
                    hi, loss_hi = mid, loss_mid
                else:
                    lo, loss_lo = mid, loss_mid
            elif grad_mid > 0:
                hi, loss_hi = mid, loss_mid
            else:
                lo, loss_lo = mid, loss_mid
        mid = 0.5 * (lo + hi)
        return mid, _loss_and_grad(logp, labels, mid, loss)[0]

    lo, hi = B_MIN, B_MAX
    loss_lo, grad_lo = _loss_and_grad(logp, labels, lo, loss)
    loss_hi, grad_hi = _loss_and_grad(logp, labels, hi, loss)

    if loss == LossKind.BRIER:
        # The Brier objective can have a local max between its minimum and the
        # saturation plateau, so locate the basin by a coarse scan first.
        grid = np.arange(B_MIN, B_MAX + 1.0)
        values = [loss_lo] + [
            _loss_and_grad(logp, labels, float(b), loss)[0] for b in grid[1:-1]
        ] + [loss_hi]
        j = int(np.argmin(values))
        if min(values) < max(values):
            lo = float(max(B_MIN, grid[j] - 1.0))
            hi = float(min(B_MAX, grid[j] + 1.0))
            loss_lo = _loss_and_grad(logp, labels, lo, loss)[0]
            loss_hi = _loss_and_grad(logp, labels, hi, loss)[0]
            b, loss_b = bisect(lo, hi, loss_lo, loss_hi)
            if values[j] < loss_b:
                b = float(grid[j])
            return TemperatureCalibrator(beta=float(np.exp(b)), smoothing_n=n_smooth)
        # flat objective: fall through to full-bracket bisection (-> b = 0)
    else:
        # Same sign at both endpoints: the objective is monotone on the
        # bracket, return the endpoint with the lower loss.  Saturation at
        # b=16 flushes the derivative of an everywhere-decreasing logloss to
        # zero (all rows classified correctly), so a strictly negative
        # low-end derivative with a vanished high-end one counts as monotone.
        monotone = (
            (grad_lo < -GRAD_TOL and grad_hi < -GRAD_TOL)
            or (grad_lo > GRAD_TOL and grad_hi > GRAD_TOL)
            or (grad_lo < -GRAD_TOL and abs(grad_hi) <= GRAD_TOL)
        )
        if monotone:
            b = lo if loss_lo <= loss_hi else hi
            return TemperatureCalibrator(beta=float(np.exp(b)), smoothing_n=n_smooth)
    b, _ = bisect(lo, hi, loss_lo, loss_hi)
    return TemperatureCalibrator(beta=float(np.exp(b)), smoothing_n=n_smooth)


def apply_temperature(cal: TemperatureCalibrator, p) -> np.ndarray:
    """Apply softmax(beta * log p) rowwise; mixes with uniform when smoothing."""
    arr = np.asarray(p, dtype=np.float64)
    squeeze = arr.ndim == 1
    out = softmax(cal.beta * clipped_log(np.atleast_2d(arr)))
    if cal.smoothing_n > 0:
        k = out.shape[1]
        w = 1.0 / (cal.smoothing_n + 1.0)
        out = (1.0 - w) * out + w / k
    return out[0] if squeeze else out


def fit_isotonic(data: PredictionSet, smoothing: bool = False) -> IsotonicCalibrator:
    """Pool-adjacent-violators fit of the label indicator on the class-1 score.

    Tied scores are pooled before PAV; prediction uses left-closed steps,
    extended constantly beyond the score range.
    """
    if data.k != 2:
        raise MethodCompatibilityError(f"isotonic regression requires k=2, got k={data.k}")
    if data.n == 0:
        raise ValidationError("cannot fit isotonic regression on an empty prediction set")
    scores = data.probs[:, 1]
    y = (data.labels == 1).astype(np.float64)
    uniq, inverse = np.unique(scores, return_inverse=True)
    counts = np.bincount(inverse).astype(np.float64)
    means = np.bincount(inverse, weights=y) / counts
    fitted = kernels.pav(means, counts)
    return IsotonicCalibrator(
        breakpoints=uniq, values=fitted, smoothing_n=data.n if smoothing else 0
    )


def apply_isotonic(cal: IsotonicCalibrator, p) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    squeeze = arr.ndim == 1
    mat = np.atleast_2d(arr)
    if mat.shape[1] != 2:
        raise MethodCompatibilityError(f"isotonic calibrator requires k=2, got k={mat.shape[1]}")
    idx = np.searchsorted(cal.breakpoints, mat[:, 1], side="right") - 1
    v = cal.values[np.clip(idx, 0, cal.values.size - 1)]
    if cal.smoothing_n > 0:
        w = 1.0 / (cal.smoothing_n + 1.0)
        v = (1.0 - w) * v + 0.5 * w
    out = np.column_stack([1.0 - v, v])
    return out[0] if squeeze else out


def apply_calibrator(cal, p) -> np.ndarray:
    if isinstance(cal, TemperatureCalibrator):
        return apply_temperature(cal, p)
    if isinstance(cal, IsotonicCalibrator):
        return apply_isotonic(cal, p)
    raise ValidationError(f"unknown calibrator {type(cal).__name__}")
