"""Closed-form calibration/refinement/error-rate for the two-class Gaussian model.

A linear model on the symmetric Gaussian mixture is summarized by two scalars:
the expertise level a (rescaling-invariant alignment with the Bayes direction)
and the confidence level s (Sigma-norm of the weights).  Both error terms are
1-D standard-normal expectations, evaluated with 200-node Gauss-Hermite
quadrature; the divergence integrand is written in softplus form so extreme
nodes stay finite without explicit clipping.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import expit, ndtr, ndtri

from .errors import NumericalError, ValidationError
from .scores import LossKind
from .spectra import beta_expect

GH_NODES = 200
# Beyond this confidence level the divergence integrand is too sharp for the
# fixed rule; switch to adaptive quadrature split at the mixture mean.
GH_NORM_LIMIT = 50.0


@dataclass(frozen=True)
class GaussianModelPoint:
    """(expertise level a, confidence level s); both nonnegative."""

    alignment: float
    norm: float

    def __post_init__(self):
        if not (np.isfinite(self.alignment) and np.isfinite(self.norm)):
            raise ValidationError("model point must be finite")
        if self.alignment < 0 or self.norm < 0:
            raise ValidationError("alignment and norm must be nonnegative")


@lru_cache(maxsize=8)
def _gh_rule(nodes: int):
    t, w = np.polynomial.hermite.hermgauss(nodes)
    return t * np.sqrt(2.0), w / np.sqrt(np.pi)


def gauss_expect(h, nodes: int = GH_NODES) -> float:
    """E[h(z)] for z ~ N(0,1) via Gauss-Hermite quadrature."""
    z, w = _gh_rule(nodes)
    vals = np.asarray(h(z), dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("integrand produced non-finite values at quadrature nodes")
    return float(w @ vals)


def _expect_adaptive(h, split: float) -> float:
    lo, hi = -40.0, 40.0
    cut = min(max(split, lo), hi)
    total = 0.0
    for a, b in ((lo, cut), (cut, hi)):
        if b <= a:
            continue
        val, _ = quad(
            lambda z: h(np.asarray([z]))[0] * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi),
            a,
            b,
            epsabs=1e-13,
            epsrel=1e-11,
            limit=300,
        )
        total += val
    return total


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _entropy_logit(u: np.ndarray, loss: LossKind) -> np.ndarray:
    """ell-entropy of the binary distribution (sigma(u), sigma(-u))."""
    if loss == LossKind.LOGLOSS:
        return expit(u) * _softplus(-u) + expit(-u) * _softplus(u)
    return 2.0 * expit(u) * expit(-u)


def _divergence_logits(v: np.ndarray, u: np.ndarray, loss: LossKind) -> np.ndarray:
    """d(p, q) for binary p = sigma(v) (prediction), q = sigma(u) (calibrated)."""
    if loss == LossKind.LOGLOSS:
        return expit(u) * (_softplus(-v) - _softplus(-u)) + expit(-u) * (
            _softplus(v) - _softplus(u)
        )
    return 2.0 * (expit(v) - expit(u)) ** 2


def refinement_error(point: GaussianModelPoint, loss: LossKind = LossKind.LOGLOSS) -> float:
    """E[e(sigma(a (z + a/2)))]; depends on the alignment only."""
    a = point.alignment

    def h(z):
        return _entropy_logit(a * (z + 0.5 * a), loss)

    if a > GH_NORM_LIMIT:
        return _expect_adaptive(h, -0.5 * a)
    return gauss_expect(h)


def calibration_error(point: GaussianModelPoint, loss: LossKind = LossKind.LOGLOSS) -> float:
    """E[d(sigma(s (z + a/2)), sigma(a (z + a/2)))]; zero exactly when s = a."""
    a, s = point.alignment, point.norm

    def h(z):
        t = z + 0.5 * a
        return _divergence_logits(s * t, a * t, loss)

    if max(a, s) > GH_NORM_LIMIT:
        return _expect_adaptive(h, -0.5 * a)
    return gauss_expect(h)


def error_rate(point: GaussianModelPoint) -> float:
    """Classification error Phi(-a/2); scale-free."""
    return float(ndtr(-0.5 * point.alignment))


def optimal_rescale(point: GaussianModelPoint) -> GaussianModelPoint:
    """The rescaling that zeroes calibration error while preserving refinement:
    confidence is brought to the expertise level (degenerate (0, s) -> (0, 0))."""
    return GaussianModelPoint(point.alignment, point.alignment)


def optimal_error_rate(c: float, spectrum) -> float:
    """Error rate of the Bayes classifier: Phi(-c sqrt(E[1/sigma]))."""
    if c < 0:
        raise ValidationError("separability c must be nonnegative")
    return float(ndtr(-c * np.sqrt(beta_expect(spectrum, "inv_sigma"))))


def invert_estar(estar: float, spectrum) -> float:
    """Separability c achieving optimal error rate estar in (0, 0.5)."""
    if not 0.0 < estar < 0.5:
        raise ValidationError(f"optimal error rate must lie in (0, 0.5), got {estar}")
    return float(-ndtri(estar) / np.sqrt(beta_expect(spectrum, "inv_sigma")))
