"""Spectral distributions of covariance eigenvalues and their expectations.

The working family is sigma = epsilon + Beta(alpha, beta), strictly positive
and bounded by 1 + epsilon.  Expectations are computed by adaptive
Gauss-Kronrod quadrature of the Beta-density integral on [0, 1]; when a shape
parameter is below one, the endpoint substitution u = t^(1/alpha) (mirrored
for beta) removes the density singularity before quadrature.
A degenerate single-atom spectrum is provided for closed-form checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import beta as beta_fn

from .errors import NumericalError, ValidationError

_QUAD_KW = dict(epsabs=1e-14, epsrel=1e-12, limit=200)


@dataclass(frozen=True)
class SpectralDist:
    """sigma = epsilon + Beta(alpha, beta)."""

    alpha: float
    beta: float
    epsilon: float = 1e-3

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValidationError("Beta shape parameters must be positive")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive (sigma must stay away from 0)")

    @property
    def support(self) -> tuple[float, float]:
        return self.epsilon, 1.0 + self.epsilon

    def expect(self, f) -> np.ndarray:
        """E[f(sigma)] for a vectorized f returning scalars or 1-D arrays."""
        a, b, eps = self.alpha, self.beta, self.epsilon
        norm = beta_fn(a, b)
        pieces = []
        if a >= 1.0 and b >= 1.0:
            pieces.append(
                (0.0, 1.0, lambda u: f(eps + u) * (u ** (a - 1.0) * (1.0 - u) ** (b - 1.0) / norm))
            )
        elif a < 1.0 and b >= 1.0:
            pieces.append(
                (0.0, 1.0, lambda t: f(eps + t ** (1.0 / a)) * ((1.0 - t ** (1.0 / a)) ** (b - 1.0) / (a * norm)))
            )
        elif a >= 1.0 and b < 1.0:
            pieces.append(
                (0.0, 1.0, lambda t: f(eps + 1.0 - t ** (1.0 / b)) * ((1.0 - t ** (1.0 / b)) ** (a - 1.0) / (b * norm)))
            )
        else:
            # singular at both endpoints: split at 1/2, substitute on each half
            pieces.append(
                (0.0, 0.5**a, lambda t: f(eps + t ** (1.0 / a)) * ((1.0 - t ** (1.0 / a)) ** (b - 1.0) / (a * norm)))
            )
            pieces.append(
                (0.0, 0.5**b, lambda t: f(eps + 1.0 - t ** (1.0 / b)) * ((1.0 - t ** (1.0 / b)) ** (a - 1.0) / (b * norm)))
            )
        total = None
        for lo, hi, g in pieces:
            val, _ = quad_vec(g, lo, hi, **_QUAD_KW)
            total = val if total is None else total + val
        return total


@dataclass(frozen=True)
class ConstantSpectrum:
    """Degenerate spectrum sigma = value almost surely."""

    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValidationError("constant spectrum value must be positive")

    @property
    def support(self) -> tuple[float, float]:
        return self.value, self.value

    def expect(self, f) -> np.ndarray:
        return np.asarray(f(np.asarray(self.value)))


BETA_EXPECT_KINDS = (
    "inv_sigma",
    "inv_lin",
    "inv_sq",
    "sigma_over_sq",
    "sigma2_over_sq",
    "kappa_kernel",
)


def _check_linear_denominator(spectrum, lam: float, tau: float):
    lo, hi = spectrum.support
    if min(lam + tau * lo, lam + tau * hi) <= 0:
        raise NumericalError(
            f"pole inside spectral support: lambda + tau*sigma vanishes on [{lo}, {hi}]"
        )


def beta_expect(spectrum, kind: str, lam: float = 0.0, tau: float = 0.0, e: float = 0.0) -> float:
    """Spectral expectation of one of the resolvent kernels.

    Kinds: ``inv_sigma`` E[1/sigma]; ``inv_lin`` E[1/(lam+tau*sigma)];
    ``inv_sq`` E[1/(lam+tau*sigma)^2]; ``sigma_over_sq`` E[sigma/(lam+tau*sigma)^2];
    ``sigma2_over_sq`` E[sigma^2/(lam+tau*sigma)^2];
    ``kappa_kernel`` E[sigma/(lam - e*sigma)] (requires lam - e*sigma > 0 on the support).
    """
    if kind == "inv_sigma":
        return float(spectrum.expect(lambda s: 1.0 / s))
    if kind == "kappa_kernel":
        lo, hi = spectrum.support
        if min(lam - e * lo, lam - e * hi) <= 0:
            raise NumericalError("kappa kernel pole: lambda - e*sigma vanishes on the support")
        return float(spectrum.expect(lambda s: s / (lam - e * s)))
    if kind not in BETA_EXPECT_KINDS:
        raise ValidationError(f"unknown expectation kind {kind!r}")
    _check_linear_denominator(spectrum, lam, tau)
    if kind == "inv_lin":
        return float(spectrum.expect(lambda s: 1.0 / (lam + tau * s)))
    if kind == "inv_sq":
        return float(spectrum.expect(lambda s: (lam + tau * s) ** -2.0))
    if kind == "sigma_over_sq":
        return float(spectrum.expect(lambda s: s / (lam + tau * s) ** 2.0))
    return float(spectrum.expect(lambda s: s**2 / (lam + tau * s) ** 2.0))


def resolvent_moments(spectrum, lam: float, tau: float) -> np.ndarray:
    """The four resolvent expectations used by the fixed-point system, in one
    quadrature pass: [inv_lin, sigma/(.)^1, sigma/(.)^2, sigma^2/(.)^2]."""
    _check_linear_denominator(spectrum, lam, tau)

    def f(s):
        s = np.asarray(s)
        d = 1.0 / (lam + tau * s)
        return np.stack(np.broadcast_arrays(d, s * d, s * d * d, s * s * d * d), axis=0)

    return np.asarray(spectrum.expect(f), dtype=np.float64)
