"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

The fallback is selected by setting the environment variable
``CALREF_NO_NUMBA=1`` before import (or automatically when numba is not
installed).  ``benchmarks/kernel_bench.py`` times both paths side by side.

Kernels kept here are the ones that dominate profiles: the temperature-scaling
objective/derivative, pool-adjacent-violators, and the proximal map of the
logistic loss used by the high-dimensional fixed-point solver.
"""

from __future__ import annotations

import math
import os

import numpy as np

_NO_NUMBA = os.environ.get("CALREF_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _NO_NUMBA:
        raise ImportError("numba disabled via CALREF_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# Temperature-scaling objective.  Inputs are clipped log-probabilities u and
# integer labels; the objective is the mean loss of softmax(exp(b) * u).
# Returns (mean loss, d(mean loss)/db) at b = log(beta).
# ---------------------------------------------------------------------------

def _ts_value_grad_loops(logp, labels, b, loss_id):
    # Work with du = logp - rowmax(logp) so every intermediate stays O(1):
    # scaling first and subtracting logsumexp later cancels catastrophically
    # for large beta.
    n, k = logp.shape
    beta = math.exp(b)
    total = 0.0
    grad = 0.0
    g = np.empty(k)
    for i in range(n):
        umax = logp[i, 0]
        for c in range(1, k):
            if logp[i, c] > umax:
                umax = logp[i, c]
        s = 0.0
        for c in range(k):
            e = math.exp(beta * (logp[i, c] - umax))
            g[c] = e
            s += e
        dubar = 0.0
        for c in range(k):
            g[c] /= s
            dubar += g[c] * (logp[i, c] - umax)
        y = labels[i]
        if loss_id == 0:  # logloss
            total += math.log(s) - beta * (logp[i, y] - umax)
            grad += dubar - (logp[i, y] - umax)
        else:  # brier
            li = 0.0
            gi = 0.0
            for c in range(k):
                du = logp[i, c] - umax
                d = g[c] if c != y else g[c] - 1.0
                li += d * d
                gi += 2.0 * d * g[c] * (du - dubar)
            total += li
            grad += gi
    return total / n, beta * grad / n


def _ts_value_grad_numpy(logp, labels, b, loss_id):
    beta = math.exp(b)
    du = logp - logp.max(axis=1, keepdims=True)
    e = np.exp(beta * du)
    s = e.sum(axis=1, keepdims=True)
    g = e / s
    dubar = (g * du).sum(axis=1)
    n = logp.shape[0]
    rows = np.arange(n)
    if loss_id == 0:
        losses = np.log(s[:, 0]) - beta * du[rows, labels]
        grads = dubar - du[rows, labels]
    else:
        d = g.copy()
        d[rows, labels] -= 1.0
        losses = (d * d).sum(axis=1)
        grads = (2.0 * d * g * (du - dubar[:, None])).sum(axis=1)
    return float(losses.mean()), float(beta * grads.mean())


# ---------------------------------------------------------------------------
# Pool-adjacent-violators: weighted isotonic (nondecreasing) least squares.
# ---------------------------------------------------------------------------

def _pav_loops(y, w):
    n = y.shape[0]
    vals = np.empty(n)
    wts = np.empty(n)
    sizes = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        vals[m] = y[i]
        wts[m] = w[i]
        sizes[m] = 1
        m += 1
        while m > 1 and vals[m - 2] > vals[m - 1]:
            tot = wts[m - 2] + wts[m - 1]
            vals[m - 2] = (wts[m - 2] * vals[m - 2] + wts[m - 1] * vals[m - 1]) / tot
            wts[m - 2] = tot
            sizes[m - 2] += sizes[m - 1]
            m -= 1
    out = np.empty(n)
    j = 0
    for blk in range(m):
        for _ in range(sizes[blk]):
            out[j] = vals[blk]
            j += 1
    return out


def _pav_numpy(y, w):
    # Same block-merging algorithm on python lists; adequate as a fallback.
    vals: list[float] = []
    wts: list[float] = []
    sizes: list[int] = []
    for yi, wi in zip(y.tolist(), w.tolist()):
        vals.append(yi)
        wts.append(wi)
        sizes.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            tot = wts[-2] + wts[-1]
            vals[-2] = (wts[-2] * vals[-2] + wts[-1] * vals[-1]) / tot
            wts[-2] = tot
            sizes[-2] += sizes[-1]
            del vals[-1], wts[-1], sizes[-1]
    return np.repeat(np.asarray(vals), np.asarray(sizes, dtype=np.int64))


# ---------------------------------------------------------------------------
# Proximal map of the logistic loss rho(t) = log(1 + exp(-t)):
# prox(s; kappa) = argmin_u kappa * rho(u) + (u - s)^2 / 2, i.e. the root of
# u - kappa * sigmoid(-u) = s, which lies in [s, s + kappa].
# ---------------------------------------------------------------------------

def _sigmoid_neg(u):
    # sigma(-u), numerically stable for any u
    if u >= 0.0:
        e = math.exp(-u)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(u))


def _prox_logistic_scalar(s, kappa):
    # Plain Newton can ping-pong between the flat sigmoid flanks when kappa is
    # large, so shrink the bracket by bisection first, then polish.
    if kappa == 0.0:
        return s
    lo = s
    hi = s + kappa
    while hi - lo > 0.25:
        u = 0.5 * (lo + hi)
        if u - s - kappa * _sigmoid_neg(u) > 0.0:
            hi = u
        else:
            lo = u
    u = 0.5 * (lo + hi)
    for _ in range(60):
        sm = _sigmoid_neg(u)
        f = u - s - kappa * sm
        if f > 0.0:
            hi = u
        else:
            lo = u
        un = u - f / (1.0 + kappa * sm * (1.0 - sm))
        if not (lo < un < hi):
            un = 0.5 * (lo + hi)
        if abs(un - u) <= 1e-15 * (1.0 + abs(un)):
            return un
        u = un
    return u


def _prox_logistic_loops(s, kappa):
    n = s.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = _prox_logistic_scalar(s[i], kappa)
    return out


def _sigmoid_neg_np(u):
    e = np.exp(-np.abs(u))
    return np.where(u >= 0, e, 1.0) / (1.0 + e)


def _prox_logistic_numpy(s, kappa):
    if kappa == 0.0:
        return s.copy()
    lo = s.copy()
    hi = s + kappa
    n_bisect = max(0, int(np.ceil(np.log2(max(kappa / 0.25, 1.0)))))
    for _ in range(n_bisect):
        u = 0.5 * (lo + hi)
        pos = u - s - kappa * _sigmoid_neg_np(u) > 0.0
        hi = np.where(pos, u, hi)
        lo = np.where(pos, lo, u)
    u = 0.5 * (lo + hi)
    for _ in range(60):
        sm = _sigmoid_neg_np(u)
        f = u - s - kappa * sm
        hi = np.where(f > 0, u, hi)
        lo = np.where(f > 0, lo, u)
        un = u - f / (1.0 + kappa * sm * (1.0 - sm))
        bad = ~((lo < un) & (un < hi))
        un = np.where(bad, 0.5 * (lo + hi), un)
        if np.all(np.abs(un - u) <= 1e-15 * (1.0 + np.abs(un))):
            return un
        u = un
    return u


if HAVE_NUMBA:
    ts_value_grad = njit(cache=True)(_ts_value_grad_loops)
    pav = njit(cache=True)(_pav_loops)
    _sigmoid_neg = njit(cache=True)(_sigmoid_neg)
    _prox_logistic_scalar = njit(cache=True)(_prox_logistic_scalar)
    prox_logistic = njit(cache=True)(_prox_logistic_loops)
else:
    ts_value_grad = _ts_value_grad_numpy
    pav = _pav_numpy
    prox_logistic = _prox_logistic_numpy

# Both paths, exported for the parity tests and the kernel benchmark.
IMPLEMENTATIONS = {
    "ts_value_grad": {"numba": ts_value_grad, "numpy": _ts_value_grad_numpy},
    "pav": {"numba": pav, "numpy": _pav_numpy},
    "prox_logistic": {"numba": prox_logistic, "numpy": _prox_logistic_numpy},
}
