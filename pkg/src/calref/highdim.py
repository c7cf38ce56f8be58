"""High-dimensional asymptotics of ridge-regularized logistic regression.

In the proportional regime (p/n -> r) on the symmetric two-class Gaussian
mixture, the learned weight vector behaves like a Gaussian
N(eta (lam I + tau Sigma)^-1 mu, (gamma/n) (lam I + tau Sigma)^-1 Sigma
(lam I + tau Sigma)^-1), where (eta, tau, gamma) solve a three-scalar
fixed-point system.  The system couples the spectrum only through resolvent
moments, and the sample margins only through the proximal map of the logistic
loss: with kappa = r E[sigma/(lam+tau sigma)], the in-sample margin is
u = prox_{kappa rho}(m + q z) for z ~ N(0,1), where m = eta c^2
E[1/(lam+tau sigma)] is the mean of the out-of-sample margin and q^2 =
eta^2 c^2 E[sigma/(lam+tau sigma)^2] + gamma r E[sigma^2/(lam+tau sigma)^2]
its variance.  Writing rho(t) = log(1+e^-t), the closing moment conditions are

    eta   = E_z[ sigmoid(-u) ]                     (mean effective score)
    gamma = E_z[ sigmoid(-u)^2 ]                   (score second moment)
    tau   = E_z[ rho''(u) / (1 + kappa rho''(u)) ] (Onsager coefficient)

which is verified end to end against the finite-sample simulator.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import root
from scipy.special import expit

from . import kernels
from .errors import ConvergenceError, NumericalError, ValidationError
from .gaussian import (
    GH_NODES,
    GaussianModelPoint,
    _gh_rule,
    calibration_error,
    error_rate,
    invert_estar,
    refinement_error,
)
from .scores import LossKind
from .spectra import ConstantSpectrum, SpectralDist, beta_expect, resolvent_moments
from .threads import worker_count

SOLVER_TOL = 1e-10
MAX_ITER = 10_000
DAMPING = 0.5


@dataclass(frozen=True)
class TheoryProblem:
    """(r, e*, spectrum, lambda) parametrization of the high-dimensional model."""

    r: float
    estar: float
    spectrum: SpectralDist | ConstantSpectrum
    lam: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValidationError("dims-to-samples ratio r must be positive")
        if not 0.0 < self.estar < 0.5:
            raise ValidationError("optimal error rate must lie in (0, 0.5)")
        if self.lam < 0:
            raise ValidationError("regularization strength must be nonnegative")

    @property
    def c(self) -> float:
        return invert_estar(self.estar, self.spectrum)


@dataclass(frozen=True)
class SolverSolution:
    eta: float
    tau: float
    gamma: float
    residual: float
    kappa: float
    margin_mean: float
    margin_std: float


def kappa(problem: TheoryProblem, e: float, lam: float) -> float:
    """r * E[sigma / (lam - e sigma)]."""
    return problem.r * beta_expect(problem.spectrum, "kappa_kernel", lam=lam, e=e)


def _margin_moments(m: float, q: float, kap: float):
    """Gauss-Hermite moments of the effective score at the proximal margins."""
    z, w = _gh_rule(GH_NODES)
    u = kernels.prox_logistic(m + q * z, kap)
    score = expit(-u)
    rho2 = score * (1.0 - score)
    eta = float(w @ score)
    gamma = float(w @ (score * score))
    tau = float(w @ (rho2 / (1.0 + kap * rho2)))
    return eta, tau, gamma


def _system_step(problem: TheoryProblem, c: float, x: np.ndarray):
    """One application of the fixed-point map; returns (new x, kappa, m, q)."""
    eta, tau, gamma = x
    mom = resolvent_moments(problem.spectrum, problem.lam, tau)
    e_lin, e_klin, e_ssq, e_s2sq = mom
    kap = problem.r * e_klin
    m = eta * c * c * e_lin
    q2 = eta * eta * c * c * e_ssq + gamma * problem.r * e_s2sq
    q = float(np.sqrt(max(q2, 0.0)))
    eta_n, tau_n, gamma_n = _margin_moments(m, q, kap)
    return np.array([eta_n, tau_n, gamma_n]), kap, m, q


def _residual(problem: TheoryProblem, c: float, x: np.ndarray) -> float:
    new, _, _, _ = _system_step(problem, c, x)
    return float(np.max(np.abs(new - x)))


def solve_system(
    problem: TheoryProblem,
    init: Sequence[float] = (1.0, 1.0, 1.0),
    tol: float = SOLVER_TOL,
    damping: float = DAMPING,
    max_iter: int = MAX_ITER,
) -> SolverSolution:
    """Damped fixed-point iteration on (eta, tau, gamma), with a root-finding
    fallback; raises ConvergenceError (with the last residual) on failure."""
    c = problem.c

    def refine(x0):
        sol = root(lambda v: _system_step(problem, c, v)[0] - v, x0, method="hybr", tol=1e-13)
        if sol.success or np.max(np.abs(sol.fun)) < tol:
            return sol.x
        return None

    x = np.asarray(init, dtype=np.float64)
    resid = np.inf
    done = 0
    for burst in (100, 400, max_iter):
        while done < burst:
            new, kap, m, q = _system_step(problem, c, x)
            resid = float(np.max(np.abs(new - x)))
            x = (1.0 - damping) * x + damping * new
            # tau must stay above the resolvent pole; the solution has tau > 0
            if x[1] < 0:
                x[1] = 0.0
            done += 1
            if resid < tol:
                break
        if resid < tol:
            break
        refined = refine(x)
        if refined is not None:
            r_ref = _residual(problem, c, refined)
            if r_ref < resid:
                x, resid = refined, r_ref
            if resid < tol:
                break
    if resid >= tol:
        raise ConvergenceError(
            f"fixed-point solver stalled at residual {resid:.3e} (lam={problem.lam})",
            residual=resid,
        )
    new, kap, m, q = _system_step(problem, c, x)
    return SolverSolution(
        eta=float(x[0]),
        tau=float(x[1]),
        gamma=float(x[2]),
        residual=resid,
        kappa=kap,
        margin_mean=m,
        margin_std=q,
    )


def alignment_and_norm(problem: TheoryProblem, sol: SolverSolution) -> GaussianModelPoint:
    """Limits of (<w, w*>_Sigma, ||w||_Sigma^2), returned as (a, s)."""
    c = problem.c
    lam, tau = problem.lam, sol.tau
    inner = 2.0 * sol.eta * c * c * beta_expect(problem.spectrum, "inv_lin", lam=lam, tau=tau)
    norm2 = sol.gamma * problem.r * beta_expect(
        problem.spectrum, "sigma2_over_sq", lam=lam, tau=tau
    ) + sol.eta**2 * c * c * beta_expect(problem.spectrum, "sigma_over_sq", lam=lam, tau=tau)
    if norm2 < 0:
        raise NumericalError(f"negative squared norm {norm2}")
    if norm2 == 0.0:
        return GaussianModelPoint(0.0, 0.0)
    s = float(np.sqrt(norm2))
    return GaussianModelPoint(inner / s, s)


@dataclass(frozen=True)
class LambdaSweep:
    """Theoretical learning curve over a regularization grid (logloss)."""

    lambdas: np.ndarray
    risk: np.ndarray
    calibration: np.ndarray
    refinement: np.ndarray
    error_rate: np.ndarray
    alignment: np.ndarray
    norm: np.ndarray
    ok: np.ndarray
    failures: tuple = field(default_factory=tuple)

    def argmin_lambda(self, column: str) -> tuple[float, int, bool]:
        """(lambda, index, boundary flag) of the column minimum over solved points."""
        vals = getattr(self, column)
        masked = np.where(self.ok, vals, np.inf)
        idx = int(np.argmin(masked))
        if not np.isfinite(masked[idx]):
            raise NumericalError(f"no solved grid point for column {column}")
        boundary = idx == 0 or idx == len(self.lambdas) - 1
        return float(self.lambdas[idx]), idx, boundary

    def refine_then_calibrate_gain(self) -> float:
        """1 - min_lam refinement / min_lam risk: the relative loss reduction of
        stopping at the refinement minimizer and zeroing calibration post hoc."""
        _, i_ref, _ = self.argmin_lambda("refinement")
        _, i_risk, _ = self.argmin_lambda("risk")
        return float(1.0 - self.refinement[i_ref] / self.risk[i_risk])


def lambda_sweep(
    spectrum: SpectralDist | ConstantSpectrum,
    r: float,
    estar: float,
    lambdas: Sequence[float],
    loss: LossKind = LossKind.LOGLOSS,
) -> LambdaSweep:
    """Solve the system on a lambda grid (descending, warm-started) and map each
    solution to (calibration, refinement, risk, error rate)."""
    lams = np.asarray(lambdas, dtype=np.float64)
    if lams.ndim != 1 or lams.size == 0 or np.any(lams <= 0) or np.any(np.diff(lams) <= 0):
        raise ValidationError("lambda grid must be strictly increasing and positive")
    n = lams.size
    cal = np.full(n, np.nan)
    ref = np.full(n, np.nan)
    err = np.full(n, np.nan)
    align = np.full(n, np.nan)
    norm = np.full(n, np.nan)
    ok = np.zeros(n, dtype=bool)
    failures = []
    guess = (1.0, 1.0, 1.0)
    for i in range(n - 1, -1, -1):
        problem = TheoryProblem(r=r, estar=estar, spectrum=spectrum, lam=float(lams[i]))
        try:
            sol = solve_system(problem, init=guess)
            guess = (sol.eta, sol.tau, sol.gamma)
            point = alignment_and_norm(problem, sol)
        except (ConvergenceError, NumericalError) as exc:
            failures.append((float(lams[i]), str(exc)))
            guess = (1.0, 1.0, 1.0)
            continue
        cal[i] = calibration_error(point, loss)
        ref[i] = refinement_error(point, loss)
        err[i] = error_rate(point)
        align[i] = point.alignment
        norm[i] = point.norm
        ok[i] = True
    return LambdaSweep(
        lambdas=lams,
        risk=cal + ref,
        calibration=cal,
        refinement=ref,
        error_rate=err,
        alignment=align,
        norm=norm,
        ok=ok,
        failures=tuple(failures),
    )


@dataclass(frozen=True)
class HeatmapCell:
    r: float
    estar: float
    lambda_cal: float
    lambda_ref: float
    lambda_risk: float
    log10_gap: float
    gain_pct: float
    cal_boundary: bool
    ref_boundary: bool
    n_failed: int


def _heatmap_cell(args) -> HeatmapCell | None:
    spectrum, r, estar, lambdas = args
    try:
        sweep = lambda_sweep(spectrum, r, estar, lambdas)
        lam_cal, _, cal_b = sweep.argmin_lambda("calibration")
        lam_ref, _, ref_b = sweep.argmin_lambda("refinement")
        lam_risk, _, _ = sweep.argmin_lambda("risk")
        gain = 100.0 * sweep.refine_then_calibrate_gain()
    except (ConvergenceError, NumericalError):
        return None
    return HeatmapCell(
        r=r,
        estar=estar,
        lambda_cal=lam_cal,
        lambda_ref=lam_ref,
        lambda_risk=lam_risk,
        log10_gap=float(np.log10(lam_cal / lam_ref)),
        gain_pct=gain,
        cal_boundary=cal_b,
        ref_boundary=ref_b,
        n_failed=len(sweep.failures),
    )


def minimizer_gap_and_gain(
    spectrum: SpectralDist | ConstantSpectrum,
    r_grid: Sequence[float],
    estar_grid: Sequence[float],
    lambdas: Sequence[float],
    workers: int | None = None,
) -> list[HeatmapCell | None]:
    """Per-(r, e*) cell: argmin lambdas of calibration/refinement/risk, the
    signed log10 gap, and the refine-then-calibrate gain (%).  Cells where the
    solver failed outright are None; ordering follows the grid row-major."""
    tasks = [
        (spectrum, float(r), float(estar), tuple(float(x) for x in lambdas))
        for r in r_grid
        for estar in estar_grid
    ]
    n_workers = workers if workers is not None else worker_count()
    if n_workers <= 1 or len(tasks) <= 1:
        return [_heatmap_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_heatmap_cell, tasks, chunksize=4))
