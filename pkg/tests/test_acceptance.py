"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with: pytest tests/test_acceptance.py -v -s
The heavy replication tests (Fig. 4 / Fig. 5 scale) run last; the whole
module is sized for a small multicore machine.
"""

import itertools

import numpy as np
import pytest
from numba import njit, prange
from scipy.special import expit, ndtr, xlogy

from calref.calibrate import apply_temperature, fit_temperature
from calref.decompose import (
    EstimatorKind,
    binned_ece,
    bruteforce_decomposition,
    decompose_risk,
)
from calref.gaussian import (
    GaussianModelPoint,
    calibration_error,
    error_rate,
    invert_estar,
    optimal_error_rate,
    optimal_rescale,
    refinement_error,
)
from calref.highdim import lambda_sweep, minimizer_gap_and_gain
from calref.kernels import pav
from calref.scores import (
    LossKind,
    PredictionSet,
    accuracy,
    clipped_log,
    empirical_risk,
    expected_loss_rows,
)
from calref.simulate import replicate_fig4
from calref.spectra import ConstantSpectrum, SpectralDist, beta_expect
from calref.stopping import EpochTracker
from calref.threads import worker_count

from conftest import discrete_prediction_set, random_prediction_set


def ok(name):
    print(f"[acceptance] {name}: PASS")


# ---------------------------------------------------------------------------
# Decomposition identity
# ---------------------------------------------------------------------------


def test_decomposition_identity():
    rng = np.random.default_rng(20240)
    for i in range(1000):
        k = int(rng.choice([2, 5, 10]))
        n = int(rng.integers(1, 201))
        data = random_prediction_set(rng, n, k)
        for loss in LossKind:
            estimators = [EstimatorKind.TS, EstimatorKind.BRUTEFORCE]
            if k == 2:
                estimators.append(EstimatorKind.ISOTONIC)
            for estimator in estimators:
                dec = decompose_risk(data, loss, estimator)
                assert abs(dec.risk - dec.calibration - dec.refinement) <= 1e-12
    ok("decomposition identity (1000 random sets, TS/bruteforce/isotonic)")


# ---------------------------------------------------------------------------
# Variational oracle (optimal relabeling = conditional means)
# ---------------------------------------------------------------------------


def test_variational_oracle():
    rng = np.random.default_rng(777)
    grid = np.linspace(0.0, 1.0, 101)
    grid_probs = np.column_stack([1.0 - grid, grid])
    for i in range(200):
        n = int(rng.integers(6, 61))
        groups = int(rng.integers(1, 7))
        data = discrete_prediction_set(rng, groups, n, 2)
        dec = bruteforce_decomposition(data, LossKind.LOGLOSS)
        uniq, inverse = np.unique(data.probs, axis=0, return_inverse=True)
        total_best = 0.0
        for g in range(uniq.shape[0]):
            labels = data.labels[inverse == g]
            onehot = np.eye(2)[labels]
            cond = onehot.mean(axis=0)
            cond_loss = expected_loss_rows(LossKind.LOGLOSS, cond[None, :], cond[None, :])[0]
            # exhaustive relabeling to the conditional mean is optimal; no
            # point of the 101-point simplex grid may beat it
            grid_losses = np.array(
                [
                    -np.log(np.clip(grid_probs[j, labels], 1e-15, 1.0)).mean()
                    for j in range(grid_probs.shape[0])
                ]
            )
            assert grid_losses.min() >= cond_loss - 1e-9
            total_best += cond_loss * labels.size
        assert abs(dec.refinement - total_best / n) <= 1e-9
    ok("variational oracle (200 discrete instances, grid cannot beat conditional means)")


# ---------------------------------------------------------------------------
# Coarsening / relabeling / fixed-point properties
# ---------------------------------------------------------------------------


def test_corollary_properties():
    rng = np.random.default_rng(888)
    for i in range(100):
        k = int(rng.choice([2, 3]))
        data = discrete_prediction_set(rng, int(rng.integers(2, 6)), int(rng.integers(10, 50)), k)
        ref = bruteforce_decomposition(data, LossKind.LOGLOSS).refinement

        uniq, inverse = np.unique(data.probs, axis=0, return_inverse=True)
        m = uniq.shape[0]
        if m >= 2:
            # (b) merging two distinct prediction values never decreases refinement
            a, b = rng.choice(m, size=2, replace=False)
            merged_rows = np.where(inverse == a, b, inverse)
            merged = PredictionSet(uniq[merged_rows], data.labels)
            ref_merged = bruteforce_decomposition(merged, LossKind.LOGLOSS).refinement
            assert ref_merged >= ref - 1e-12

        # (c) injective relabelings preserve refinement
        fresh = rng.dirichlet(np.ones(k), size=m)
        relabeled = PredictionSet(fresh[inverse], data.labels)
        ref_inj = bruteforce_decomposition(relabeled, LossKind.LOGLOSS).refinement
        assert abs(ref_inj - ref) <= 1e-12

        # (a) conditional means are a calibrated fixed point
        cond = np.zeros((m, k))
        np.add.at(cond, (inverse, data.labels), 1.0)
        cond /= np.bincount(inverse, minlength=m)[:, None]
        fixed = PredictionSet(cond[inverse], data.labels)
        assert bruteforce_decomposition(fixed, LossKind.LOGLOSS).calibration <= 1e-12
    ok("coarsening monotonicity / injective invariance / calibrated fixed point (100 instances)")


# ---------------------------------------------------------------------------
# Temperature-scaling bisection vs. 1e6-point grid oracle
# ---------------------------------------------------------------------------


@njit(parallel=True, cache=True)
def _grid_losses_logloss(du, labels, bgrid):
    out = np.empty(bgrid.shape[0])
    n, k = du.shape
    for j in prange(bgrid.shape[0]):
        beta = np.exp(bgrid[j])
        total = 0.0
        for i in range(n):
            s = 0.0
            for c in range(k):
                s += np.exp(beta * du[i, c])
            total += np.log(s) - beta * du[i, labels[i]]
        out[j] = total / n
    return out


def test_ts_bisection_vs_grid_oracle():
    rng = np.random.default_rng(999)
    bgrid = np.linspace(-16.0, 16.0, 10**6)
    for i in range(100):
        k = int(rng.choice([2, 3, 5]))
        n = int(rng.integers(5, 17))
        data = random_prediction_set(rng, n, k)
        logp = clipped_log(data.probs)
        du = logp - logp.max(axis=1, keepdims=True)
        oracle = float(_grid_losses_logloss(du, data.labels, bgrid).min())
        cal = fit_temperature(data, LossKind.LOGLOSS)
        scaled = PredictionSet(apply_temperature(cal, data.probs), data.labels)
        achieved = empirical_risk(LossKind.LOGLOSS, scaled)
        assert achieved <= oracle * (1 + 1e-4) + 1e-12
        assert accuracy(scaled) == accuracy(data)

    # convexity: dL/dbeta nondecreasing on a grid
    from calref.calibrate import _loss_and_grad

    data = random_prediction_set(rng, 50, 4)
    logp = clipped_log(data.probs)
    grads = [
        _loss_and_grad(logp, data.labels, b, LossKind.LOGLOSS)[1] / np.exp(b)
        for b in np.linspace(-16, 16, 100)
    ]
    assert np.all(np.diff(grads) >= -1e-9)
    ok("TS bisection matches 1e6-point grid oracle; convexity; accuracy preserved")


# ---------------------------------------------------------------------------
# PAV equals the exhaustive monotone-fit minimizer for n <= 8
# ---------------------------------------------------------------------------


def _brute_monotone_fit(y):
    n = y.size
    best_sse, best_fit = np.inf, None
    for cuts in range(2 ** (n - 1)):
        blocks = []
        start = 0
        for pos in range(n - 1):
            if cuts >> pos & 1:
                blocks.append((start, pos + 1))
                start = pos + 1
        blocks.append((start, n))
        means = [y[a:b].mean() for a, b in blocks]
        if any(m2 < m1 for m1, m2 in zip(means, means[1:])):
            continue
        fit = np.concatenate([np.full(b - a, m) for (a, b), m in zip(blocks, means)])
        sse = float(((fit - y) ** 2).sum())
        if sse < best_sse - 1e-15:
            best_sse, best_fit = sse, fit
    return best_fit, best_sse


def test_pav_exhaustive():
    for n in range(1, 9):
        for pattern in itertools.product([0.0, 1.0], repeat=n):
            y = np.array(pattern)
            fit = pav(y, np.ones(n))
            brute_fit, brute_sse = _brute_monotone_fit(y)
            sse = float(((fit - y) ** 2).sum())
            assert sse <= brute_sse + 1e-12
            assert fit == pytest.approx(brute_fit, abs=1e-12)
    ok("PAV equals exhaustive monotone minimizer for all n <= 8 label patterns")


# ---------------------------------------------------------------------------
# Gaussian model: quadrature vs. 1e7-sample Monte-Carlo
# ---------------------------------------------------------------------------


def _mc_cal_ref(a, s, z):
    # entropy of sigma(at) and KL(sigma(at) || sigma(st)) in softplus form
    t = z + a / 2.0
    q_pos = expit(a * t)
    q_neg = expit(-a * t)
    ent = -(xlogy(q_pos, q_pos) + xlogy(q_neg, q_neg))
    kl = q_pos * (np.logaddexp(0, -s * t) - np.logaddexp(0, -a * t)) + q_neg * (
        np.logaddexp(0, s * t) - np.logaddexp(0, a * t)
    )
    return kl, ent


def test_gaussian_model_vs_monte_carlo():
    rng = np.random.default_rng(3131)
    n_mc = 10**7
    assert refinement_error(GaussianModelPoint(0.0, 0.0)) == pytest.approx(np.log(2), abs=1e-10)
    for i in range(20):
        a = float(rng.uniform(0.1, 5.0))
        s = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
        z = rng.standard_normal(n_mc)
        kl, ent = _mc_cal_ref(a, s, z)
        point = GaussianModelPoint(a, s)
        cal, ref = calibration_error(point), refinement_error(point)
        assert abs(cal - kl.mean()) <= 3 * kl.std(ddof=1) / np.sqrt(n_mc)
        assert abs(ref - ent.mean()) <= 3 * ent.std(ddof=1) / np.sqrt(n_mc)
    ok("Gaussian-model quadrature within 3 SE of 1e7-sample MC (20 points); R(0)=ln 2")


# ---------------------------------------------------------------------------
# Optimal rescaling zeroes calibration, preserves refinement
# ---------------------------------------------------------------------------


def test_optimal_rescale_property():
    rng = np.random.default_rng(4242)
    for i in range(100):
        pt = GaussianModelPoint(float(rng.uniform(0.05, 5.0)), float(rng.uniform(0.01, 20.0)))
        fixed = optimal_rescale(pt)
        assert calibration_error(fixed) <= 1e-10
        assert abs(refinement_error(fixed) - refinement_error(pt)) <= 1e-12
    ok("optimal rescaling: calibration <= 1e-10, refinement unchanged (100 points)")


# ---------------------------------------------------------------------------
# Optimal error rate: degenerate spectrum exact; Beta expectation vs MC
# ---------------------------------------------------------------------------


def test_optimal_error_rate_and_beta_expectation():
    rng = np.random.default_rng(5353)
    for c in (0.3, 1.0, 1.2815515655446004):
        assert optimal_error_rate(c, ConstantSpectrum(1.0)) == float(ndtr(-c))
    for i in range(10):
        alpha = float(rng.uniform(0.4, 6.0))
        beta = float(rng.uniform(0.4, 6.0))
        sp = SpectralDist(alpha, beta, 1e-3)
        draws = 1.0 / (1e-3 + rng.beta(alpha, beta, size=10**7))
        se = draws.std(ddof=1) / np.sqrt(draws.size)
        assert abs(beta_expect(sp, "inv_sigma") - draws.mean()) <= 4 * se
    ok("degenerate spectrum e*=Phi(-c) exact; E[1/sigma] within 4 SE of 1e7 MC (10 shapes)")


# ---------------------------------------------------------------------------
# Asymptotic alignment/norm limits vs finite-p Monte-Carlo
# ---------------------------------------------------------------------------


def test_alignment_norm_limits_finite_p():
    rng = np.random.default_rng(6464)
    p = 10**5
    for i in range(20):
        eta = float(rng.uniform(0.05, 0.9))
        tau = float(rng.uniform(0.05, 2.0))
        gamma = float(rng.uniform(0.01, 0.9))
        lam = float(np.exp(rng.uniform(np.log(1e-2), np.log(10.0))))
        c = float(rng.uniform(0.3, 2.0))
        r = float(rng.uniform(0.2, 2.0))
        alpha = float(rng.uniform(0.5, 5.0))
        beta = float(rng.uniform(0.5, 5.0))
        sp = SpectralDist(alpha, beta, 1e-3)
        sigma = 1e-3 + rng.beta(alpha, beta, size=p)
        mu = rng.normal(0, c / np.sqrt(p), size=p)
        inner_terms = 2 * eta * mu**2 * p / (lam + tau * sigma)
        norm_terms = (eta**2 * mu**2 * p * sigma + gamma * r * sigma**2) / (lam + tau * sigma) ** 2
        inner_limit = 2 * eta * c**2 * beta_expect(sp, "inv_lin", lam=lam, tau=tau)
        norm_limit = eta**2 * c**2 * beta_expect(
            sp, "sigma_over_sq", lam=lam, tau=tau
        ) + gamma * r * beta_expect(sp, "sigma2_over_sq", lam=lam, tau=tau)
        assert abs(inner_terms.mean() - inner_limit) <= 4 * inner_terms.std(ddof=1) / np.sqrt(p)
        assert abs(norm_terms.mean() - norm_limit) <= 4 * norm_terms.std(ddof=1) / np.sqrt(p)
    ok("alignment/norm limits within 4 SE of finite-p (1e5) MC (20 tuples)")


# ---------------------------------------------------------------------------
# ECE sanity on calibrated data
# ---------------------------------------------------------------------------


def test_ece_vanishes_on_calibrated_data():
    rng = np.random.default_rng(7575)
    for n, bound in ((10**4, 0.02), (10**6, 0.005)):
        z = rng.normal(0.5, 1.5, size=n)
        p1 = expit(z)
        labels = (rng.random(n) < p1).astype(np.int64)
        data = PredictionSet(np.column_stack([1 - p1, p1]), labels)
        assert binned_ece(data) < bound
    ok("ECE -> 0 on calibrated data (1e4: <0.02, 1e6: <0.005)")


# ---------------------------------------------------------------------------
# Stopping end-to-end on a synthetic calibration-drift trajectory
# ---------------------------------------------------------------------------


def _sample_epoch(rng, a, s, n):
    y = rng.integers(0, 2, size=n) * 2 - 1
    v = y * (a * s / 2.0) + s * rng.standard_normal(n)
    p1 = expit(v)
    return PredictionSet(np.column_stack([1 - p1, p1]), ((y + 1) // 2).astype(np.int64))


def test_stopping_end_to_end():
    # expertise saturates (exponential ramp) while confidence grows linearly,
    # so calibration deteriorates late and the loss minimizer lands well
    # before the refinement plateau
    n, epochs, reps = 5000, 40, 100
    t = np.arange(epochs)
    a_path = 2.2 - 1.7 * np.exp(-t / 10.0)
    s_path = 0.5 + 0.22 * t
    wins = 0
    for rep in range(reps):
        rng = np.random.default_rng(10_000 + rep)
        tracker = EpochTracker(smoothing=True, retain_predictions=True)
        tests = {}
        for t in range(epochs):
            tracker.record_epoch(t, _sample_epoch(rng, a_path[t], s_path[t], n))
            tests[t] = _sample_epoch(rng, a_path[t], s_path[t], n)
        e_ref = tracker.best_epoch("ts-refinement")
        e_loss = tracker.best_epoch("logloss")
        later = e_ref > e_loss
        test_at = {}
        for epoch in (e_ref, e_loss):
            cal = fit_temperature(tracker._predictions[epoch], LossKind.LOGLOSS, smoothing=True)
            scaled = apply_temperature(cal, tests[epoch].probs)
            test_at[epoch] = empirical_risk(
                LossKind.LOGLOSS, PredictionSet(scaled, tests[epoch].labels)
            )
        if later and test_at[e_ref] <= test_at[e_loss]:
            wins += 1
    assert wins >= 95, f"refinement stopping won only {wins}/100 replications"
    ok(f"stopping end-to-end: refinement epoch later + better test loss in {wins}/100 reps")


# ---------------------------------------------------------------------------
# Fig. 4 scale reproduction: theory inside simulation CIs
# ---------------------------------------------------------------------------


def test_fig4_reproduction():
    spectrum = SpectralDist(1.0, 1.0, 1e-3)
    r, estar, n, seeds = 0.5, 0.1, 2000, 50
    lams = np.logspace(-3, 1, 25)
    c = invert_estar(estar, spectrum)
    rep = replicate_fig4(spectrum, r, c, lams, n=n, seeds=seeds, workers=worker_count())
    assert rep.n_seeds == seeds, f"dropped seeds: {rep.dropped_seeds}"
    sweep = lambda_sweep(spectrum, r, estar, lams)
    assert sweep.ok.all()
    in_cal = np.abs(sweep.calibration - rep.cal_mean) <= rep.cal_half
    in_ref = np.abs(sweep.refinement - rep.ref_mean) <= rep.ref_half
    coverage_cal = in_cal.mean()
    coverage_ref = in_ref.mean()
    assert coverage_cal >= 0.9, f"calibration coverage {coverage_cal:.2f}"
    assert coverage_ref >= 0.9, f"refinement coverage {coverage_ref:.2f}"
    lam_cal, _, _ = sweep.argmin_lambda("calibration")
    lam_ref, _, _ = sweep.argmin_lambda("refinement")
    lam_risk, _, _ = sweep.argmin_lambda("risk")
    assert min(lam_cal, lam_ref) < lam_risk < max(lam_cal, lam_ref)
    gain = sweep.refine_then_calibrate_gain()
    assert 0.01 <= gain <= 0.03, f"gain {gain:.4f}"
    ok(
        f"Fig.4 scale: coverage cal={coverage_cal:.0%} ref={coverage_ref:.0%}, "
        f"minimizer ordering holds, gain={100 * gain:.2f}%"
    )


# ---------------------------------------------------------------------------
# Fig. 5 scale: heatmap gains over (r, e*) for three spectra
# ---------------------------------------------------------------------------


def test_fig5_heatmap_gains():
    # Three representative eigenvalue spectra; the large-gain (10-25%) regime
    # lives where the two minimizers are separated by decades, which happens
    # on the near-isotropic (equally-informative) grid.
    lams = np.logspace(-3, 2, 40)
    r_grid = np.logspace(-1, 1, 8)
    estar_grid = np.linspace(0.03, 0.40, 8)
    spectra = {
        "equally-informative": SpectralDist(5.0, 1.0, 1e-3),
        "uniform": SpectralDist(1.0, 1.0, 1e-3),
        "hidden-good": SpectralDist(1.0, 5.0, 1e-3),
    }
    max_gain = {}
    for name, sp in spectra.items():
        cells = minimizer_gap_and_gain(sp, r_grid, estar_grid, lams, workers=worker_count())
        solved = [c for c in cells if c is not None]
        assert len(solved) == len(cells), f"{name}: {len(cells) - len(solved)} cells failed"
        gains = np.array([c.gain_pct for c in solved])
        assert np.all(gains >= -1e-9), f"{name}: negative gain {gains.min()}"
        max_gain[name] = float(gains.max())
    assert max_gain["equally-informative"] >= 10.0, f"max gains {max_gain}"
    ok(
        "Fig.5 scale: gain >= 0 on all 8x8 cells; max gains "
        + ", ".join(f"{k}={v:.1f}%" for k, v in max_gain.items())
    )
