"""End-to-end acceptance gate.

Each test prints one pass/fail line with the measured quantities before
asserting, so the full scorecard is visible in the captured output. The
expensive Monte Carlo sweeps are session-scoped fixtures shared by the
tests that consume them.
"""

import math
import os
import time
from dataclasses import replace

import numpy as np
import pytest
import scipy.optimize

from fvsbl import (
    ArrayGeometry,
    EstimatorConfig,
    ExperimentConfig,
    SignalGrid,
    WeightPrior,
    default_scenario,
    detection_statistics,
    gamma_consistency_update,
    gamma_fast_update,
    ospa,
    run_fvsbl,
    run_sweep,
    synthesize_measurement,
    update_amplitudes,
    update_weights,
)
from fvsbl.vsbl_core import Hyperparams

from conftest import small_instance
from test_metrics import ospa_brute_force


def _report(name, passed, detail):
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    assert passed, f"{name}: {detail}"


@pytest.fixture(scope="session")
def default_sweep():
    """Full default sweep (8 sigmas x 100 trials x 2 modes), timed."""
    config = ExperimentConfig.default()
    t0 = time.perf_counter()
    records, rows = run_sweep(config)
    elapsed = time.perf_counter() - t0
    return records, rows, elapsed


@pytest.fixture(scope="session")
def trend_sweep():
    """Two-point sweep at sigma = 1e-3 and 1e-1, 100 trials each."""
    config = ExperimentConfig(sigma_grid=(1e-3, 1e-1), trials_per_sigma=100)
    _, rows = run_sweep(config)
    return {row["sigma"]: row for row in rows}


class TestGammaFixedPointEquivalence:
    def test_fast_update_matches_slow_fixed_point(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(2026)
        worst = 0.0
        checked = 0
        while checked < 50:
            K = int(rng.integers(1, 3))
            # the closed form and the fixed point coincide when the weight
            # posterior is a point mass (zero variance)
            state, y, _ = small_instance(rng, P=2, N=8, K=K, var_w=0.0)
            k = K - 1
            stat = detection_statistics(state.thetas[k], state, y, exclude=k)
            if stat.ratio <= 1.0:
                continue
            gamma_fast = gamma_fast_update(stat, chi=1.0)
            hyper = Hyperparams()
            gamma = state.gamma_hat[k]
            for _ in range(5000):
                state.gamma_hat[k] = gamma
                alpha, Sigma = update_amplitudes(state, y)
                new = gamma_consistency_update(alpha[k], Sigma[k, k].real, hyper)
                if abs(new - gamma) <= 1e-12 * gamma:
                    gamma = new
                    break
                gamma = new
            worst = max(worst, abs(gamma - gamma_fast) / gamma_fast)
            checked += 1
        elapsed = time.perf_counter() - t0
        _report(
            "gamma fast/slow fixed-point equivalence",
            worst < 1e-6 and elapsed < 10.0,
            f"50 instances, worst relative gap {worst:.2e}, {elapsed:.1f} s",
        )


class TestWeightUpdateMatchesNumericMaximization:
    def test_posterior_mean_maximizes_expected_log_joint(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(20):
            state, y, _ = small_instance(rng, P=2, N=8, K=2, var_w=0.01)
            prior = WeightPrior(
                1.0 + 0.2 * (rng.standard_normal(2) + 1j * rng.standard_normal(2)),
                rng.uniform(0.5, 5.0, size=2),
            )
            w_hat, _ = update_weights(state, prior, y)
            N = state.grid.N
            lam = state.lambda_hat
            alpha, Sigma = state.alpha_hat, state.Sigma_alpha
            for p in range(2):
                Tp = state.dictionary.blocks[p]
                G = Tp.conj().T @ Tp
                quad = (alpha.conj() @ G @ alpha).real + np.trace(G @ Sigma).real
                data = alpha.conj() @ (Tp.conj().T @ y[p * N : (p + 1) * N])

                def neg_expected_log_joint(z):
                    w = z[0] + 1j * z[1]
                    fit = 2.0 * (w.conjugate() * data).real - abs(w) ** 2 * quad
                    pen = abs(w - prior.mu_w[p]) ** 2 / prior.var_w[p]
                    return -(lam * fit - pen)

                res = scipy.optimize.minimize(
                    neg_expected_log_joint,
                    [w_hat[p].real + 0.1, w_hat[p].imag - 0.1],
                    method="BFGS",
                    options={"gtol": 1e-12},
                )
                w_star = res.x[0] + 1j * res.x[1]
                worst = max(worst, abs(w_star - w_hat[p]))
        elapsed = time.perf_counter() - t0
        _report(
            "weight update matches numeric maximization",
            worst < 1e-5 and elapsed < 30.0,
            f"20 instances, worst absolute gap {worst:.2e}, {elapsed:.1f} s",
        )


class TestOspaCorrectness:
    def test_hungarian_equals_brute_force_and_axioms(self):
        rng = np.random.default_rng(99)
        worst = 0.0
        corpus = []
        for _ in range(1000):
            m_hat, m = rng.integers(0, 6, size=2)
            est = list(rng.uniform(-10, 10, size=m_hat))
            tru = list(rng.uniform(-10, 10, size=m))
            cutoff = float(rng.uniform(0.1, 5.0))
            p = float(rng.choice([1.0, 2.0]))
            gap = abs(ospa(est, tru, cutoff, p) - ospa_brute_force(est, tru, cutoff, p))
            worst = max(worst, gap)
            corpus.append((est, tru, cutoff, p))
        axioms_ok = True
        for i in range(0, 999, 3):
            a, b, cutoff, p = corpus[i]
            c = corpus[i + 1][0]
            dab = ospa(a, b, cutoff, p)
            axioms_ok &= 0.0 <= dab <= cutoff + 1e-12
            axioms_ok &= abs(dab - ospa(b, a, cutoff, p)) < 1e-12
            axioms_ok &= ospa(a, a, cutoff, p) < 1e-12
            axioms_ok &= dab <= ospa(a, c, cutoff, p) + ospa(c, b, cutoff, p) + 1e-9
        _report(
            "OSPA Hungarian equals brute force",
            worst <= 1e-12 and axioms_ok,
            f"1000 pairs, worst gap {worst:.2e}, metric axioms "
            f"{'hold' if axioms_ok else 'violated'}",
        )


class TestCleanArrayBaseline:
    def test_zero_deviation_accuracy(self):
        t0 = time.perf_counter()
        config = ExperimentConfig(
            sigma_grid=(0.0,), trials_per_sigma=100, modes=("cal",)
        )
        records, rows = run_sweep(config)
        elapsed = time.perf_counter() - t0
        tau = rows[0]["ospa_tau_d_cal"]
        phi = rows[0]["ospa_phi_cal"]
        ok = tau <= 2e-3 and phi <= 0.5 and elapsed < 300.0
        _report(
            "clean-array baseline accuracy",
            ok,
            f"100 trials, mean OSPA tau_d {tau:.2e} m (limit 2e-3), "
            f"mean OSPA phi {phi:.3f} deg (limit 0.5), {elapsed:.0f} s",
        )


class TestCalibrationBenefitTrend:
    def test_high_deviation_separation(self, trend_sweep):
        row = trend_sweep[0.1]
        ratio = row["ospa_tau_d_nocal"] / row["ospa_tau_d_cal"]
        phi_ok = row["ospa_phi_nocal"] > row["ospa_phi_cal"]
        _report(
            "calibration benefit at sigma 1e-1",
            ratio >= 3.0 and phi_ok,
            f"OSPA tau_d nocal/cal ratio {ratio:.1f} (needs >= 3), "
            f"OSPA phi cal {row['ospa_phi_cal']:.2f} vs nocal "
            f"{row['ospa_phi_nocal']:.2f} deg",
        )

    def test_low_deviation_parity(self, trend_sweep):
        row = trend_sweep[1e-3]
        rel_tau = abs(
            row["ospa_tau_d_cal"] - row["ospa_tau_d_nocal"]
        ) / row["ospa_tau_d_nocal"]
        rel_phi = abs(
            row["ospa_phi_cal"] - row["ospa_phi_nocal"]
        ) / row["ospa_phi_nocal"]
        _report(
            "mode parity at sigma 1e-3",
            rel_tau <= 0.20 and rel_phi <= 0.20,
            f"relative OSPA gaps tau_d {rel_tau:.3f}, phi {rel_phi:.3f} "
            "(limit 0.20)",
        )


class TestWeightRmseTrend:
    def test_calibration_improves_rmse_at_high_deviation(self, default_sweep):
        _, rows, _ = default_sweep
        ok = True
        details = []
        for row in rows:
            sigma = row["sigma"]
            if sigma >= 3e-2:
                good = (
                    row["gain_rmse_cal"] < row["gain_rmse_nocal"]
                    and row["phase_rmse_cal"] < row["phase_rmse_nocal"]
                )
            elif sigma <= 1e-2:
                good = (
                    row["gain_rmse_cal"] >= row["gain_rmse_nocal"]
                    and row["phase_rmse_cal"] >= row["phase_rmse_nocal"]
                )
            else:
                continue
            ok &= good
            details.append(f"sigma={sigma:.3g}:{'ok' if good else 'BAD'}")
        _report(
            "weight RMSE crossover trend",
            ok,
            "cal < nocal above 3e-2, cal >= nocal below 1e-2; "
            + " ".join(details),
        )


class TestFalseAlarmControl:
    def test_pure_noise_rarely_detects(self):
        grid = SignalGrid.default()
        geom = ArrayGeometry.half_wavelength_ula(4, grid.f_c, grid.c)
        config = EstimatorConfig.default(geom, grid)
        empty = 0
        for trial in range(100):
            rng = np.random.default_rng([555, trial])
            y = (
                rng.standard_normal(4 * 64) + 1j * rng.standard_normal(4 * 64)
            ) / math.sqrt(2.0)
            result = run_fvsbl(y, geom, grid, config)
            empty += result.k_hat == 0
        _report(
            "pure-noise false-alarm control",
            empty >= 95,
            f"empty model in {empty}/100 trials (needs >= 95)",
        )


class TestNoCalibrationEmulation:
    def test_disabled_flag_equals_pinned_prior(self):
        grid = SignalGrid.default()
        geom = ArrayGeometry.half_wavelength_ula(4, grid.f_c, grid.c)
        config = EstimatorConfig.default(geom, grid)
        worst = 0.0
        for seed in range(20):
            truth, cal, sim = default_scenario(0.05, seed=seed)
            rng = np.random.default_rng([777, seed])
            y = synthesize_measurement(truth, cal, 1.0, geom, grid, rng)
            off = run_fvsbl(
                y, geom, grid, replace(config, calibration_enabled=False)
            )
            pinned = run_fvsbl(
                y, geom, grid, replace(config, weight_prior=WeightPrior.pinned(4))
            )
            if off.k_hat != pinned.k_hat:
                worst = math.inf
                continue
            worst = max(worst, np.max(np.abs(off.w_hat - pinned.w_hat)))
            worst = max(worst, np.max(np.abs(off.alpha_hat - pinned.alpha_hat)))
            for a, b in zip(off.thetas, pinned.thetas):
                worst = max(worst, abs(a.phi - b.phi))
                worst = max(worst, abs(a.tau - b.tau) * grid.bandwidth)
            worst = max(
                worst, abs(off.lambda_hat - pinned.lambda_hat) / pinned.lambda_hat
            )
        _report(
            "no-calibration emulation equivalence",
            worst < 1e-6,
            f"20 instances, worst point-estimate gap {worst:.2e} (limit 1e-6)",
        )


class TestSweepRuntimeAndConvergence:
    def test_default_sweep_budget(self, default_sweep):
        records, _, elapsed = default_sweep
        # the runtime budget references an 8-core desktop; scale the wall
        # clock allowance when fewer cores are available
        cores = os.cpu_count() or 1
        budget = 900.0 * max(1.0, 8.0 / cores)
        n = len(records)
        converged = sum(r.converged for r in records)
        failed = sum(r.failed for r in records)
        frac = converged / n
        ok = elapsed < budget and frac >= 0.99 and failed == 0
        _report(
            "sweep runtime and convergence",
            ok,
            f"{n} runs in {elapsed:.0f} s on {cores} core(s) "
            f"(budget {budget:.0f} s), converged {converged}/{n} "
            f"({frac:.1%}, needs >= 99%), failed {failed}",
        )
