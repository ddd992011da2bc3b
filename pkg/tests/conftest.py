"""Shared helpers for building small randomized model instances."""

import numpy as np
import pytest

from fvsbl import (
    ArrayGeometry,
    DispersionParams,
    PosteriorState,
    SignalGrid,
    WeightPrior,
    apply_calibration,
    build_dictionary,
    update_amplitudes,
)


def small_grid(N=8, bandwidth=1e9, f_c=60e9):
    return SignalGrid(N=N, delta=bandwidth / N, f_c=f_c)


def random_thetas(rng, K, grid, min_phi_sep=0.3, min_tau_sep_cells=2.0):
    """Draw K dispersion parameters with guaranteed mutual separation."""
    tau_cell = 1.0 / grid.bandwidth
    while True:
        phis = rng.uniform(0.2, np.pi - 0.2, size=K)
        taus = rng.uniform(0.0, 0.7 / grid.delta, size=K)
        ok = True
        for i in range(K):
            for j in range(i + 1, K):
                if (
                    abs(phis[i] - phis[j]) < min_phi_sep
                    and abs(taus[i] - taus[j]) < min_tau_sep_cells * tau_cell
                ):
                    ok = False
        if ok:
            return [DispersionParams(phi=p, tau=t) for p, t in zip(phis, taus)]


def small_instance(rng, P=2, N=8, K=2, lambda_true=1e4, var_w=0.0, sigma_w=0.05):
    """Random small instance with the true components installed in the state.

    Returns (state, y, truth) where truth is a dict with the generating
    weights, amplitudes and thetas. The state's amplitude posterior is
    consistent with its gamma and lambda values.
    """
    grid = small_grid(N=N)
    geom = ArrayGeometry.half_wavelength_ula(P, grid.f_c, grid.c)
    thetas = random_thetas(rng, K, grid)
    alpha_true = (
        rng.uniform(0.5, 2.0, size=K)
        * np.exp(2j * np.pi * rng.uniform(size=K))
    )
    w_true = 1.0 + sigma_w * (
        rng.standard_normal(P) + 1j * rng.standard_normal(P)
    ) / np.sqrt(2.0)
    dictionary = build_dictionary(thetas, geom, grid)
    y = apply_calibration(w_true, dictionary.columns @ alpha_true)
    noise = rng.standard_normal(P * N) + 1j * rng.standard_normal(P * N)
    y = y + noise / np.sqrt(2.0 * lambda_true)

    state = PosteriorState.empty(geom, grid, y, WeightPrior.noninformative(P))
    state.w_hat = w_true.copy()
    state.var_w_hat = np.full(P, var_w)
    state.lambda_hat = lambda_true
    state.thetas = list(thetas)
    state.gamma_hat = rng.uniform(0.01, 0.1, size=K)
    state.rebuild_dictionary()
    state.alpha_hat, state.Sigma_alpha = update_amplitudes(state, y)
    truth = {"w": w_true, "alpha": alpha_true, "thetas": thetas}
    return state, y, truth


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
