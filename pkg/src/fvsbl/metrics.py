"""Evaluation metrics: OSPA over estimate sets and weight RMSE.

OSPA combines per-object localization error (saturated at a cutoff c) with
a cardinality penalty; the optimal assignment is computed exactly via the
Hungarian method. Weight RMSE is reported separately for gains and phases,
with phase differences wrapped into (-180, 180] degrees.

Note: a common complex factor can migrate between the estimated weights
and amplitudes without changing the fit. No ambiguity compensation is
applied; weight RMSE is computed on raw estimates and is inflated when the
estimator absorbs such a factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class MetricsConfig:
    """OSPA cutoffs (meters / degrees) and order."""

    cutoff_tau_d: float = 0.05
    cutoff_phi: float = 10.0
    ospa_order: float = 1.0

    def __post_init__(self):
        if not (self.cutoff_tau_d > 0 and self.cutoff_phi > 0):
            raise ValueError("cutoffs must be positive")
        if self.ospa_order < 1:
            raise ValueError("ospa order must be >= 1")


def ospa(estimates, truths, cutoff, p=1.0):
    """OSPA distance between two finite sets of scalars.

    Optimal-assignment localization cost with base distance |x - y|
    saturated at `cutoff`, plus the cardinality penalty; both sets empty
    yields 0.
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    if p < 1:
        raise ValueError("p must be >= 1")
    est = np.asarray(list(estimates), dtype=float)
    tru = np.asarray(list(truths), dtype=float)
    m_hat, m = est.size, tru.size
    if m_hat == 0 and m == 0:
        return 0.0
    n = max(m_hat, m)
    cost = 0.0
    if m_hat and m:
        d = np.minimum(np.abs(est[:, None] - tru[None, :]), cutoff) ** p
        rows, cols = linear_sum_assignment(d)
        cost = float(d[rows, cols].sum())
    cost += cutoff**p * (n - min(m_hat, m))
    return float((cost / n) ** (1.0 / p))


def wrap_degrees(angle_deg):
    """Wrap angle differences into (-180, 180] degrees."""
    wrapped = np.asarray(angle_deg, dtype=float) % 360.0
    wrapped = np.where(wrapped > 180.0, wrapped - 360.0, wrapped)
    return wrapped


def rmse_weights(w_hat, w_true, calibrated=True):
    """Gain and phase RMSE of the calibration weights.

    With calibrated=False the estimate is replaced by all-ones, reflecting
    the deviation present when no weight estimation is performed. Returns
    (gain_rmse, phase_rmse_degrees).
    """
    w_true = np.asarray(w_true, dtype=complex)
    if calibrated:
        w_hat = np.asarray(w_hat, dtype=complex)
        if w_hat.shape != w_true.shape:
            raise ValueError("w_hat and w_true must have equal length")
    else:
        w_hat = np.ones_like(w_true)
    gain_err = np.abs(w_hat) - np.abs(w_true)
    phase_err = wrap_degrees(np.degrees(np.angle(w_hat) - np.angle(w_true)))
    gain_rmse = float(np.sqrt(np.mean(gain_err**2)))
    phase_rmse = float(np.sqrt(np.mean(phase_err**2)))
    return gain_rmse, phase_rmse


def tau_to_distance(tau, c=299_792_458.0):
    """Delay-equivalent distance c * tau in meters."""
    return c * np.asarray(tau, dtype=float) if np.ndim(tau) else c * float(tau)
