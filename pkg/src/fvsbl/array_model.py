"""Array and signal-model primitives.

Steering vectors, temporal response vectors, dictionary atoms for the
stacked multi-antenna frequency-domain measurement model, and the
block-diagonal per-element calibration operator.

Conventions: the array lies in the x-y plane with the direction vector
u(phi) = [cos(phi), sin(phi)]; for a linear array along the x-axis the
angle phi is measured from the array axis, so the unambiguous sector is
[0, pi). The baseband frequency grid is f = [-(N/2)*delta, ...,
(N/2 - 1)*delta] with N even; no fftshift-style reordering is applied
anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Receive-array element positions.

    Parameters
    ----------
    positions : ndarray, shape (P, 2)
        Element positions in meters.
    """

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ValueError("positions must have shape (P, 2) with P >= 1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def num_elements(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def half_wavelength_ula(cls, num_elements, f_c, c=SPEED_OF_LIGHT):
        """Uniform linear array along the x-axis with c/(2*f_c) spacing."""
        spacing = c / (2.0 * f_c)
        x = np.arange(num_elements) * spacing
        return cls(np.column_stack([x, np.zeros(num_elements)]))


@dataclass(frozen=True)
class SignalGrid:
    """Frequency sampling grid and transmit spectrum.

    Parameters
    ----------
    N : int
        Number of frequency samples; must be even and positive.
    delta : float
        Frequency spacing in Hz. The bandwidth is B = N * delta.
    f_c : float
        Carrier frequency in Hz.
    c : float
        Propagation speed in m/s.
    s_f : ndarray, shape (N,)
        Complex transmit-spectrum samples on the baseband grid.
    """

    N: int
    delta: float
    f_c: float
    c: float = SPEED_OF_LIGHT
    s_f: np.ndarray = None

    def __post_init__(self):
        if self.N <= 0 or self.N % 2 != 0:
            raise ValueError("N must be a positive even integer")
        if not (self.delta > 0 and self.f_c > 0 and self.c > 0):
            raise ValueError("delta, f_c and c must be positive")
        s_f = self.s_f
        if s_f is None:
            s_f = np.ones(self.N, dtype=complex)
        s_f = np.asarray(s_f, dtype=complex)
        if s_f.shape != (self.N,):
            raise ValueError("s_f must have length N")
        if not np.all(np.isfinite(s_f)) or np.linalg.norm(s_f) == 0:
            raise ValueError("s_f must be finite with nonzero norm")
        object.__setattr__(self, "s_f", s_f)

    @property
    def bandwidth(self) -> float:
        return self.N * self.delta

    @property
    def frequencies(self) -> np.ndarray:
        """Baseband frequency vector [-(N/2)*delta, ..., (N/2-1)*delta]."""
        return (np.arange(self.N) - self.N // 2) * self.delta

    @classmethod
    def default(cls, N=64, bandwidth=1e9, f_c=60e9, c=SPEED_OF_LIGHT, s_f=None):
        """Default evaluation grid: 1 GHz bandwidth at a 60 GHz carrier."""
        return cls(N=N, delta=bandwidth / N, f_c=f_c, c=c, s_f=s_f)


@dataclass(frozen=True)
class DispersionParams:
    """Dispersion parameters of one multipath component.

    phi is the angle of arrival in radians, unambiguous in [0, pi) for a
    linear array; tau is the propagation delay in seconds, unambiguous in
    [0, 1/delta).
    """

    phi: float
    tau: float

    def __post_init__(self):
        if not (np.isfinite(self.phi) and np.isfinite(self.tau)):
            raise ValueError("phi and tau must be finite")


@dataclass(frozen=True)
class Dictionary:
    """Stacked dictionary atoms and their per-antenna blocks.

    `columns` has shape (P*N, K); column k is the stacking over antennas of
    a_p(phi_k) * diag(s_f) * a_tau(tau_k). `blocks` has shape (P, N, K);
    blocks[p] is the N x K per-antenna matrix T_p.
    """

    columns: np.ndarray
    blocks: np.ndarray
    thetas: tuple

    @property
    def n_components(self) -> int:
        return self.columns.shape[1]


def steering_vector(phi, geom: ArrayGeometry, grid: SignalGrid) -> np.ndarray:
    """Array response a(phi) with unit-modulus entries, length P."""
    if not np.isfinite(phi):
        raise ValueError("phi must be finite")
    u = np.array([np.cos(phi), np.sin(phi)])
    phase = -2.0 * np.pi * grid.f_c / grid.c * (geom.positions @ u)
    return np.exp(1j * phase)


def temporal_vector(tau, grid: SignalGrid) -> np.ndarray:
    """Temporal response a_tau(tau) = exp(-j*2*pi*f*tau), length N."""
    if not np.isfinite(tau):
        raise ValueError("tau must be finite")
    return np.exp(-2j * np.pi * grid.frequencies * tau)


def dictionary_atom(theta: DispersionParams, geom, grid) -> np.ndarray:
    """Stacked atom a(phi) kron (diag(s_f) * a_tau(tau)), length P*N."""
    a = steering_vector(theta.phi, geom, grid)
    t = grid.s_f * temporal_vector(theta.tau, grid)
    return (a[:, None] * t[None, :]).reshape(-1)


def build_dictionary(thetas, geom: ArrayGeometry, grid: SignalGrid) -> Dictionary:
    """Assemble the dictionary for a list of dispersion parameters.

    An empty list yields (P*N) x 0 / (P, N, 0) matrices so that downstream
    updates can treat the model as empty.
    """
    P, N = geom.num_elements, grid.N
    K = len(thetas)
    blocks = np.zeros((P, N, K), dtype=complex)
    for k, theta in enumerate(thetas):
        a = steering_vector(theta.phi, geom, grid)
        t = grid.s_f * temporal_vector(theta.tau, grid)
        blocks[:, :, k] = a[:, None] * t[None, :]
    columns = blocks.reshape(P * N, K)
    return Dictionary(columns=columns, blocks=blocks, thetas=tuple(thetas))


def apply_calibration(w, x) -> np.ndarray:
    """Apply D(w) = diag(w kron 1_N) to a stacked vector or matrix.

    Block p of the output is w_p times block p of x. The (PN) x (PN)
    diagonal matrix is never materialized.
    """
    w = np.asarray(w)
    x = np.asarray(x)
    P = w.shape[0]
    if x.shape[0] % P != 0:
        raise ValueError(
            f"length {x.shape[0]} of x is not a multiple of P={P}"
        )
    N = x.shape[0] // P
    if x.ndim == 1:
        return (x.reshape(P, N) * w[:, None]).reshape(-1)
    return (x.reshape(P, N, -1) * w[:, None, None]).reshape(P * N, -1)
