"""Gaussian laser profiles and precomputed split-step propagator tables."""

from __future__ import annotations

import math

import numpy as np

from .constants import HBAR
from .grid import RingGrid
from .params import ParameterSet

# Profiles are evaluated on the plain (chordless) coordinate, not the ring
# distance; the largest seam mismatch at the default widths is the trap
# tail, ~3e-4 of its peak, far below every scale in the problem.
SEAM_TAIL_LIMIT = 1e-3


def gaussian_profile(x, x0: float, sigma: float):
    """exp(-(x - x0)^2 / (2 sigma^2)); no periodic wrapping of the argument."""
    if sigma <= 0:
        raise ValueError(f"sigma = {sigma}: must be positive")
    return np.exp(-((x - x0) ** 2) / (2.0 * sigma**2))


def laser_profiles(p: ParameterSet, g: RingGrid) -> dict:
    """All laser profiles on the grid, in rate units (1/s).

    The quench Rabi profile has width sqrt(2) sigma_Q so that its square over
    gamma3 reproduces the quench rate profile of width sigma_Q.
    """
    x = g.x
    prof = {
        "omega_P": p.omega_P_hat * gaussian_profile(x, p.x_P, p.sigma),
        "W1": p.W1_hat * gaussian_profile(x, p.x_W1, p.sigma),
        "W2": p.W2_hat * gaussian_profile(x, p.x_W2, p.sigma),
        "W_T": p.W_T_hat * gaussian_profile(x, p.x_T, p.sigma_T),
        "W_Q": p.W_Q_hat * gaussian_profile(x, p.x_Q, p.sigma_Q),
        "omega_Q": p.omega_Q_hat * gaussian_profile(x, p.x_Q, math.sqrt(2.0) * p.sigma_Q),
    }
    for name, arr in prof.items():
        peak = np.abs(arr).max()
        seam = abs(arr[0])
        assert peak == 0 or seam <= SEAM_TAIL_LIMIT * peak, \
            f"{name}: seam tail {seam / peak:.2e} of peak; widen the ring or shrink sigma"
    return prof


def _expm2_symmetric(a11, a12, a22):
    """exp of the 2x2 complex symmetric matrix [[a11, a12], [a12, a22]], vectorized.

    Uses exp(sI + N) = e^s (cosh(D) I + sinh(D)/D N) for traceless N,
    D^2 = d^2 + a12^2 with d = (a11 - a22)/2.
    """
    s = 0.5 * (a11 + a22)
    d = 0.5 * (a11 - a22)
    D = np.sqrt(d * d + a12 * a12 + 0j)
    coshD = np.cosh(D)
    small = np.abs(D) < 1e-6
    Ds = np.where(small, 1.0, D)
    sinhc = np.where(small, 1.0 + D * D / 6.0, np.sinh(Ds) / Ds)
    es = np.exp(s)
    return es * (coshD + d * sinhc), es * (a12 * sinhc), es * (coshD - d * sinhc)


class PotentialTable:
    """Position-dependent coupling matrices and their half-step propagators.

    The potential is V(x) = (hbar/2) M(x); a half step of length dt/2 applies
    exp(-i (dt/4) M(x)) pointwise. `full` propagators cover a whole dt (the
    product of two half steps, exact because M is time independent).
    """

    def __init__(self, p: ParameterSet, g: RingGrid, mode: str, dt: float, profiles: dict):
        self.mode = mode
        self.dt = dt
        self.grid = g
        self.params = p
        self.profiles = profiles
        self.gamma3 = p.gamma3

        w11 = profiles["W1"] + profiles["W_T"]
        wp = profiles["omega_P"]
        if mode == "two_level":
            a11 = -0.25j * dt * w11
            a12 = -0.25j * dt * wp
            a22 = -0.25j * dt * (profiles["W2"] - 1j * profiles["W_Q"])
            self.half = _expm2_symmetric(a11, a12, a22)
            self.full = _expm2_symmetric(2 * a11, 2 * a12, 2 * a22)
        elif mode == "three_level":
            n = g.n
            m3 = np.zeros((n, 3, 3))
            m3[:, 0, 0] = w11
            m3[:, 0, 1] = m3[:, 1, 0] = wp
            m3[:, 1, 1] = profiles["W2"]
            m3[:, 1, 2] = m3[:, 2, 1] = profiles["omega_Q"]
            evals, evecs = np.linalg.eigh(m3)
            self.half = self._absorbed(evals, evecs, dt / 4.0, p.gamma3 * dt / 8.0)
            self.full = self._absorbed(evals, evecs, dt / 2.0, p.gamma3 * dt / 4.0)
        else:
            raise ValueError(f"mode = {mode!r}: no potential table for this mode")

        # kinetic full-step phase exp(-i dt hbar k^2 / 2m)
        self.kinetic = np.exp(-1j * dt * HBAR * g.k**2 / (2.0 * p.mass))

    @staticmethod
    def _absorbed(evals, evecs, tau, gt):
        """D exp(-i tau M) D with D = diag(1, 1, e^-gt): Strang split of the
        Hermitian part and the level-3 absorber within one potential half step."""
        ph = np.exp(-1j * tau * evals)
        u = np.einsum("nij,nj,nkj->nik", evecs, ph, evecs.conj())
        d = np.array([1.0, 1.0, math.exp(-gt)])
        return d[None, :, None] * u * d[None, None, :]

    def propagator_matrix(self, j: int, full: bool = False) -> np.ndarray:
        """Dense propagator matrix at grid point j (for tests and diagnostics)."""
        P = self.full if full else self.half
        if self.mode == "two_level":
            p11, p12, p22 = P
            return np.array([[p11[j], p12[j]], [p12[j], p22[j]]])
        return P[j]

    def apply_half(self, data: np.ndarray) -> None:
        """In-place potential half step on (n_levels, n) data (reference path)."""
        if self.mode == "two_level":
            p11, p12, p22 = self.half
            a = data[0].copy()
            data[0] = p11 * a + p12 * data[1]
            data[1] = p12 * a + p22 * data[1]
        else:
            data[:] = np.einsum("nij,jn->in", self.half, data)


def assemble_potential(p: ParameterSet, g: RingGrid, mode: str | None = None,
                       dt: float | None = None) -> PotentialTable:
    """Build the propagator table for the run (profiles + precomputed exponentials)."""
    mode = mode or p.mode
    if mode == "three_level" and p.gamma3 <= 0:
        raise ValueError("three_level mode requires gamma3 > 0")
    return PotentialTable(p, g, mode, p.dt if dt is None else dt, laser_profiles(p, g))
