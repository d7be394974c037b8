"""Hot propagation kernels: numba+FFTW fast path with a pure-numpy fallback.

The backend is chosen once per process from the environment variable
RINGCOOL_BACKEND (numba | numpy); unset picks numba when both numba and the
system FFTW are usable. benchmarks/bench_kernels.py compares the two.

A stepper owns the live field of one trajectory and advances it in chunks of
whole dt steps. Interior steps fuse the two adjacent potential half steps
into one exact full step (the potential is time independent, so
exp(A)exp(A) = exp(2A) holds exactly); every chunk boundary carries the
trailing half step, so the state handed back to the caller is always on an
exact Strang step boundary. Survival is monitored every step; a chunk
returns early on the step where it reaches the jump threshold.

While the level-2 amplitude is negligible *and* the packet sits where the
pump cannot repopulate it, the stepper parks that component at exact zero
and transforms only level 1 (half the FFT work). The parked weight and the
wake-up threshold are ~1e-12 of the survival, far below every observable.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.fft as _sfft

from . import _fftw

_ENV = "RINGCOOL_BACKEND"

# chunk cap between component-mode re-evaluations
CHUNK = 64
W2_PARK = 1e-12   # level-2 weight (relative to survival) below which it is parked
GEN_WAKE = 1e-16  # per-step regenerated level-2 weight that wakes it up


def _pick_backend() -> str:
    choice = os.environ.get(_ENV, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError(f"{_ENV} = {choice!r}: expected 'numba' or 'numpy'")
    if choice == "numpy":
        return "numpy"
    numba_ok = _fftw.available()
    if numba_ok:
        try:
            import numba  # noqa: F401
        except ImportError:
            numba_ok = False
    if choice == "numba" and not numba_ok:
        raise RuntimeError("numba backend requested but numba or libfftw3 is unavailable")
    return "numba" if numba_ok else "numpy"


BACKEND = _pick_backend()


def backend() -> str:
    return BACKEND


if BACKEND == "numba":
    from numba import njit

    _execute = _fftw.fftw_execute

    # fastmath only reassociates elementwise complex products and the
    # positive-term survival sums; both stay at the 1e-15 level.
    @njit(cache=False, fastmath=True)
    def _advance2_numba(psi, h11, h12, h22, f11, f12, f22, kin, eps, m, two,
                        nscale, pf, pb, pf1, pb1):
        n = psi.shape[1]
        if two:
            for j in range(n):
                a = psi[0, j]
                b = psi[1, j]
                psi[0, j] = h11[j] * a + h12[j] * b
                psi[1, j] = h12[j] * a + h22[j] * b
        else:
            for j in range(n):
                psi[0, j] = h11[j] * psi[0, j]
        i = 0
        while i < m:
            if i > 0:
                if two:
                    for j in range(n):
                        a = psi[0, j]
                        b = psi[1, j]
                        psi[0, j] = f11[j] * a + f12[j] * b
                        psi[1, j] = f12[j] * a + f22[j] * b
                else:
                    for j in range(n):
                        psi[0, j] = f11[j] * psi[0, j]
            t = 0.0
            if two:
                _execute(pf)
                for j in range(n):
                    a = psi[0, j] * kin[j]
                    b = psi[1, j] * kin[j]
                    psi[0, j] = a
                    psi[1, j] = b
                    t += a.real * a.real + a.imag * a.imag \
                        + b.real * b.real + b.imag * b.imag
                _execute(pb)
            else:
                _execute(pf1)
                for j in range(n):
                    a = psi[0, j] * kin[j]
                    psi[0, j] = a
                    t += a.real * a.real + a.imag * a.imag
                _execute(pb1)
            i += 1
            if t * nscale <= eps:
                break
        s = 0.0
        if two:
            for j in range(n):
                a = psi[0, j]
                b = psi[1, j]
                a2 = h11[j] * a + h12[j] * b
                b2 = h12[j] * a + h22[j] * b
                psi[0, j] = a2
                psi[1, j] = b2
                s += a2.real * a2.real + a2.imag * a2.imag \
                    + b2.real * b2.real + b2.imag * b2.imag
        else:
            for j in range(n):
                a2 = h11[j] * psi[0, j]
                psi[0, j] = a2
                s += a2.real * a2.real + a2.imag * a2.imag
        return i, s


def _advance2_numpy(psi, h11, h12, h22, f11, f12, f22, kin, eps, m, two, nscale):
    """Pure-numpy twin of the jitted chunk kernel (same maths, scipy FFT)."""
    n = psi.shape[1]
    rows = 2 if two else 1
    view = psi[:rows]
    if two:
        a = view[0].copy()
        view[0] = h11 * a + h12 * view[1]
        view[1] = h12 * a + h22 * view[1]
    else:
        view[0] *= h11
    i = 0
    while i < m:
        if i > 0:
            if two:
                a = view[0].copy()
                view[0] = f11 * a + f12 * view[1]
                view[1] = f12 * a + f22 * view[1]
            else:
                view[0] *= f11
        z = _sfft.fft(view, axis=1)
        z *= kin
        t = np.vdot(z, z).real
        view[:] = _sfft.ifft(z, axis=1, overwrite_x=True)
        view *= n  # kin carries 1/n; backward transform here is the unscaled sum
        i += 1
        if t * nscale <= eps:
            break
    if two:
        a = view[0].copy()
        view[0] = h11 * a + h12 * view[1]
        view[1] = h12 * a + h22 * view[1]
    else:
        view[0] *= h11
    return i, np.vdot(view, view).real


class TwoLevelStepper:
    """Chunked split-step engine for the effective two-level Hamiltonian.

    park=False disables the idle-component optimization; its sub-1e-12 weight
    drops are invisible to observables but matter in convergence studies.
    """

    def __init__(self, table, grid, park: bool = True):
        if table.mode != "two_level":
            raise ValueError("TwoLevelStepper needs a two_level table")
        n = grid.n
        self.grid = grid
        self.table = table
        self.dx = grid.dx
        self.nscale = n * grid.dx
        self.psi = np.zeros((2, n), dtype=np.complex128)
        self._use_numba = BACKEND == "numba"
        if self._use_numba:
            self.plans = _fftw.PlanSet(self.psi)
        self.h11, self.h12, self.h22 = (np.ascontiguousarray(a) for a in table.half)
        self.f11, self.f12, self.f22 = (np.ascontiguousarray(a) for a in table.full)
        self.kin = np.ascontiguousarray(table.kinetic / n)
        self.two = True
        self.park = park
        self.survival = 1.0

    def load(self, data: np.ndarray):
        self.psi[:] = data
        self.survival = np.vdot(self.psi, self.psi).real * self.dx
        self.two = True
        self._update_component_mode()

    def field(self) -> np.ndarray:
        return self.psi.copy()

    def _update_component_mode(self):
        if not self.park:
            self.two = True
            return
        g = self.f12 * self.psi[0]
        gen = np.vdot(g, g).real * self.dx
        if self.two:
            w2 = np.vdot(self.psi[1], self.psi[1]).real * self.dx
            if w2 < W2_PARK * self.survival and gen < GEN_WAKE * self.survival:
                self.psi[1] = 0.0
                self.survival -= w2
                self.two = False
        elif gen >= GEN_WAKE * self.survival:
            self.two = True

    def advance(self, n_steps: int, eps: float):
        """Advance up to n_steps; returns (steps_done, jumped)."""
        done = 0
        while done < n_steps:
            take = min(CHUNK, n_steps - done)
            if self._use_numba:
                steps, s = _advance2_numba(
                    self.psi, self.h11, self.h12, self.h22,
                    self.f11, self.f12, self.f22, self.kin,
                    eps, take, self.two, self.nscale,
                    self.plans.fwd, self.plans.bwd, self.plans.fwd1, self.plans.bwd1)
            else:
                steps, s = _advance2_numpy(
                    self.psi, self.h11, self.h12, self.h22,
                    self.f11, self.f12, self.f22, self.kin,
                    eps, take, self.two, self.nscale)
            self.survival = s * self.dx
            done += steps
            if self.survival <= eps:
                return done, True
            self._update_component_mode()
        return done, False


class ThreeLevelStepper:
    """Plain per-step engine for the three-level Hamiltonian with absorber.

    Used for short consistency runs; no component parking, no step fusing.
    """

    def __init__(self, table, grid):
        if table.mode != "three_level":
            raise ValueError("ThreeLevelStepper needs a three_level table")
        self.grid = grid
        self.table = table
        self.dx = grid.dx
        self.psi = np.zeros((3, grid.n), dtype=np.complex128)
        self.kin = table.kinetic
        self.survival = 1.0

    def load(self, data: np.ndarray):
        self.psi[:] = data
        self.survival = np.vdot(self.psi, self.psi).real * self.dx

    def field(self) -> np.ndarray:
        return self.psi.copy()

    def advance(self, n_steps: int, eps: float):
        half = self.table.half
        for i in range(n_steps):
            self.psi[:] = np.einsum("nij,jn->in", half, self.psi)
            z = _sfft.fft(self.psi, axis=1)
            z *= self.kin
            self.psi[:] = _sfft.ifft(z, axis=1, overwrite_x=True)
            self.psi[:] = np.einsum("nij,jn->in", half, self.psi)
            self.survival = np.vdot(self.psi, self.psi).real * self.dx
            if self.survival <= eps:
                return i + 1, True
        return n_steps, False


def make_stepper(table, grid, **kwargs):
    if table.mode == "two_level":
        return TwoLevelStepper(table, grid, **kwargs)
    return ThreeLevelStepper(table, grid)
