"""Periodic ring grid, spinor fields, unitary transforms, and the initial packet."""

from __future__ import annotations

import numpy as np

from .constants import HBAR
from .params import ParameterSet


class PacketError(ValueError):
    """Initial packet does not fit the momentum grid."""


class RingGrid:
    """Uniform grid of n points on a ring of length l, with its conjugate k grid.

    x_j = -l/2 + j l/n; k in standard DFT order, integer multiples of 2 pi / l
    (symmetric about zero up to the single Nyquist mode).
    """

    def __init__(self, n: int, l: float):
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"grid_points = {n}: must be a power of two")
        if l <= 0:
            raise ValueError(f"ring_length = {l}: must be positive")
        self.n = n
        self.l = l
        self.dx = l / n
        self.x = -l / 2 + self.dx * np.arange(n)
        self.k = 2 * np.pi * np.fft.fftfreq(n, d=self.dx)
        self.k_max = np.pi / self.dx

    @classmethod
    def from_params(cls, p: ParameterSet) -> "RingGrid":
        return cls(p.grid_points, p.ring_length)

    def max_velocity(self, mass: float) -> float:
        """Largest velocity representable on the momentum grid, hbar k_max / m."""
        return HBAR * self.k_max / mass

    def velocity_axis(self, mass: float) -> np.ndarray:
        """v = hbar k / m per mode, in DFT order."""
        return HBAR * self.k / mass


class SpinorField:
    """2- or 3-component complex field on the grid, in position or momentum form.

    data has shape (n_levels, n). The squared norm is sum(|a|^2) * dx in either
    representation (the transform is unitary).
    """

    def __init__(self, data: np.ndarray, grid: RingGrid, rep: str = "position"):
        data = np.ascontiguousarray(data, dtype=np.complex128)
        if data.ndim != 2 or data.shape[0] not in (2, 3) or data.shape[1] != grid.n:
            raise ValueError(f"expected (2|3, {grid.n}) complex array, got {data.shape}")
        if rep not in ("position", "momentum"):
            raise ValueError(f"rep = {rep!r}")
        self.data = data
        self.grid = grid
        self.rep = rep

    @property
    def n_levels(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "SpinorField":
        return SpinorField(self.data.copy(), self.grid, self.rep)

    def norm_sq(self) -> float:
        return float(np.vdot(self.data, self.data).real) * self.grid.dx

    def normalized(self) -> "SpinorField":
        ns = self.norm_sq()
        if ns <= 0:
            raise ValueError("cannot normalize a zero field")
        return SpinorField(self.data / np.sqrt(ns), self.grid, self.rep)

    @classmethod
    def zero(cls, grid: RingGrid, n_levels: int = 2, rep: str = "position"):
        return cls(np.zeros((n_levels, grid.n), dtype=np.complex128), grid, rep)


def to_momentum(f: SpinorField) -> SpinorField:
    """Unitary DFT per component (Parseval-exact up to rounding)."""
    if f.rep != "position":
        raise ValueError("field is not in position representation")
    data = np.fft.fft(f.data, axis=1) / np.sqrt(f.grid.n)
    return SpinorField(data, f.grid, "momentum")


def to_position(f: SpinorField) -> SpinorField:
    """Inverse of to_momentum."""
    if f.rep != "momentum":
        raise ValueError("field is not in momentum representation")
    data = np.fft.ifft(f.data, axis=1) * np.sqrt(f.grid.n)
    return SpinorField(data, f.grid, "position")


def build_initial_packet(p: ParameterSet, g: RingGrid, n_levels: int = 2) -> SpinorField:
    """Gaussian packet in level 1: mean velocity v0, velocity width delta_v,
    centered at x0 after free pre-evolution time t0 (quadratic chirp in k).

    Constructed on the momentum grid, transformed to position space, and
    normalized to 1.
    """
    m = p.mass
    k0 = m * p.v0 / HBAR
    dk = m * p.delta_v / HBAR
    if abs(k0) + 4 * dk >= g.k_max:
        raise PacketError(
            f"|k0| + 4 dk = {abs(k0) + 4 * dk:.4g} 1/m exceeds k_max = {g.k_max:.4g} 1/m; "
            "increase grid_points or reduce v0/delta_v")
    k = g.k
    phase = -(k - k0) ** 2 / (4 * dk**2) \
        - 1j * (k - k0) * (p.x0 - HBAR / m * p.t0 * k0) \
        - 1j * HBAR / m * p.t0 * k**2 / 2
    phi = (2 * np.pi) ** (-0.25) * dk ** (-0.5) * np.exp(phase)

    w = np.abs(phi) ** 2
    # modes within one spacing of +-k_max count as the grid edge
    edge = np.abs(np.abs(k) - g.k_max) <= 2 * np.pi / g.l * (1 + 1e-9)
    tail = w[edge].sum() / w.sum()
    if tail > 1e-8:
        raise PacketError(f"packet leaks outside the momentum grid (edge weight {tail:.3g})")

    f = SpinorField.zero(g, n_levels=n_levels, rep="momentum")
    # the inverse DFT synthesizes against e^{i k (x - x_first)}; fold in the
    # grid origin so phi multiplies the physical plane waves e^{i k x}
    f.data[0] = phi * np.exp(1j * k * g.x[0])
    return to_position(f).normalized()


def position_density(f: SpinorField, levels=None) -> np.ndarray:
    """sum_levels |psi_level(x_j)|^2; integrates (x dx) to the weight in those levels."""
    if f.rep != "position":
        raise ValueError("field is not in position representation")
    if levels is None:
        levels = range(f.n_levels)
    out = np.zeros(f.grid.n)
    for lvl in levels:
        out += np.abs(f.data[lvl]) ** 2
    return out


def momentum_weights(f: SpinorField, levels=None) -> np.ndarray:
    """Probability weight per momentum mode (DFT order); sums to the level weight."""
    fk = to_momentum(f) if f.rep == "position" else f
    if levels is None:
        levels = range(fk.n_levels)
    out = np.zeros(fk.grid.n)
    for lvl in levels:
        out += np.abs(fk.data[lvl]) ** 2
    return out * fk.grid.dx


def windowed_probability(density: np.ndarray, g: RingGrid, a: float, b: float) -> float:
    """Riemann sum dx * sum over grid points with a <= x_j < b."""
    if a >= b:
        raise ValueError(f"window [{a:g}, {b:g}): need a < b")
    if a < -g.l / 2 - 1e-12 or b > g.l / 2 + 1e-12:
        raise ValueError(f"window [{a:g}, {b:g}) outside the ring [{-g.l/2:g}, {g.l/2:g}]")
    mask = (g.x >= a) & (g.x < b)
    return float(density[mask].sum() * g.dx)
