"""Run parameters: flat key=value config files, validation, derived quantities.

All quantities are SI. A config file contains one `key = value` per line,
`#` starts a comment, and every key not present falls back to the defaults
below (the published operating point of the device). `mode` is the only
mandatory key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .constants import HBAR, NEON_MASS_KG

MODES = ("two_level", "three_level", "classical")

# Default operating point: 400 um ring, neon, zero-recoil laser set.
# grid_points = 16384 so the momentum grid reaches ~40 cm/s, past the
# diode break-up scale (~25 cm/s) with margin; 8192 would top out at
# ~20 cm/s and clip the initial packet's 4-sigma velocity tail.
DEFAULTS = {
    "ring_length": 400e-6,
    "mass": NEON_MASS_KG,
    "omega_P_hat": 4e4,
    "W1_hat": 4e6,
    "W2_hat": 4e6,
    "W_T_hat": -1e5,
    "W_Q_hat": 1e5,
    "x_W2": -90e-6,
    "x_P": -40e-6,
    "x_W1": 10e-6,
    "x_T": 80e-6,
    "x_Q": 100e-6,
    "sigma": 15e-6,
    "sigma_T": 30e-6,
    "sigma_Q": 10e-6 / math.sqrt(2.0),
    "v_rec": 0.0,
    "gamma3": 1e7,
    "omega_Q_hat": 1e6,
    "x0": -200e-6,
    "v0": 0.05,
    "delta_v": 0.04,
    "t0": 1e-3,
    "grid_points": 16384,
    "dt": 2e-7,
    "t_final": 0.4,
    "n_trajectories": 200,
    "rng_seed": 1,
    "x_min": 10e-6,
    "x_max": 200e-6,
}

_INT_KEYS = ("grid_points", "n_trajectories", "rng_seed")


class ConfigError(ValueError):
    """A config key is unknown, missing, or violates an invariant."""

    def __init__(self, key, value, message):
        self.key = key
        self.value = value
        super().__init__(f"{key} = {value!r}: {message}")


@dataclass(frozen=True)
class ParameterSet:
    """Complete, validated parameter set of one run. Immutable."""

    mode: str
    ring_length: float
    mass: float
    omega_P_hat: float
    W1_hat: float
    W2_hat: float
    W_T_hat: float
    W_Q_hat: float
    x_W2: float
    x_P: float
    x_W1: float
    x_T: float
    x_Q: float
    sigma: float
    sigma_T: float
    sigma_Q: float
    v_rec: float
    gamma3: float
    omega_Q_hat: float
    x0: float
    v0: float
    delta_v: float
    t0: float
    grid_points: int
    dt: float
    t_final: float
    n_trajectories: int
    rng_seed: int
    x_min: float
    x_max: float

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(key, message):
            raise ConfigError(key, getattr(self, key), message)

        if self.mode not in MODES:
            bad("mode", f"must be one of {', '.join(MODES)}")
        if self.ring_length <= 0:
            bad("ring_length", "must be positive")
        if self.mass <= 0:
            bad("mass", "must be positive")
        n = self.grid_points
        if n < 2 or (n & (n - 1)) != 0:
            bad("grid_points", "must be a power of two")
        if self.dt <= 0:
            bad("dt", "must be positive")
        if self.t_final < 0:
            bad("t_final", "must be non-negative")
        for key in ("sigma", "sigma_T", "sigma_Q"):
            if getattr(self, key) <= 0:
                bad(key, "must be positive")
        if self.W_T_hat > 0:
            bad("W_T_hat", "trap peak must be non-positive (it is a well)")
        if self.W_Q_hat < 0:
            bad("W_Q_hat", "quench rate must be non-negative")
        if self.v_rec < 0:
            bad("v_rec", "must be non-negative")
        if self.delta_v <= 0:
            bad("delta_v", "must be positive")
        if self.n_trajectories < 1:
            bad("n_trajectories", "need at least one trajectory")
        half = self.ring_length / 2
        for key in ("x_W2", "x_P", "x_W1", "x_T", "x_Q"):
            x = getattr(self, key)
            if not (-half <= x < half):
                bad(key, f"center must lie in [{-half:g}, {half:g})")
        if not (-half <= self.x0 < half):
            bad("x0", f"must lie in [{-half:g}, {half:g})")
        if not (-half <= self.x_min < self.x_max <= half):
            bad("x_min", "trap window must satisfy -l/2 <= x_min < x_max <= l/2")
        if self.mode == "three_level":
            if self.gamma3 <= 0:
                bad("gamma3", "must be positive in three_level mode")
            wq = self.omega_Q_hat**2 / self.gamma3
            ref = max(abs(self.W_Q_hat), abs(wq))
            if ref > 0 and abs(wq - self.W_Q_hat) > 1e-12 * ref:
                bad("omega_Q_hat",
                    f"omega_Q_hat^2/gamma3 = {wq:g} does not match W_Q_hat = {self.W_Q_hat:g}")

    def with_overrides(self, **kwargs) -> "ParameterSet":
        return replace(self, **kwargs)


def _parse_value(key, raw):
    raw = raw.strip()
    if key == "mode":
        return raw
    try:
        if key in _INT_KEYS:
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        return float(raw)
    except ValueError:
        kind = "an integer" if key in _INT_KEYS else "a number"
        raise ConfigError(key, raw, f"expected {kind}") from None


def parse_pairs(pairs: dict) -> ParameterSet:
    """Build a ParameterSet from raw string pairs, applying defaults."""
    values = dict(DEFAULTS)
    mode = None
    for key, raw in pairs.items():
        if key == "mode":
            mode = _parse_value(key, raw)
            continue
        if key not in DEFAULTS:
            raise ConfigError(key, raw, "unknown key")
        values[key] = _parse_value(key, raw)
    if mode is None:
        raise ConfigError("mode", None, "mandatory key is missing")
    return ParameterSet(mode=mode, **values)


def parse_config(text: str) -> ParameterSet:
    """Parse a flat key=value config document into a validated ParameterSet."""
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", line, "expected `key = value`")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(key, raw.strip(), f"duplicate key (line {lineno})")
        pairs[key] = raw.strip()
    return parse_pairs(pairs)


def render_config(p: ParameterSet) -> str:
    """Echo the fully resolved parameter set as a re-parseable config document."""
    lines = [f"mode = {p.mode}"]
    for f in fields(p):
        if f.name == "mode":
            continue
        v = getattr(p, f.name)
        lines.append(f"{f.name} = {int(v) if f.name in _INT_KEYS else repr(float(v))}")
    return "\n".join(lines) + "\n"


def derive_trap_velocity(p: ParameterSet) -> float:
    """Velocity whose kinetic energy equals the trap well depth: sqrt(hbar |W_T_hat| / m)."""
    return math.sqrt(HBAR * abs(p.W_T_hat) / p.mass)


def derive_quench_peak(omega_Q_hat: float, gamma3: float) -> float:
    """Effective quench decay rate omega_Q_hat^2 / gamma3 of the two-level reduction."""
    if gamma3 <= 0:
        raise ValueError(f"gamma3 = {gamma3!r}: must be positive")
    return omega_Q_hat**2 / gamma3


def quench_width_from_rabi(sigma_rabi: float) -> float:
    """Gaussian width of the quench rate profile given the Rabi profile width.

    Squaring a Gaussian of width sigma gives a Gaussian of width sigma/sqrt(2).
    """
    return sigma_rabi / math.sqrt(2.0)
