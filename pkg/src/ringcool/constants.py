"""Physical constants (CODATA 2022) used throughout, all SI."""

from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.054571817e-34        # J s
    atomic_mass_unit: float = 1.66053906892e-27  # kg


CONST = PhysicalConstants()

HBAR = CONST.hbar
AMU = CONST.atomic_mass_unit

# Standard atomic weight of neon; the mass used when a config does not override it.
NEON_MASS_U = 20.1797
NEON_MASS_KG = NEON_MASS_U * AMU
