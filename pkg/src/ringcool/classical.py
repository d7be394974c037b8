"""Classical toy model: point diode+trap on the ring, event-driven kinematics.

The diode sits at the trap center x_T. A clockwise arrival draws a recoil
kick u * v_rec, is trapped if the kicked speed is below the trap threshold
v_T, and otherwise crosses with v_T subtracted from its speed (`linear`
rule, the one behind the closed-form crossing count and round-time formulas;
the `energy` rule subtracts the well depth from the kinetic energy instead
and is kept for comparison). Anticlockwise arrivals reflect elastically.
Free flight between events is exact; no time discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import HBAR
from .mcwf import sample_recoil
from .params import ParameterSet, derive_trap_velocity

RULES = ("linear", "energy")


@dataclass
class ClassicalParticle:
    x: float                  # position in [-l/2, l/2)
    v: float                  # m/s
    trapped: bool = False
    trap_time: float | None = None
    crossings: int = 0        # completed clockwise passages of the diode
    stalled: bool = False     # v hit exactly 0; never reaches the diode again


@dataclass
class ClassicalEnsembleResult:
    times: np.ndarray
    trapping_probability: np.ndarray
    particles: list


def packet_position_std(p: ParameterSet) -> float:
    """Position spread of |Psi_0(x)|^2: intrinsic width plus the t0 chirp."""
    dk = p.mass * p.delta_v / HBAR
    return math.hypot(1.0 / (2.0 * dk), p.delta_v * p.t0)


def wrap(x: float, l: float) -> float:
    return (x + l / 2.0) % l - l / 2.0


def sample_initial(p: ParameterSet, rng, correlated: bool = False) -> ClassicalParticle:
    """Draw (x, v) from the Gaussians matching the initial quantum marginals.

    Independent marginals by default, as in the published model; with
    correlated=True the chirp correlation x = x0 + (v - v0) t0 + intrinsic
    spread is kept.
    """
    v = rng.normal(p.v0, p.delta_v)
    dk = p.mass * p.delta_v / HBAR
    if correlated:
        x = p.x0 + (v - p.v0) * p.t0 + rng.normal(0.0, 1.0 / (2.0 * dk))
    else:
        x = rng.normal(p.x0, packet_position_std(p))
    return ClassicalParticle(x=wrap(x, p.ring_length), v=v)


def analytic_crossings(v: float, v_T: float) -> int:
    """Smallest n >= 0 with v - n v_T < v_T (strict at exact multiples)."""
    if v <= 0 or v_T <= 0:
        raise ValueError("analytic_crossings needs v > 0 and v_T > 0")
    r = v / v_T - 1.0
    return max(0, math.floor(r) + 1)


def analytic_total_time(v: float, x_start: float, p: ParameterSet,
                        v_T: float | None = None) -> float:
    """First arrival t0 = ((x_D - x_start) mod l)/v plus the n-round sum
    t_n = l sum_{j=1..n} 1/(v - j v_T)."""
    if v <= 0:
        raise ValueError("formula applies to clockwise launches (v > 0)")
    if v_T is None:
        v_T = derive_trap_velocity(p)
    l = p.ring_length
    t0 = ((p.x_T - x_start) % l) / v
    n = analytic_crossings(v, v_T)
    t = t0
    for j in range(1, n + 1):
        vj = v - j * v_T
        if vj <= 0:
            raise ValueError(f"divergent round: v - {j} v_T = {vj:g} <= 0; "
                             "the closed form does not apply here")
        t += l / vj
    return t


def evolve_particle(pt: ClassicalParticle, p: ParameterSet, t_final: float, rng,
                    rule: str = "linear", v_T: float | None = None) -> ClassicalParticle:
    """Event-driven evolution of one particle up to t_final.

    At each clockwise arrival, in order: recoil kick, trap test |v| < v_T,
    subtraction. The particle is trapped *at* the arrival that fails the
    test, so that arrival is not counted as a crossing.
    """
    if rule not in RULES:
        raise ValueError(f"rule = {rule!r}: expected one of {RULES}")
    if pt.trapped:
        return pt
    if v_T is None:
        v_T = derive_trap_velocity(p)
    l = p.ring_length
    x_D = p.x_T
    x, v, t = pt.x, pt.v, 0.0
    crossings = pt.crossings
    while True:
        if v == 0.0:
            pt.x, pt.v, pt.crossings, pt.stalled = x, v, crossings, True
            return pt
        if v > 0:
            dist = (x_D - x) % l
        else:
            dist = (x - x_D) % l
        if dist == 0.0:
            dist = l
        t_arrive = t + dist / abs(v)
        if t_arrive > t_final:
            pt.x = wrap(x + v * (t_final - t), l)
            pt.v, pt.crossings = v, crossings
            return pt
        t, x = t_arrive, x_D
        if v < 0:
            v = -v  # elastic reflection off the diode, no recoil
            continue
        v += sample_recoil(rng) * p.v_rec
        if abs(v) < v_T:
            pt.x, pt.v = x_D, v
            pt.trapped, pt.trap_time, pt.crossings = True, t, crossings
            return pt
        if rule == "linear":
            v = math.copysign(abs(v) - v_T, v)
        else:
            v = math.copysign(math.sqrt(v * v - v_T * v_T), v)
        crossings += 1


def run_classical_ensemble(p: ParameterSet, rule: str = "linear",
                           correlated: bool = False,
                           out_interval: float = 1e-3) -> ClassicalEnsembleResult:
    """Evolve n_trajectories particles; trapping fraction on a uniform time grid.

    Deterministic for a given rng_seed: particle i uses the stream seeded by
    (rng_seed, i), so results do not depend on evaluation order.
    """
    if p.mode != "classical":
        raise ValueError(f"mode = {p.mode!r}: classical ensemble needs mode = classical")
    n = p.n_trajectories
    times = np.arange(0.0, p.t_final + out_interval / 2, out_interval)
    particles = []
    trapped_at = []
    for i in range(n):
        rng = np.random.default_rng([p.rng_seed, i])
        pt = sample_initial(p, rng, correlated=correlated)
        pt = evolve_particle(pt, p, p.t_final, rng, rule=rule)
        particles.append(pt)
        if pt.trapped:
            trapped_at.append(pt.trap_time)
    trapped_at = np.sort(np.asarray(trapped_at))
    prob = np.searchsorted(trapped_at, times, side="right") / n
    return ClassicalEnsembleResult(times=times, trapping_probability=prob,
                                   particles=particles)
