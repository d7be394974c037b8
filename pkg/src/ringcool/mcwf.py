"""Single quantum trajectory: non-Hermitian split-step evolution, norm-decay
jump detection (waiting-time unraveling), recoil sampling, and the reset.

Between jumps the unnormalized field evolves under the effective Hamiltonian;
a jump fires on the step where the squared norm (survival) falls to a uniform
threshold drawn once per inter-jump interval. The reset moves the decayed
amplitude back to level 1 with the recoil phase, renormalizes, and draws a
fresh threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .constants import HBAR
from .grid import RingGrid, SpinorField, build_initial_packet
from .kernels import make_stepper
from .params import ParameterSet
from .potentials import PotentialTable, assemble_potential


class EngineError(RuntimeError):
    pass


@dataclass
class TrajectoryState:
    field: SpinorField
    t: float = 0.0
    survival: float = 1.0
    jump_threshold: float = 1.0
    jump_log: list = dc_field(default_factory=list)


@dataclass
class TrajectoryRecord:
    jump_log: list            # (t_jump, u) pairs
    final: SpinorField        # unnormalized field at t_final
    survival: float
    steps: int


def split_step(s: TrajectoryState, pot: PotentialTable, g: RingGrid,
               dt: float | None = None) -> TrajectoryState:
    """One Strang step exp(-i dt/2 V/hbar) F^-1 exp(-i dt hbar k^2/2m) F exp(-i dt/2 V/hbar).

    Reference implementation (plain numpy); the chunked kernels in
    kernels.py are the production path and are tested against this one.
    """
    if dt is not None and abs(dt - pot.dt) > 1e-30 + 1e-12 * pot.dt:
        raise ValueError(f"dt = {dt} does not match the precomputed table (dt = {pot.dt})")
    data = s.field.data.copy()
    pot.apply_half(data)
    z = np.fft.fft(data, axis=1)
    z *= pot.kinetic
    data = np.fft.ifft(z, axis=1)
    pot.apply_half(data)
    f = SpinorField(data, g, "position")
    return TrajectoryState(field=f, t=s.t + pot.dt, survival=f.norm_sq(),
                           jump_threshold=s.jump_threshold, jump_log=s.jump_log)


def detect_jump(s: TrajectoryState) -> bool:
    """True when the survival has decayed to the drawn threshold."""
    return s.survival <= s.jump_threshold


def sample_recoil(rng) -> float:
    """Draw the recoil direction cosine u from (3/8)(1 + u^2) on [-1, 1].

    Rejection from a uniform proposal, acceptance (1 + u^2)/2 (mean 2/3).
    """
    while True:
        u = rng.uniform(-1.0, 1.0)
        if rng.random() < 0.5 * (1.0 + u * u):
            return u


def _draw_threshold(rng) -> float:
    eps = rng.random()
    while eps == 0.0:
        eps = rng.random()
    return eps


def reset_array(psi: np.ndarray, u: float, pot: PotentialTable, g: RingGrid) -> None:
    """In-place reset of a raw (n_levels, n) field after a jump.

    two_level: psi1 <- -i sqrt(W_Q(x)) e^{i m v_rec u x / hbar} psi2
    three_level: psi1 <- e^{i m v_rec u x / hbar} psi3
    All other levels are zeroed and the field is normalized to 1.
    """
    p = pot.params
    kick = np.exp(1j * (p.mass * p.v_rec * u / HBAR) * g.x)
    if pot.mode == "two_level":
        src = psi[1]
        amp = -1j * np.sqrt(pot.profiles["W_Q"]) * kick * src
    else:
        src = psi[2]
        amp = kick * src
    ns = np.vdot(amp, amp).real * g.dx
    if ns < 1e-300:
        raise EngineError("reset produced a zero field: jump detected with no decayed amplitude")
    psi[0] = amp / np.sqrt(ns)
    psi[1:] = 0.0


def apply_reset(s: TrajectoryState, u: float, pot: PotentialTable, g: RingGrid,
                rng=None) -> TrajectoryState:
    """Jump reset on a TrajectoryState; logs (t, u) and draws a fresh threshold."""
    data = s.field.data.copy()
    reset_array(data, u, pot, g)
    log = s.jump_log + [(s.t, u)]
    thr = _draw_threshold(rng) if rng is not None else s.jump_threshold
    return TrajectoryState(field=SpinorField(data, g, "position"), t=s.t,
                           survival=1.0, jump_threshold=thr, jump_log=log)


def _refine_jump_time(p, pot, g, pre_step_psi, eps, step_index):
    """Bisect the jump time inside the step that crossed the threshold.

    Validation aid (off by default): rebuilds sub-step propagator tables, so
    it is slow. Returns (tau, field at tau) with survival(tau) ~ eps.
    """
    lo, hi = 0.0, pot.dt
    f_lo = pre_step_psi
    for _ in range(8):
        mid = 0.5 * (lo + hi)
        sub = assemble_potential(p, g, pot.mode, dt=mid - lo)
        data = f_lo.copy()
        sub.apply_half(data)
        z = np.fft.fft(data, axis=1)
        z *= sub.kinetic
        data = np.fft.ifft(z, axis=1)
        sub.apply_half(data)
        s = np.vdot(data, data).real * g.dx
        if s <= eps:
            hi = mid
        else:
            lo, f_lo = mid, data
    t_jump = (step_index - 1) * pot.dt + hi
    return t_jump, f_lo


def run_trajectory(p: ParameterSet, pot: PotentialTable, g: RingGrid, rng,
                   observer=None, sample_every: int | None = None,
                   n_steps: int | None = None, u_override=None,
                   refine_jumps: bool = False) -> TrajectoryRecord:
    """Propagate one trajectory to t_final, firing the observer at sample steps.

    observer(step, t, field) receives a normalized copy; the internal
    survival bookkeeping is untouched. Deterministic for a given rng state.
    """
    if pot.mode not in ("two_level", "three_level"):
        raise ValueError(f"mode = {pot.mode!r}: quantum trajectory needs a quantum mode")
    dt = pot.dt
    if n_steps is None:
        n_steps = int(round(p.t_final / dt))
    if sample_every is None:
        sample_every = max(1, int(round(1e-3 / dt)))

    n_levels = 2 if pot.mode == "two_level" else 3
    packet = build_initial_packet(p, g, n_levels=n_levels)
    stepper = make_stepper(pot, g)
    stepper.load(packet.data)

    eps = _draw_threshold(rng)
    jump_log = []
    u_iter = iter(u_override) if u_override is not None else None

    def observe(step):
        if observer is not None:
            f = SpinorField(stepper.field(), g, "position").normalized()
            observer(step, step * dt, f)

    observe(0)
    step = 0
    next_sample = sample_every
    while step < n_steps:
        target = min(next_sample, n_steps)
        while step < target:
            if refine_jumps:
                pre = stepper.field()
            taken, jumped = stepper.advance(1 if refine_jumps else target - step, eps)
            step += taken
            if stepper.survival > 1.0 + 1e-6:
                raise EngineError(
                    f"numerical blow-up: survival = {stepper.survival} at step {step}")
            if jumped:
                u = next(u_iter) if u_iter is not None else sample_recoil(rng)
                t_jump = step * dt
                if refine_jumps:
                    t_jump, _ = _refine_jump_time(p, pot, g, pre, eps, step)
                psi = stepper.field()
                reset_array(psi, u, pot, g)
                stepper.load(psi)
                jump_log.append((t_jump, u))
                eps = _draw_threshold(rng)
        if step == next_sample:
            observe(step)
            next_sample += sample_every
    if observer is not None and step % sample_every != 0:
        observe(step)

    return TrajectoryRecord(jump_log=jump_log,
                            final=SpinorField(stepper.field(), g, "position"),
                            survival=stepper.survival, steps=step)
