import numpy as np
import pytest

from ringcool.classical import (ClassicalParticle, analytic_crossings,
                                analytic_total_time, evolve_particle,
                                packet_position_std, run_classical_ensemble,
                                sample_initial, wrap)
from ringcool.params import parse_config


@pytest.fixture(scope="module")
def p():
    return parse_config("mode = classical")


def test_analytic_crossings_worked_example():
    assert analytic_crossings(0.05, 0.018) == 2


def test_analytic_crossings_edges():
    assert analytic_crossings(0.009, 0.018) == 0          # below threshold
    assert analytic_crossings(3 * 0.018, 0.018) == 3      # strict at the tie
    with pytest.raises(ValueError):
        analytic_crossings(-1.0, 0.018)


def test_analytic_total_time_values(p):
    t = analytic_total_time(0.05, -200e-6, p, v_T=0.018)
    t0 = 280e-6 / 0.05
    tn = 400e-6 * (1 / 0.032 + 1 / 0.014)
    assert t0 == pytest.approx(5.6e-3)
    assert tn == pytest.approx(41.07e-3, rel=1e-3)
    assert t == pytest.approx(t0 + tn, rel=1e-12)
    # n = 0 launch
    assert analytic_total_time(0.01, -200e-6, p, v_T=0.018) == pytest.approx(280e-6 / 0.01)
    with pytest.raises(ValueError, match="divergent"):
        analytic_total_time(2 * 0.018, -200e-6, p, v_T=0.018)


def test_event_driven_matches_formula(p):
    rng = np.random.default_rng(0)
    for v in (0.04, 0.05, 0.08):
        pt = evolve_particle(ClassicalParticle(x=-200e-6, v=v), p, 10.0, rng, v_T=0.018)
        expect = analytic_total_time(v, -200e-6, p, v_T=0.018)
        assert pt.trapped
        assert pt.crossings == analytic_crossings(v, 0.018)
        assert pt.trap_time == pytest.approx(expect, rel=1e-9)


def test_worked_example_two_crossings(p):
    rng = np.random.default_rng(0)
    pt = evolve_particle(ClassicalParticle(x=-200e-6, v=0.05), p, 10.0, rng, v_T=0.018)
    assert pt.trapped and pt.crossings == 2


def test_below_threshold_traps_at_first_arrival(p):
    rng = np.random.default_rng(0)
    pt = evolve_particle(ClassicalParticle(x=-200e-6, v=0.01), p, 10.0, rng, v_T=0.018)
    assert pt.trapped and pt.crossings == 0
    assert pt.trap_time == pytest.approx(280e-6 / 0.01)


def test_first_arrival_time(p):
    rng = np.random.default_rng(0)
    pt = evolve_particle(ClassicalParticle(x=-200e-6, v=0.05), p, 5.6e-3 + 1e-9, rng,
                         v_T=0.018)
    # just past the first crossing: one subtraction applied, still moving
    assert not pt.trapped and pt.crossings == 1
    assert pt.v == pytest.approx(0.032)


def test_anticlockwise_reflection(p):
    rng = np.random.default_rng(0)
    # moving left from the seam: wraps, reflects at the diode, comes back around
    pt = evolve_particle(ClassicalParticle(x=-200e-6, v=-0.05), p, 120e-6 / 0.05 + 1e-9,
                         rng, v_T=0.018)
    assert not pt.trapped and pt.crossings == 0 and pt.v == pytest.approx(0.05)


def test_energy_rule_bookkeeping(p):
    # with the energy rule, v^2 after k crossings is v0^2 - k v_T^2 exactly
    rng = np.random.default_rng(0)
    v0, v_T = 0.05, 0.018
    pv = p.with_overrides(v_rec=0.0)
    horizon = analytic_total_time(v0, -200e-6, p, v_T=v_T)  # enough for 2+ crossings
    pt = evolve_particle(ClassicalParticle(x=-200e-6, v=v0), pv, horizon * 0.9, rng,
                         rule="energy", v_T=v_T)
    k = pt.crossings
    assert k >= 1
    assert pt.v ** 2 == pytest.approx(v0 ** 2 - k * v_T ** 2, rel=1e-12)


def test_sampling_moments(p):
    rng = np.random.default_rng(12)
    n = 100_000
    pts = [sample_initial(p, rng) for _ in range(n)]
    v = np.array([pt.v for pt in pts])
    assert v.mean() == pytest.approx(p.v0, abs=3 * p.delta_v / np.sqrt(n))
    assert v.std() == pytest.approx(p.delta_v, rel=5e-3)
    assert packet_position_std(p) == pytest.approx(40e-6, rel=1e-3)
    for pt in pts[:100]:
        assert -p.ring_length / 2 <= pt.x < p.ring_length / 2


def test_correlated_sampling(p):
    rng = np.random.default_rng(13)
    pts = [sample_initial(p, rng, correlated=True) for _ in range(20_000)]
    v = np.array([pt.v for pt in pts])
    x = np.array([pt.x for pt in pts])
    # unwrap around the seam for the correlation estimate
    xu = np.where(x > 0, x - p.ring_length, x)
    slope = np.cov(xu, v)[0, 1] / np.var(v)
    assert slope == pytest.approx(p.t0, rel=0.05)


def test_recoil_kicks_zero_mean(p):
    from ringcool.params import derive_trap_velocity
    pv = p.with_overrides(v_rec=0.035)
    v_T = derive_trap_velocity(pv)
    rng = np.random.default_rng(14)
    # ensemble-averaged velocity change at the first arrival, trapped included
    kicks = []
    for _ in range(20_000):
        before = 0.05
        pt = evolve_particle(ClassicalParticle(x=79.9e-6, v=before), pv, 1e-5, rng)
        kicks.append(pt.v - before + (0.0 if pt.trapped else v_T))
    kicks = np.asarray(kicks)
    assert abs(kicks.mean()) < 4 * kicks.std() / np.sqrt(len(kicks))


def test_ensemble_monotone_and_deterministic(p):
    pe = p.with_overrides(n_trajectories=2000)
    res1 = run_classical_ensemble(pe)
    res2 = run_classical_ensemble(pe)
    assert np.array_equal(res1.trapping_probability, res2.trapping_probability)
    assert np.all(np.diff(res1.trapping_probability) >= 0)
    assert res1.trapping_probability[0] == 0.0
    assert res1.trapping_probability[-1] <= 1.0


def test_ensemble_zero_horizon(p):
    res = run_classical_ensemble(p.with_overrides(n_trajectories=100, t_final=0.0))
    assert res.trapping_probability[-1] == 0.0


def test_delta_v_limit_all_same_crossings(p):
    # delta_v -> 0: every particle behaves like the mean-velocity one
    rng = np.random.default_rng(15)
    pv = p.with_overrides(v_rec=0.0)
    n_expect = analytic_crossings(p.v0, 0.0177401924)
    for _ in range(20):
        pt = ClassicalParticle(x=rng.uniform(-2e-4, 2e-4), v=p.v0)
        pt = evolve_particle(pt, pv, 10.0, rng)
        assert pt.trapped and pt.crossings == n_expect


def test_wrap():
    assert wrap(2.1e-4, 4e-4) == pytest.approx(-1.9e-4)
    assert wrap(-2.0e-4, 4e-4) == pytest.approx(-2.0e-4)
