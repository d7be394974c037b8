import numpy as np
import pytest

from ringcool.grid import RingGrid, SpinorField, build_initial_packet
from ringcool.observables import (EnsembleAccumulator, ObsConfig,
                                  TrajectoryObservables, density_pair,
                                  half_sample_error, level_densities,
                                  run_ensemble, trapping_probability_v,
                                  trapping_probability_x, velocity_axis_sorted)
from ringcool.params import parse_config, derive_trap_velocity


@pytest.fixture(scope="module")
def system():
    p = parse_config("mode = two_level")
    return p, RingGrid.from_params(p)


def test_trapping_x_inside_window(system):
    p, g = system
    pq = p.with_overrides(x0=100e-6, v0=0.0, delta_v=0.01, t0=0.0)
    f = build_initial_packet(pq, g)
    assert trapping_probability_x(f, g, p.x_min, p.x_max) == pytest.approx(1.0, abs=1e-10)
    # pure level-2 state contributes nothing
    f2 = SpinorField(np.stack([np.zeros_like(f.data[0]), f.data[0]]), g)
    assert trapping_probability_x(f2, g, p.x_min, p.x_max) == 0.0


def test_trapping_v_plane_waves(system):
    p, g = system
    v_T = derive_trap_velocity(p)
    f = SpinorField.zero(g)
    f.data[0] = 1.0
    assert trapping_probability_v(f.normalized(), g, p.mass, v_T) == pytest.approx(1.0, abs=1e-12)
    # plane wave at 5 cm/s sits far outside |v| < v_T
    k_idx = int(np.argmin(np.abs(g.velocity_axis(p.mass) - 0.05)))
    f5 = SpinorField.zero(g)
    f5.data[0] = np.exp(1j * g.k[k_idx] * g.x)
    assert trapping_probability_v(f5.normalized(), g, p.mass, v_T) == pytest.approx(0.0, abs=1e-12)


def test_trapping_v_strict_boundary(system):
    # a mode exactly on |v| = v_T is excluded
    p, g = system
    v7 = g.velocity_axis(p.mass)[7]
    f = SpinorField.zero(g)
    f.data[0] = np.exp(1j * g.k[7] * g.x)
    assert trapping_probability_v(f.normalized(), g, p.mass, v7) < 1e-15
    assert trapping_probability_v(f.normalized(), g, p.mass, v7 * 1.0001) == \
        pytest.approx(1.0, abs=1e-12)


def test_density_pair_integrals(system):
    p, g = system
    f = build_initial_packet(p, g)
    p_x, p_v = density_pair(f, g, p.mass)
    assert p_x.sum() * g.dx == pytest.approx(1.0, abs=1e-10)
    dv = np.diff(velocity_axis_sorted(g, p.mass))[0]
    assert p_v.sum() * dv == pytest.approx(1.0, abs=1e-10)
    # mid-decay three-level state: integrals equal 1 - level-3 weight
    f3 = SpinorField.zero(g, n_levels=3)
    f3.data[0] = f.data[0] * np.sqrt(0.7)
    f3.data[1] = f.data[0] * np.sqrt(0.2)
    f3.data[2] = f.data[0] * np.sqrt(0.1)
    p_x3, p_v3 = density_pair(f3, g, p.mass)
    assert p_x3.sum() * g.dx == pytest.approx(0.9, rel=1e-10)
    assert p_v3.sum() * dv == pytest.approx(0.9, rel=1e-10)


def test_initial_velocity_density_is_published_gaussian(system):
    p, g = system
    f = build_initial_packet(p, g)
    _, p_v = density_pair(f, g, p.mass)
    v = velocity_axis_sorted(g, p.mass)
    dv = v[1] - v[0]
    mean = (v * p_v).sum() * dv
    std = np.sqrt(((v - mean) ** 2 * p_v).sum() * dv)
    assert mean == pytest.approx(0.05, rel=1e-3)
    assert std == pytest.approx(0.04, rel=1e-3)


def _fake_obs(value, n=4):
    t = np.arange(n, dtype=float)
    arr = np.full(n, value, dtype=float)
    one = np.ones((2, 3))
    return TrajectoryObservables(times=t, P_Tx=arr, P_Tv=arr, map_times=t[:2],
                                 map_x=np.full((2, 4), value),
                                 map_v=np.full((2, 4), value),
                                 initial_x=one, initial_v=one, final_x=one * value,
                                 final_v=one, jump_t=np.array([0.1]),
                                 jump_u=np.array([value]))


def test_half_sample_error_arithmetic():
    acc = EnsembleAccumulator(2)
    acc.add(0, _fake_obs(0.9))
    acc.add(1, _fake_obs(1.0))
    err = half_sample_error(acc)
    assert err["P_Tx"][0] == pytest.approx(0.05)
    res = acc.finalize()
    assert res.P_Tx_mean[0] == pytest.approx(0.95)
    assert res.P_Tx_err[0] == pytest.approx(0.05)


def test_half_sample_error_identical_trajectories():
    acc = EnsembleAccumulator(4)
    for i in range(4):
        acc.add(i, _fake_obs(0.7))
    res = acc.finalize()
    assert np.all(res.P_Tx_err == 0)
    assert np.all(res.P_Tv_err == 0)


def test_accumulator_requires_two_for_error():
    acc = EnsembleAccumulator(1)
    acc.add(0, _fake_obs(0.5))
    with pytest.raises(ValueError):
        half_sample_error(acc)


def test_accumulator_is_mean_of_trajectories():
    vals = [0.2, 0.4, 0.6, 0.8, 1.0]
    acc = EnsembleAccumulator(len(vals))
    for i, v in enumerate(vals):
        acc.add(i, _fake_obs(v))
    res = acc.finalize()
    assert res.P_Tx_mean[0] == pytest.approx(np.mean(vals))
    assert res.final_x[0, 0] == pytest.approx(np.mean(vals))
    # first-half mean over floor(5/2) = 2 trajectories
    assert res.P_Tx_err[0] == pytest.approx(abs(np.mean(vals) - np.mean(vals[:2])))


@pytest.mark.slow
def test_small_ensemble_bounds_and_worker_invariance():
    p = parse_config("mode = two_level\nn_trajectories = 2\nt_final = 2e-3")
    cfg = ObsConfig(sample_every=5000)
    res1 = run_ensemble(p, cfg, workers=1)
    res2 = run_ensemble(p, cfg, workers=2)
    for res in (res1, res2):
        assert np.all((res.P_Tx_mean >= 0) & (res.P_Tx_mean <= 1))
        assert np.all((res.P_Tv_mean >= 0) & (res.P_Tv_mean <= 1))
    assert np.array_equal(res1.P_Tx_mean, res2.P_Tx_mean)
    assert np.array_equal(res1.final_v, res2.final_v)
    assert res1.jumps == res2.jumps
    # ensemble p(x) integrates to the mean levels-1+2 weight (= 1 in two_level)
    g = RingGrid.from_params(p)
    assert res1.final_x.sum() * g.dx == pytest.approx(1.0, abs=1e-9)
