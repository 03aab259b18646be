import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slblab import _backend
from slblab.ballsim import (
    N_CLASSES, N_ITM, SimConfig, SplitCounts, calibrate_threshold, categorize_effect,
    collision_rate, dataset_from_csv, dataset_to_csv, effect_row, episode_seed,
    generate_dataset, make_features, simulate_episode, simulate_from_initial, task_input,
)
from slblab.errors import QuotaError

CFG = SimConfig()
STILL = replace(CFG, penalty_velocity=0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(ball2_height=(10.0, 20.0))  # overlaps ball 1's range
    with pytest.raises(ValueError):
        SimConfig(spawn_region_half_extent=80.0)
    with pytest.raises(ValueError):
        SimConfig(restitution=1.0)
    with pytest.raises(ValueError):
        SimConfig(timestep=0.05)
    assert SimConfig.from_dict(CFG.to_dict()) == CFG
    with pytest.raises(ValueError):
        SimConfig.from_dict({"colour": 1})


def test_equal_heights_far_apart_stay_put():
    pos = [[-8.0, 3.0, 12.0], [8.0, -3.0, 12.0]]
    ep = simulate_from_initial(STILL, pos, np.zeros((2, 3)), (1, 1))
    assert ep.settled and not ep.collided
    assert np.abs(ep.final_positions[:, :2] - np.array(pos)[:, :2]).max() <= 1e-9


def test_concentric_drop_collides():
    pos = [[1.0, 2.0, 10.0], [1.5, 2.0, 25.0]]
    ep = simulate_from_initial(STILL, pos, np.zeros((2, 3)), (1, 1))
    assert ep.collided and ep.n_impacts >= 1


def test_same_seed_is_bit_identical():
    a = simulate_episode(CFG, 1234)
    b = simulate_episode(CFG, 1234)
    assert np.array_equal(a.states, b.states)
    assert (a.drop_steps, a.rebound_counts, a.collided) == (b.drop_steps, b.rebound_counts,
                                                             b.collided)


def test_wind_changes_the_effect():
    windy = replace(CFG, wind_magnitude=0.5)
    changed = 0
    for i in range(10):
        seed = episode_seed(0, 9, i)
        a = simulate_episode(CFG, seed).distance_vector
        b = simulate_episode(windy, seed).distance_vector
        changed += not np.allclose(a, b, rtol=0, atol=1e-12)
    assert changed == 10


@pytest.mark.parametrize("vec,thr,label", [
    ((3, 0, 0), 2, 1), ((0.5, 0.5, 0), 2, 0), ((-1, -1, 7), 1, 5),
    ((0, 2, 0), 1, 3), ((-2, 0, 0), 1, 5), ((0, -2, 0), 1, 7), ((1, -1e-9, 0), 5, 6),
])
def test_categorize_examples(vec, thr, label):
    assert categorize_effect(vec, thr) == label


def test_categorize_degenerate():
    with pytest.warns(RuntimeWarning):
        assert categorize_effect((0.0, 0.0, 3.0), 1.0) == 0


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1e-3, 100))
def test_categorize_matches_angle_and_magnitude(dx, dy, thr):
    if min(abs(dx), abs(dy)) <= 1e-9 * max(abs(dx), abs(dy), 1e-300):
        return  # sector boundaries follow the angle, checked in the examples
    c = categorize_effect((dx, dy, 0.0), thr)
    assert 0 <= c < N_CLASSES
    assert c % 2 == int(math.hypot(dx, dy) >= thr)
    q = c // 2
    assert (dx >= 0 if q in (0, 3) else dx <= 0)
    assert (dy >= 0 if q in (0, 1) else dy <= 0)


def test_task_input_examples():
    assert np.array_equal(task_input([1, 2, 3], [1, 2, 3], 0.2, 0.2), np.zeros(6))
    x = task_input([0, 0, 10], [3, 4, 20], 0.0, 0.0)
    assert np.allclose(x, [math.sqrt(125), 5, 3, 4, 10, 0], rtol=0, atol=1e-12)


def test_make_features_layout():
    ep = simulate_episode(CFG, 77).with_threshold(20.0)
    x, f = make_features(ep)
    assert x.shape == (6,) and f.shape == (N_ITM,)
    fp, fv = ep.final_positions, ep.final_velocities
    assert np.array_equal(f[:6], fp.ravel()) and np.array_equal(f[6:12], fv.ravel())
    assert np.array_equal(f[12:15], fp[1] - fp[0])
    assert f[15] == ep.class_label and tuple(f[16:]) == ep.rebound_counts
    assert ep.class_label == categorize_effect(ep.distance_vector, 20.0)
    assert np.isclose(x[-1], ep.drop_times[1] - ep.drop_times[0])
    assert np.array_equal(ep.effect_stream.values[0], effect_row(ep.states[-1],
                                                                 ep.rebound_counts))
    with pytest.raises(ValueError):
        make_features(simulate_episode(CFG, 77))  # unlabeled


def test_unsettled_episode_is_flagged():
    short = replace(CFG, max_duration=1.0)
    ep = simulate_episode(short, 3)
    assert not ep.settled and ep.settle_time == pytest.approx(1.0)
    with pytest.raises(ValueError):
        make_features(ep.with_threshold(10.0))


@pytest.fixture(scope="module")
def episodes():
    return [simulate_episode(CFG, episode_seed(0, 11, i)) for i in range(60)]


def test_ground_truth_sanity(episodes):
    for ep in episodes:
        t1, t2 = ep.true_interaction_times
        assert ep.settled
        assert 0 < t2 <= t1 <= CFG.max_duration
        assert ep.settle_time >= max(ep.drop_times)
        assert ep.drop_times[1] - ep.drop_times[0] <= CFG.drop_interval[1] + CFG.timestep


def test_ball_two_starts_above(episodes):
    for ep in episodes:
        z = ep.initial_positions[:, 2]
        assert z[1] > z[0]


def test_energy_non_increasing_across_bounces(episodes):
    g = CFG.gravity
    for ep in episodes:
        st_ = ep.states
        energy = (0.5 * (st_[:, :, 3:] ** 2).sum(axis=2) + g * st_[:, :, 2]).sum(axis=1)
        vz = st_[:, :, 5]
        bounces = np.flatnonzero(((vz[:-1] < 0) & (vz[1:] > 0)).any(axis=1)) + 1
        assert np.all(np.diff(energy[bounces]) <= 1e-12)
        if not ep.collided:
            assert np.all(np.diff(energy) <= 1e-12)


@settings(max_examples=200)
@given(st.lists(st.floats(-5, 5), min_size=12, max_size=12), st.floats(0.5, 3.0))
def test_collision_conserves_momentum(vals, radius):
    p1 = np.zeros(3)
    offset = np.array(vals[:3])
    norm = np.linalg.norm(offset)
    if norm < 1e-3:
        return
    p2 = offset / norm * (1.9 * radius)
    v1, v2 = np.array(vals[3:6]), np.array(vals[6:9])
    for force in (False, True):
        q1, w1, q2, w2, _ = _backend.resolve_pair(p1, v1, p2, v2, radius, force_python=force)
        assert np.allclose(np.add(w1, w2), v1 + v2, rtol=0, atol=1e-9)
        e_before = (v1 @ v1 + v2 @ v2)
        e_after = np.dot(w1, w1) + np.dot(w2, w2)
        assert e_after == pytest.approx(e_before, rel=1e-9, abs=1e-9)
        assert np.linalg.norm(np.subtract(q2, q1)) == pytest.approx(2 * radius, rel=1e-9)


def test_penalty_drift_before_release(episodes):
    dt = CFG.timestep
    for ep in episodes[:10]:
        stream = ep.cause_stream_1
        k = ep.drop_steps[0] // 2
        for d_steps in (1, 5, 10):
            if k + d_steps >= ep.drop_steps[0]:
                continue
            i, _ = stream.nearest_index(ep.times[k] + d_steps * dt)
            j, _ = stream.nearest_index(ep.times[k] - d_steps * dt)
            moved = np.linalg.norm(stream.values[i, :2] - stream.values[j, :2])
            assert moved == pytest.approx(CFG.penalty_velocity * 2 * d_steps * dt, rel=1e-9)


@pytest.mark.skipif(not _backend.COMPILED, reason="compiled kernels not built")
def test_python_kernel_matches_compiled():
    for i in range(15):
        seed = episode_seed(5, 0, i)
        a = simulate_episode(replace(CFG, wind_magnitude=0.5), seed)
        b = simulate_episode(replace(CFG, wind_magnitude=0.5), seed, force_python=True)
        assert np.array_equal(a.states, b.states)
        assert (a.rebound_counts, a.collided, a.n_impacts) == (b.rebound_counts, b.collided,
                                                                b.n_impacts)


def test_collision_rate_band():
    assert 0.3 <= collision_rate(CFG, n=1000) <= 0.7


def test_auto_threshold_is_median():
    thr = calibrate_threshold(CFG, n=41)
    d = [math.hypot(*simulate_episode(CFG, episode_seed(0, 0, i)).distance_vector[:2])
         for i in range(41)]
    assert thr == sorted(d)[20]


@pytest.fixture(scope="module")
def tiny():
    return generate_dataset(replace(CFG, wind_magnitude=0.5), SplitCounts(pretrain=8, increment=8, n_increments=2, test=8, validation=8))


def test_minimum_balanced_dataset(tiny):
    for split in [tiny.pretrain, tiny.validation, tiny.test, *tiny.increments]:
        assert sorted(s.label for s in split) == list(range(N_CLASSES))


def test_splits_are_disjoint(tiny):
    seeds = [s.seed for s in tiny.all_samples()]
    assert len(seeds) == len(set(seeds)) == 40


def test_samples_replay(tiny):
    for s in tiny.test[:4] + tiny.pretrain[:4]:
        ep = tiny.episode(s)
        x, f = make_features(ep)
        assert np.array_equal(x, s.task_input) and np.array_equal(f, s.itm_features)
        assert ep.class_label == s.label


def test_dataset_csv_round_trip(tiny):
    text = dataset_to_csv(tiny)
    back = dataset_from_csv(text, tiny.manifest())
    assert dataset_to_csv(back) == text
    assert back.threshold == tiny.threshold
    assert [s.seed for s in back.increments[1]] == [s.seed for s in tiny.increments[1]]


def test_quota_shortfall_is_reported():
    with pytest.raises(QuotaError) as err:
        generate_dataset(CFG, SplitCounts(pretrain=16, increment=8, n_increments=0, test=8, validation=8), magnitude_threshold=1e6,
                         budget_factor=2)
    assert err.value.shortfall


def test_split_counts_parse():
    assert SplitCounts.parse("16,8,24,8,3") == SplitCounts(16, 8, 3, 24, 8)
    assert SplitCounts.parse("16,8,24,8").n_increments == 1
    with pytest.raises(ValueError):
        SplitCounts.parse("1,2")
