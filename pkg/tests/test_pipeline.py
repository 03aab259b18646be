import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from slblab.ballsim import (
    SimConfig, SplitCounts, episode_seed, generate_dataset, make_features,
    simulate_episode,
)
from slblab.learners import MlpConfig
from slblab.pipeline import (
    BALL_CAUSES, ConstantITM, EffectEvent, ExperimentSpec, NoiseSpec, OracleITM, ResultTable,
    RuleESD, ball_plan, ball_task_assembler, build_selflabeled_dataset, detect_effect_events,
    episode_events, incremental_retrain, infer_times, itm_scores, method_noise,
    nested_kfold, pseudo_label_baseline, run_experiment, sample_cause_window,
    stratified_folds, train_ball_itms,
)
from slblab.streams import Stream

CFG = SimConfig()
THR = 30.0
FAST = MlpConfig(layer_widths=(16, 16), epochs=40, batch_size=32, learning_rate=3e-3)
PLAN = ball_plan()


@pytest.fixture(scope="module")
def labeled_episodes():
    return [simulate_episode(CFG, episode_seed(0, 21, i)).with_threshold(THR) for i in range(100)]


def test_empty_stream_has_no_events():
    empty = Stream(np.zeros(0), np.zeros((0, 17)))
    assert detect_effect_events(empty, RuleESD(THR)) == []


def test_rule_esd_matches_ground_truth(labeled_episodes):
    esd = RuleESD(THR)
    for ep in labeled_episodes:
        events = detect_effect_events(ep.effect_stream, esd)
        assert len(events) == 1
        ev = events[0]
        assert ev.label == ep.class_label and ev.t_detect == ep.settle_time
        assert np.array_equal(ev.effect_features, make_features(ep)[1])


def _events_and_streams(episodes):
    events, streams = [], {}
    for k, ep in enumerate(episodes):
        ev = detect_effect_events(ep.effect_stream, RuleESD(THR), event_prefix=f"{k}:")[0]
        events.append(replace(ev, truth=dict(zip(BALL_CAUSES, ep.true_interaction_times))))
        streams[ev.event_id] = {c: ep.cause_stream(i) for i, c in enumerate(BALL_CAUSES)}
    return events, streams


def test_plan_binds_both_balls():
    assert set(PLAN.causes) == set(BALL_CAUSES)


def test_oracle_itm_passes_truth_through(labeled_episodes):
    events, _ = _events_and_streams(labeled_episodes[:10])
    oracle = {c: OracleITM(c) for c in BALL_CAUSES}
    for ev, ep in zip(events, labeled_episodes):
        t = infer_times(ev, PLAN, oracle)
        assert (t["ball1"], t["ball2"]) == ep.true_interaction_times


def test_missing_itm_is_an_error(labeled_episodes):
    events, _ = _events_and_streams(labeled_episodes[:1])
    with pytest.raises(KeyError):
        infer_times(events[0], PLAN, {"ball1": ConstantITM()})


def test_negative_predictions_clamp_to_zero(labeled_episodes):
    events, _ = _events_and_streams(labeled_episodes[:1])
    itms = {c: ConstantITM(-2.0) for c in BALL_CAUSES}
    t, flags = infer_times(events[0], PLAN, itms, return_flags=True)
    assert t == {"ball1": 0.0, "ball2": 0.0} and all(flags.values())


def test_constant_zero_itm_samples_at_detection(labeled_episodes):
    events, streams = _events_and_streams(labeled_episodes[:10])
    zero = {c: ConstantITM(0.0) for c in BALL_CAUSES}
    for ex, ev in zip(build_selflabeled_dataset(events, PLAN, zero, streams), events):
        assert all(t == 0.0 for t in ex.provenance.inferred_times.values())
        assert all(s == ev.t_detect for s in ex.provenance.sampled_timestamps.values())


def test_sample_cause_window_examples():
    s = Stream(np.arange(10) * 0.5, np.arange(20.0).reshape(10, 2))
    first = sample_cause_window(s, 4.0, 4.0)
    assert first.t == 0.0 and not first.clamped
    assert sample_cause_window(s, 3.1, 0.0).t == 3.0
    assert sample_cause_window(s, 3.25, 0.0).t == 3.0  # tie goes earlier
    low = sample_cause_window(s, 1.0, 5.0)
    high = sample_cause_window(s, 9.0, 0.0)
    assert (low.t, low.clamped) == (0.0, True) and (high.t, high.clamped) == (4.5, True)


def test_true_times_recover_release_states(labeled_episodes):
    tol = CFG.penalty_velocity * CFG.timestep
    for ep in labeled_episodes:
        for i in range(2):
            s = sample_cause_window(ep.cause_stream(i), ep.settle_time,
                                    ep.true_interaction_times[i])
            assert np.all(np.abs(s.features[:3] - ep.initial_positions[i]) <= tol)
            assert abs(s.t - ep.drop_times[i]) <= CFG.timestep / 2


def test_noise_off_reproduces_truth(labeled_episodes):
    events, streams = _events_and_streams(labeled_episodes)
    oracle = {c: OracleITM(c) for c in BALL_CAUSES}
    tol = CFG.penalty_velocity * CFG.timestep
    a = build_selflabeled_dataset(events, PLAN, oracle, streams, NoiseSpec(),
                                  np.random.default_rng(1), ball_task_assembler)
    b = build_selflabeled_dataset(events, PLAN, oracle, streams, NoiseSpec(),
                                  np.random.default_rng(2), ball_task_assembler)
    for ex, ex2, ep in zip(a, b, labeled_episodes):
        x_true, _ = make_features(ep)
        assert ex.label == ep.class_label
        assert np.all(np.abs(ex.input - x_true) <= 2 * tol + 1e-12)
        assert np.array_equal(ex.input, ex2.input) and ex.label == ex2.label
        assert ex.provenance.event_id.startswith(f"{labeled_episodes.index(ep)}:")


def _synthetic(n=4000, label=3):
    t = np.linspace(0.0, 500.0, 5001)
    stream = Stream(t, np.column_stack([t, t, t]))
    events = [EffectEvent(400.0, label, np.zeros(18), f"e{i}") for i in range(n)]
    streams = {e.event_id: {c: stream for c in BALL_CAUSES} for e in events}
    return events, streams


def test_full_esd_noise_is_uniform():
    events, streams = _synthetic()
    itms = {c: ConstantITM(10.0) for c in BALL_CAUSES}
    out = build_selflabeled_dataset(events, PLAN, itms, streams, NoiseSpec(esd_fraction=1.0),
                                    np.random.default_rng(0))
    counts = np.bincount([e.label for e in out], minlength=8)
    assert stats.chisquare(counts).pvalue > 0.01


@pytest.mark.parametrize("fraction", [0.1, 0.4, 0.7])
def test_esd_noise_rate(fraction):
    events, streams = _synthetic()
    itms = {c: ConstantITM(10.0) for c in BALL_CAUSES}
    out = build_selflabeled_dataset(events, PLAN, itms, streams,
                                    NoiseSpec(esd_fraction=fraction), np.random.default_rng(5))
    altered = np.mean([e.label != e.provenance.original_label for e in out])
    assert abs(altered - fraction * 7 / 8) <= 0.03


def test_itm_noise_is_folded_normal():
    events, streams = _synthetic()
    itms = {c: ConstantITM(100.0) for c in BALL_CAUSES}
    noise = NoiseSpec(itm_error_mean=50.0, itm_error_variance=25.0)
    out = build_selflabeled_dataset(events, PLAN, itms, streams, noise, np.random.default_rng(3))
    err = np.array([[e.provenance.inferred_times[c] - 100.0 for c in BALL_CAUSES] for e in out])
    sd = math.sqrt(25.0)
    expected = stats.foldnorm(c=50.0 / sd, scale=sd).mean()
    assert abs(np.mean(np.abs(err)) - expected) <= 0.1 * expected
    # Random sign: roughly half the errors are negative, independently per cause.
    assert abs(np.mean(err < 0) - 0.5) <= 0.03
    assert abs(np.corrcoef(np.sign(err[:, 0]), np.sign(err[:, 1]))[0, 1]) <= 0.05


def test_noise_variants_are_nested():
    events, streams = _synthetic(n=2000)
    itms = {c: ConstantITM(10.0) for c in BALL_CAUSES}
    lo = build_selflabeled_dataset(events, PLAN, itms, streams, NoiseSpec(esd_fraction=0.1),
                                   np.random.default_rng(9))
    hi = build_selflabeled_dataset(events, PLAN, itms, streams, NoiseSpec(esd_fraction=0.4),
                                   np.random.default_rng(9))
    lo_bad = {i for i, e in enumerate(lo) if e.label != 3}
    hi_bad = {i for i, e in enumerate(hi) if e.label != 3}
    assert lo_bad <= hi_bad


def test_noise_spec_protocol_and_names():
    assert NoiseSpec.itm_protocol(50.0) == NoiseSpec(0.0, 50.0, 25.0, 0)
    assert NoiseSpec().is_off
    with pytest.raises(ValueError):
        NoiseSpec(esd_fraction=1.5)
    base = NoiseSpec(seed=4)
    assert method_noise("slb", base) == base
    assert method_noise("slb_esd0.1", base).esd_fraction == 0.1
    assert method_noise("slb_esd0.2_itm10", base) == NoiseSpec(0.2, 10.0, 5.0, 4)
    assert method_noise("fs", base) is None


def _blob_data(n, seed, shift=0.0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 8
    centers = np.array([[math.cos(k * math.pi / 4), math.sin(k * math.pi / 4)] for k in range(8)])
    X = centers[y] * 3 + rng.normal(0, 0.6, size=(n, 2)) + shift
    return X, y


def test_curve_shapes_and_fs_gain():
    pre = _blob_data(48, 0)
    incs = [_blob_data(96, 10 + j) for j in range(3)]
    ev = _blob_data(400, 99)
    assert len(incremental_retrain(pre, [], ev, FAST)) == 1
    finals = []
    for seed in range(3):
        cfg = replace(FAST, seed=seed)
        curve = incremental_retrain(pre, incs, ev, cfg)
        assert len(curve) == 4 and all(0 <= a <= 1 for a in curve)
        finals.append(curve[-1] - curve[0])
    assert np.mean(finals) >= 0


def test_pseudo_label_admission():
    pre = _blob_data(48, 0)
    unl = [_blob_data(64, 20 + j)[0] for j in range(2)]
    ev = _blob_data(200, 99)
    flat = pseudo_label_baseline(pre, unl, 1.0, FAST, ev)
    assert flat[0] == flat[1] == flat[2]
    all_in = pseudo_label_baseline(pre, unl, 0.0, FAST, ev)
    assert len(all_in) == 3
    # With every prediction admitted, the last model saw pretrain plus both increments.
    ref = incremental_retrain(pre, [], ev, FAST)
    assert all_in[0] == ref[0]
    with pytest.raises(ValueError):
        pseudo_label_baseline(pre, unl, 1.5, FAST, ev)


def test_stratified_folds():
    labels = np.repeat(np.arange(8), 2)
    folds = stratified_folds(labels, 2, np.random.default_rng(0))
    assert [len(f) for f in folds] == [8, 8]
    assert set(folds[0]).isdisjoint(folds[1])
    assert sorted(np.concatenate(folds)) == list(range(16))
    for f in folds:
        assert sorted(labels[f]) == list(range(8))
    with pytest.raises(ValueError):
        stratified_folds(labels, 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        stratified_folds(labels, 1, np.random.default_rng(0))


def test_aggregate_is_cell_mean():
    rows = [(0, 0, 0, "slb", 0.5), (0, 1, 0, "slb", 0.7), (1, 0, 0, "slb", 0.9),
            (0, 0, 1, "slb", 0.6), (0, 1, 1, "slb", 0.8), (1, 0, 1, "slb", 1.0)]
    table = ResultTable(rows)
    agg = table.aggregate()
    assert agg[0][:3] == ("slb", 0, pytest.approx(0.7))
    assert agg[1][2] == pytest.approx(0.8) and agg[1][4] == 3
    assert agg[0][3] == pytest.approx(np.std([0.5, 0.7, 0.9]))
    assert table.final("slb") == pytest.approx(0.8)
    assert ResultTable.from_csv(table.to_csv()).rows == rows


@pytest.fixture(scope="module")
def small_ds():
    counts = SplitCounts(pretrain=48, increment=24, n_increments=2, test=32, validation=16)
    return generate_dataset(replace(CFG, wind_magnitude=0.5), counts, magnitude_threshold=THR)


def test_episode_events_carry_truth(small_ds):
    events, streams = episode_events(small_ds, small_ds.increments[0])
    assert len(events) == 24
    for ev, s in zip(events, small_ds.increments[0]):
        assert ev.label == s.label
        assert (ev.truth["ball1"], ev.truth["ball2"]) == s.true_times
        assert set(streams[ev.event_id]) == set(BALL_CAUSES)


def test_run_experiment_table(small_ds):
    spec = ExperimentSpec(methods=("fs", "slb", "pseudo", "slb_esd0.5"), seeds=(0, 1),
                          mlp=FAST, oracle_itm=True)
    table = run_experiment(small_ds, spec)
    assert len(table.rows) == 4 * 2 * 2 * 3  # methods x folds x seeds x (increments + 1)
    for m in spec.methods:
        curve = table.curve(m)
        assert len(curve) == 3 and np.all((0 <= curve) & (curve <= 1))
    # Every method in a cell starts from the same increment-0 model.
    starts = {(f, s): set() for f in (0, 1) for s in (0, 1)}
    for f, s, i, m, a in table.rows:
        if i == 0:
            starts[(f, s)].add(a)
    assert all(len(v) == 1 for v in starts.values())
    assert len(table.info["pseudo_thresholds"]) == 4
    again = nested_kfold(small_ds, spec, k_outer=2, seeds=(0, 1))
    assert again.to_csv() == table.to_csv()


def test_experiment_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(methods=("magic",))
    with pytest.raises(ValueError):
        ExperimentSpec(k_outer=1)
    spec = ExperimentSpec(mlp=FAST, noise=NoiseSpec(0.1, 2.0, 1.0, 3))
    assert ExperimentSpec.from_dict(spec.to_dict()) == spec


def test_learned_itms_generalize():
    itms = train_ball_itms(CFG, THR, n_episodes=2000, kind="knn", params={"k": 5})
    scores = itm_scores(itms, CFG, THR, n_episodes=300)
    for cause, (r2, mae) in scores.items():
        assert r2 >= 0.8, (cause, r2, mae)
