"""Acceptance suite: one or more tests per criterion, reported in the terminal summary."""
import itertools
import json
import time

import networkx as nx
import numpy as np
import pytest

from slblab.ballsim import SimConfig, SplitCounts, episode_seed, generate_dataset, simulate_episode
from slblab.causal import (
    CausalGraph, CausalNode, Edge, TimeLaw, build_labeling_plan, chain_time, fork_time,
)
from slblab.cli import main
from slblab.cost import CostParams, reference_solves, slb_condition_rhs, solve_t_compute_threshold, with_t
from slblab.dslab import (
    CoupledSystem, ErrorFactors, closed_form_example, dy2slb_dxslb, itm_sampling_bounds,
    potential, simulate_flow, y2_learned,
)
from slblab.pipeline import ExperimentSpec, sample_cause_window

X1, X2, Y1 = 80.0, 100.0, 10.0


@pytest.fixture(scope="module")
def identity():
    return CoupledSystem.identity()


# 1 --------------------------------------------------------------------------

@pytest.mark.criterion(1, "coupled-system fixture values")
def test_fixture_reproduction(record_property):
    start = time.perf_counter()
    system = CoupledSystem.identity()
    b = itm_sampling_bounds(system, X1, X2, Y1, 0.5)
    elapsed = time.perf_counter() - start
    expected = {"y2_fs": 21.7376, "y2_high": 32.6064, "y2_low": 10.8688, "t_if_high": 0.2035,
                "t_if_low": 0.0079, "t_if_nominal": 0.11157, "y2_slb_nominal": 22.3373}
    worst = max(abs(getattr(b, k) - v) for k, v in expected.items())
    record_property("detail", f"max abs error {worst:.2e}, {elapsed * 1e3:.1f} ms")
    for key, value in expected.items():
        assert getattr(b, key) == pytest.approx(value, abs=1e-3), key
    assert b.within_bounds
    assert elapsed < 1.0


# 2 --------------------------------------------------------------------------

@pytest.mark.criterion(2, "closed form agrees with the generic evaluator")
def test_closed_form_grid(identity, record_property):
    start = time.perf_counter()
    worst = 0.0
    for x, xt, xe in itertools.product((20, 40, 60, 80, 95), (0.7, 1.0, 1.3), (0.7, 1.0, 1.3)):
        xi = ErrorFactors(xt, xe)
        ref = closed_form_example(x, X2, Y1, xi)
        got = y2_learned(identity, "SLB", x, X2, Y1, xi)
        worst = max(worst, abs(got - ref) / abs(ref))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max rel error {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-6
    assert elapsed < 5.0


# 3 --------------------------------------------------------------------------

@pytest.mark.criterion(3, "RK4 flow endpoint matches the FS mapping")
def test_flow_consistency(identity, record_property):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        x1 = rng.uniform(5, 90)
        x2 = rng.uniform(x1 + 1, 100)
        y1 = rng.uniform(-20, 20)
        t_end = potential(identity, "B", x2) - potential(identity, "B", x1)
        _, x, y = simulate_flow(identity, x1, y1, t_end, t_end / 2000)[-1]
        ref = y2_learned(identity, "FS", x1, x2, y1)
        assert x == pytest.approx(x2, rel=1e-6)
        worst = max(worst, abs(y - ref) / max(abs(ref), 1e-12))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max rel error {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-4
    assert elapsed < 5.0


# 4 --------------------------------------------------------------------------

@pytest.mark.criterion(4, "SLB mapping gradient matches finite differences")
def test_gradient_check(identity, record_property):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        x = rng.uniform(10, 99)
        y1 = rng.uniform(-20, 20)
        xi_t = rng.uniform(0.7, 1.3)
        h = 1e-5 * x
        f = lambda s: y2_learned(identity, "SLB", s, X2, y1, ErrorFactors(xi_t, 1.0))
        fd = (f(x + h) - f(x - h)) / (2 * h)
        d = dy2slb_dxslb(identity, x, X2, y1, xi_t)
        worst = max(worst, abs(d - fd) / max(abs(fd), 1e-12))
    record_property("detail", f"max rel error {worst:.2e}")
    assert worst <= 1e-4


# 5 --------------------------------------------------------------------------

def _graph(edges, laws, transient=(), hidden=()):
    ids = sorted({n for e in edges for n in e})
    nodes = [CausalNode(i, i not in hidden, "transient" if i in transient else "steady")
             for i in ids]
    return CausalGraph(nodes, [Edge(a, b, laws[(a, b)]) for a, b in edges])


@pytest.mark.criterion(5, "interaction-time calculus")
def test_time_calculus_golden():
    assert chain_time(TimeLaw.exact(2.0), TimeLaw.exact(3.0)) == TimeLaw.exact(5.0)
    assert fork_time([TimeLaw.exact(1.5), TimeLaw.exact(2.5)]) == TimeLaw.exact(2.5)
    chain = _graph([("A", "B"), ("B", "C")],
                   {("A", "B"): TimeLaw.exact(2.0), ("B", "C"): TimeLaw.exact(3.0)})
    plan = build_labeling_plan(chain, "A", "C")
    assert plan.binding("A").law == TimeLaw.exact(5.0)
    assert plan.binding("A").expression.op.value == "SUM"


@pytest.mark.criterion(5, "interaction-time calculus")
def test_confounder_plan():
    edges = [("A", "B"), ("A", "C"), ("B", "C")]
    for ab, bc, ac, needs_b in ((1, 2, 5, True), (1, 2, 3, False)):
        laws = {("A", "B"): TimeLaw.exact(ab), ("B", "C"): TimeLaw.exact(bc),
                ("A", "C"): TimeLaw.exact(ac)}
        plan = build_labeling_plan(_graph(edges, laws), "A", "C")
        assert {p.path for p in plan.path_notes} == {("A", "C"), ("A", "B", "C")}
        assert ("B" in plan.required_observers) is needs_b
        assert plan.binding("A").expression.op.value == "MAX"


@pytest.mark.criterion(5, "interaction-time calculus")
def test_random_dags_against_path_enumeration(record_property):
    rng = np.random.default_rng(55)
    checked = 0
    while checked < 50:
        n = int(rng.integers(3, 9))
        ids = [f"v{i}" for i in range(n)]
        edges, laws = [], {}
        for i, j in itertools.combinations(range(n), 2):
            if rng.random() < 0.45:
                edges.append((ids[i], ids[j]))
                laws[(ids[i], ids[j])] = TimeLaw.exact(float(rng.integers(1, 10)))
        g = nx.DiGraph(edges)
        pairs = [(a, b) for a in g for b in g if a != b and nx.has_path(g, a, b)]
        if not pairs:
            continue
        a, b = pairs[int(rng.integers(len(pairs)))]
        plan = build_labeling_plan(_graph(edges, laws), a, b)
        oracle = {tuple(p): sum(laws[e].mean for e in zip(p[:-1], p[1:]))
                  for p in nx.all_simple_paths(g, a, b)}
        assert {p.path: p.law.mean for p in plan.path_notes} == oracle
        assert plan.binding(a).law.mean == max(oracle.values())
        checked += 1
    record_property("detail", f"{checked} DAGs")


# 6 and 7 --------------------------------------------------------------------

EXPERIMENT_METHODS = ("fs", "slb", "pseudo", "slb_esd0.1", "slb_esd0.4")


@pytest.fixture(scope="module")
def experiment():
    start = time.perf_counter()
    ds = generate_dataset(SimConfig(wind_magnitude=0.5), SplitCounts())
    spec = ExperimentSpec(methods=EXPERIMENT_METHODS, k_outer=2, k_inner=2, seeds=(0, 1, 2))
    from slblab.pipeline import run_experiment
    table = run_experiment(ds, spec)
    return ds, table, time.perf_counter() - start


def _finals(table, method):
    """Final accuracy per (fold, seed) cell."""
    last = max(r[2] for r in table.rows if r[3] == method)
    return {(f, s): a for f, s, i, m, a in table.rows if m == method and i == last}


@pytest.mark.criterion(6, "desk-scale SLB beats no adaptation and pseudo-labeling")
def test_desk_scale_experiment(experiment, record_property):
    ds, table, elapsed = experiment
    assert len(ds.pretrain) == 320 and len(ds.increments) == 10
    assert all(len(inc) == 120 for inc in ds.increments)
    slb = table.curve("slb")
    pseudo = table.curve("pseudo")
    gain = slb[-1] - slb[0]
    record_property("detail", f"slb {slb[0]:.3f}->{slb[-1]:.3f}, pseudo final {pseudo[-1]:.3f}, "
                              f"fs final {table.final('fs'):.3f}, {elapsed:.0f} s")
    assert len(table.rows) == len(EXPERIMENT_METHODS) * 2 * 3 * 11
    assert gain >= 0.03
    assert slb[-1] >= pseudo[-1]
    assert elapsed <= 15 * 60


@pytest.mark.criterion(7, "ESD noise robustness")
def test_noise_robustness(experiment, record_property):
    _, table, _ = experiment
    clean = _finals(table, "slb")
    d1 = np.mean([clean[c] - a for c, a in _finals(table, "slb_esd0.1").items()])
    d4 = np.mean([clean[c] - a for c, a in _finals(table, "slb_esd0.4").items()])
    record_property("detail", f"degradation at 0.1: {100 * d1:.2f} pts, at 0.4: {100 * d4:.2f} pts")
    assert d1 <= 0.05
    assert d4 > d1


# 8 --------------------------------------------------------------------------

@pytest.mark.criterion(8, "true interaction times recover release positions")
def test_oracle_recovery(record_property):
    cfg = SimConfig(wind_magnitude=0.5)
    tol = cfg.penalty_velocity * cfg.timestep
    worst = 0.0
    for i in range(100):
        ep = simulate_episode(cfg, episode_seed(cfg.seed, 80, i))
        for ball in range(2):
            s = sample_cause_window(ep.cause_stream(ball), ep.settle_time,
                                    ep.true_interaction_times[ball])
            err = np.abs(np.asarray(s.features[:3]) - ep.initial_positions[ball]).max()
            worst = max(worst, err)
    record_property("detail", f"max component error {worst:.2e} (tolerance {tol:.2e})")
    assert worst <= tol


# 9 --------------------------------------------------------------------------

@pytest.mark.criterion(9, "cost-efficiency threshold solves")
def test_cost_solves(record_property):
    ref = reference_solves()
    extreme, nominal = ref["extreme"]["t_compute_hours"], ref["nominal"]["t_compute_hours"]
    record_property("detail", f"extreme {extreme:.5f} h, nominal {nominal:.5f} h")
    assert extreme == pytest.approx(0.0173, rel=0.05)
    assert nominal == pytest.approx(0.963, abs=1e-3)
    p = CostParams(alpha=0.9, beta=15.0)
    assert slb_condition_rhs(with_t(p, extreme)) == pytest.approx(0.25, rel=1e-12, abs=1e-12)
    q = CostParams(alpha=0.5, beta=1.0)
    assert slb_condition_rhs(with_t(q, solve_t_compute_threshold(q, 0.5))) == pytest.approx(
        0.5, rel=1e-12)


@pytest.mark.criterion(9, "cost-efficiency threshold solves")
def test_cost_note_is_printed(tmp_path, capsys):
    assert main(["cost", "--out", str(tmp_path)]) == 0
    assert "1.3 h" in capsys.readouterr().out


# 10 -------------------------------------------------------------------------

@pytest.mark.criterion(10, "manifest replay is byte-identical")
@pytest.mark.parametrize("command,args", [
    ("ds", ["--preset", "identity"]),
    ("plan", []),
    ("simulate", ["--counts", "16,8,16,16,2", "--seed", "9"]),
    ("cost", []),
    ("run", None),
])
def test_manifest_replay(command, args, tmp_path, capsys):
    if command == "run":
        data = tmp_path / "data"
        assert main(["simulate", "--counts", "16,8,16,16,2", "--out", str(data)]) == 0
        args = ["--dataset", str(data / "dataset.csv"), "--seeds", "0,1", "--epochs", "5",
                "--itm-kind", "knn", "--noise-esd", "0.3"]
    first = tmp_path / "first"
    assert main([command, *args, "--out", str(first)]) == 0
    manifest = json.loads((first / "manifest.json").read_text())
    second = tmp_path / "second"
    assert main([command, "--manifest", str(first / "manifest.json"), "--verify",
                 "--out", str(second)]) == 0
    for name in manifest["outputs"]:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
