"""Self-labeling engine and the incremental-retraining experiment.

An effect state detector (ESD) turns the effect stream into events. For each
event the plan's interaction-time models (ITMs) infer how long ago each cause
acted, the cause streams are sampled at ``t_detect - t_if``, and the sampled
cause states plus the ESD label form a training example for the task model.
"""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import ballsim
from .ballsim import N_CLASSES, DatasetSplit, Sample, SimConfig
from .causal import SelfLabelingPlan, ball_drop_graph, build_labeling_plan
from .learners import MlpConfig, metrics, train_classifier, train_regressor
from .streams import Stream, StreamSample

log = logging.getLogger("slblab.pipeline")


def _event(name: str, **data):
    if log.isEnabledFor(logging.INFO):
        log.info(json.dumps({"event": name, **data}, sort_keys=True))


# Events and ESDs ----------------------------------------------------------


@dataclass(frozen=True)
class EffectEvent:
    t_detect: float
    label: int
    effect_features: np.ndarray
    event_id: str = ""
    truth: Mapping[str, float] | None = None  # true interaction times, for oracles only


class RuleESD:
    """Labels a joint resting state by categorizing its planar distance vector.

    Expects effect rows laid out as in :func:`ballsim.effect_row`.
    """

    def __init__(self, magnitude_threshold: float):
        self.threshold = float(magnitude_threshold)

    def __call__(self, features) -> int | None:
        dvec = np.asarray(features)[12:15]
        label, _ = ballsim._categorize(dvec, self.threshold)
        return label

    def effect_features(self, row, label):
        return ballsim.itm_features_from_effect(np.asarray(row), label)


def detect_effect_events(effect_stream: Stream, esd, event_prefix: str = "") -> list[EffectEvent]:
    """One event per sample on which the ESD fires (returns a label, not None)."""
    events = []
    for i, s in enumerate(effect_stream):
        label = esd(s.features)
        if label is None:
            continue
        feats = (esd.effect_features(s.features, label) if hasattr(esd, "effect_features")
                 else np.asarray(s.features))
        events.append(EffectEvent(s.t, int(label), feats, f"{event_prefix}{i}"))
    return events


# ITMs ---------------------------------------------------------------------


class OracleITM:
    """Returns the ground-truth interaction time carried by the event."""

    def __init__(self, cause: str):
        self.cause = cause

    def predict_event(self, event: EffectEvent) -> float:
        if event.truth is None or self.cause not in event.truth:
            raise KeyError(f"event {event.event_id!r} has no ground truth for {self.cause!r}")
        return float(event.truth[self.cause])


class ConstantITM:
    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def predict(self, X):
        return np.full(len(np.atleast_2d(X)), self.value)


class LookupITM:
    """Precomputed times keyed by event id."""

    def __init__(self, times: Mapping[str, float]):
        self.times = dict(times)

    def predict_event(self, event: EffectEvent) -> float:
        return self.times[event.event_id]


def _predict_events(itm, events: Sequence[EffectEvent]) -> np.ndarray:
    if hasattr(itm, "predict_event"):
        return np.array([itm.predict_event(e) for e in events], dtype=float)
    X = np.array([e.effect_features for e in events], dtype=float)
    return np.asarray(itm.predict(X), dtype=float)


def infer_times_batch(events: Sequence[EffectEvent], plan: SelfLabelingPlan,
                      itms: Mapping[str, object]) -> tuple[dict, dict]:
    """Per-cause arrays of inferred times and of clamp-to-zero flags."""
    times, clamped = {}, {}
    for cause in plan.causes:
        if cause not in itms:
            raise KeyError(f"no ITM for plan binding {cause!r}")
        raw = _predict_events(itms[cause], events) if len(events) else np.zeros(0)
        clamped[cause] = raw < 0
        times[cause] = np.maximum(raw, 0.0)
    return times, clamped


def infer_times(event: EffectEvent, plan: SelfLabelingPlan, itms: Mapping[str, object],
                return_flags: bool = False):
    """Inferred interaction time per bound cause; negative predictions clamp to 0."""
    times, clamped = infer_times_batch([event], plan, itms)
    out = {c: float(v[0]) for c, v in times.items()}
    if return_flags:
        return out, {c: bool(v[0]) for c, v in clamped.items()}
    return out


def sample_cause_window(cause_stream: Stream, t_detect: float, t_if: float) -> StreamSample:
    """Cause sample nearest ``t_detect - t_if`` (ties earlier), clamped to the stream."""
    i, clamped = cause_stream.nearest_index(t_detect - t_if)
    s = cause_stream[i]
    return StreamSample(s.t, s.features, clamped)


# Self-labeled datasets ----------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    esd_fraction: float = 0.0
    itm_error_mean: float = 0.0
    itm_error_variance: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.esd_fraction <= 1:
            raise ValueError("esd_fraction must be in [0, 1]")
        if self.itm_error_mean < 0 or self.itm_error_variance < 0:
            raise ValueError("ITM error mean and variance must be nonnegative")

    @classmethod
    def itm_protocol(cls, mean: float, esd_fraction: float = 0.0, seed: int = 0) -> "NoiseSpec":
        """ITM error whose variance is half its mean."""
        return cls(esd_fraction, mean, mean / 2.0, seed)

    @property
    def is_off(self) -> bool:
        return self.esd_fraction == 0 and self.itm_error_mean == 0 and self.itm_error_variance == 0


@dataclass(frozen=True)
class Provenance:
    event_id: str
    inferred_times: Mapping[str, float]
    sampled_timestamps: Mapping[str, float]
    clamped: Mapping[str, bool]
    original_label: int


@dataclass(frozen=True)
class SelfLabeledExample:
    input: np.ndarray
    label: int
    provenance: Provenance


def ball_task_assembler(samples: Mapping[str, StreamSample], causes=("ball1", "ball2")):
    """Task input from the two sampled cause states, as ballsim.make_features does."""
    a, b = samples[causes[0]], samples[causes[1]]
    return ballsim.task_input(a.features[:3], b.features[:3], a.t, b.t)


def _concat_assembler(samples: Mapping[str, StreamSample]):
    return np.concatenate([np.asarray(samples[k].features, dtype=float) for k in sorted(samples)])


def build_selflabeled_dataset(events: Sequence[EffectEvent], plan: SelfLabelingPlan,
                              itms: Mapping[str, object],
                              streams: Mapping[str, Mapping[str, Stream]],
                              noise: NoiseSpec = NoiseSpec(), rng=None,
                              assemble: Callable | None = None,
                              n_classes: int = N_CLASSES) -> list[SelfLabeledExample]:
    """Assemble (input, label) pairs from events.

    ``streams[event_id][cause_id]`` is the cause stream of that event. Random
    draws happen for every event whether or not noise is on, so two noise
    levels with the same generator corrupt nested sets of events.
    """
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    assemble = assemble or _concat_assembler
    times, clamped0 = infer_times_batch(events, plan, itms)
    sd = math.sqrt(noise.itm_error_variance)
    out = []
    for k, ev in enumerate(events):
        inferred, stamps, clamped, picked = {}, {}, {}, {}
        for cause in plan.causes:
            eps = rng.normal(noise.itm_error_mean, sd)
            sign = -1.0 if rng.random() < 0.5 else 1.0
            t = float(times[cause][k]) + eps * sign
            if ev.event_id not in streams or cause not in streams[ev.event_id]:
                raise KeyError(f"no stream for cause {cause!r} of event {ev.event_id!r}")
            s = sample_cause_window(streams[ev.event_id][cause], ev.t_detect, t)
            inferred[cause] = t
            stamps[cause] = s.t
            clamped[cause] = bool(s.clamped or clamped0[cause][k])
            picked[cause] = s
        u = rng.random()
        redraw = int(rng.integers(0, n_classes))
        label = redraw if u < noise.esd_fraction else ev.label
        out.append(SelfLabeledExample(np.asarray(assemble(picked), dtype=float), int(label),
                                      Provenance(ev.event_id, inferred, stamps, clamped,
                                                 ev.label)))
    return out


# Ball-sim glue ------------------------------------------------------------

BALL_CAUSES = ("ball1", "ball2")


def ball_plan() -> SelfLabelingPlan:
    return build_labeling_plan(ball_drop_graph(), "ball1", "layout")


def episode_events(ds: DatasetSplit, samples: Sequence[Sample]):
    """Re-simulate samples; return their events and cause streams."""
    esd = RuleESD(ds.threshold)
    events, streams = [], {}
    for s in samples:
        ep = ds.episode(s)
        evs = detect_effect_events(ep.effect_stream, esd, event_prefix=f"{s.seed}:")
        for ev in evs:
            events.append(replace(ev, truth=dict(zip(BALL_CAUSES, ep.true_interaction_times))))
        streams.update({ev.event_id: {c: ep.cause_stream(i) for i, c in enumerate(BALL_CAUSES)}
                        for ev in evs})
    return events, streams


def itm_training_set(config: SimConfig, threshold: float, n_episodes: int, stream: int = 50):
    """Unperturbed episodes for ITM fitting: (features, times of ball 1, times of ball 2)."""
    cfg = replace(config, wind_magnitude=0.0)
    X, T = [], []
    i = 0
    while len(X) < n_episodes:
        ep = ballsim.simulate_episode(cfg, ballsim.episode_seed(config.seed, stream, i))
        i += 1
        if not ep.settled:
            continue
        _, f = ballsim.make_features(ep.with_threshold(threshold))
        X.append(f)
        T.append(ep.true_interaction_times)
    T = np.array(T)
    return np.array(X), T[:, 0], T[:, 1]


def train_ball_itms(config: SimConfig, threshold: float, n_episodes: int = 2000,
                    kind: str = "boosted_trees", params: dict | None = None):
    X, t1, t2 = itm_training_set(config, threshold, n_episodes)
    return {"ball1": train_regressor(kind, params, X, t1),
            "ball2": train_regressor(kind, params, X, t2)}


def itm_scores(itms, config: SimConfig, threshold: float, n_episodes: int = 500):
    """R^2 and MAE of each ITM on fresh unperturbed episodes."""
    X, t1, t2 = itm_training_set(config, threshold, n_episodes, stream=51)
    return {c: metrics(itms[c].predict(X), t) for c, t in (("ball1", t1), ("ball2", t2))}


# Retraining ---------------------------------------------------------------


def _xy(data):
    X, y = data
    return np.asarray(X, dtype=float), np.asarray(y, dtype=np.int64)


def incremental_retrain(pretrain_set, increments, eval_set, config: MlpConfig,
                        n_classes: int = N_CLASSES, initial_model=None) -> list[float]:
    """Accuracy after pretraining and after each cumulative retrain from scratch."""
    X0, y0 = _xy(pretrain_set)
    if len(X0) == 0:
        raise ValueError("pretrain set is empty")
    Xe, ye = _xy(eval_set)
    model = initial_model or train_classifier(config, X0, y0, n_classes)
    curve = [model.accuracy(Xe, ye)]
    xs, ys = [X0], [y0]
    for inc in increments:
        Xi, yi = _xy(inc)
        xs.append(Xi.reshape(len(Xi), X0.shape[1]))
        ys.append(yi)
        model = train_classifier(config, np.vstack(xs), np.concatenate(ys), n_classes)
        curve.append(model.accuracy(Xe, ye))
    return curve


def pseudo_label_baseline(pretrain_set, unlabeled_increments, confidence_threshold: float,
                          config: MlpConfig, eval_set, n_classes: int = N_CLASSES,
                          initial_model=None) -> list[float]:
    """Self-training: admit predictions whose top probability exceeds the threshold."""
    if not 0 <= confidence_threshold <= 1:
        raise ValueError("confidence threshold must be in [0, 1]")
    X0, y0 = _xy(pretrain_set)
    Xe, ye = _xy(eval_set)
    model = initial_model or train_classifier(config, X0, y0, n_classes)
    curve = [model.accuracy(Xe, ye)]
    xs, ys = [X0], [y0]
    for Xu in unlabeled_increments:
        Xu = np.asarray(Xu, dtype=float).reshape(-1, X0.shape[1])
        p = model.predict_proba(Xu)
        keep = p.max(axis=1) > confidence_threshold
        if keep.any():
            xs.append(Xu[keep])
            ys.append(np.argmax(p[keep], axis=1))
            model = train_classifier(config, np.vstack(xs), np.concatenate(ys), n_classes)
        curve.append(model.accuracy(Xe, ye))
    return curve


# Nested k-fold experiment -------------------------------------------------


def stratified_folds(labels, k: int, rng, n_classes: int = N_CLASSES) -> list[np.ndarray]:
    """Partition indices into ``k`` folds, dealing each class round-robin."""
    if k < 2:
        raise ValueError("k must be at least 2")
    labels = np.asarray(labels)
    if len(labels) // k < n_classes:
        raise ValueError(f"fold size {len(labels) // k} is smaller than {n_classes} classes")
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in np.unique(labels):
        idx = rng.permutation(np.nonzero(labels == c)[0])
        for j, i in enumerate(idx):
            folds[(offset + j) % k].append(int(i))
        offset += len(idx)
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


_VARIANT = re.compile(r"^slb(?:_esd(?P<esd>[0-9.]+))?(?:_itm(?P<itm>[0-9.]+))?$")


def method_noise(method: str, base: NoiseSpec) -> NoiseSpec | None:
    """NoiseSpec for ``slb``, ``slb_esd0.1``, ``slb_itm50`` style names; None otherwise."""
    m = _VARIANT.match(method)
    if not m:
        return None
    noise = base
    if m.group("esd") is not None:
        noise = replace(noise, esd_fraction=float(m.group("esd")))
    if m.group("itm") is not None:
        mean = float(m.group("itm"))
        noise = replace(noise, itm_error_mean=mean, itm_error_variance=mean / 2.0)
    return noise


@dataclass
class ExperimentSpec:
    methods: tuple[str, ...] = ("fs", "slb", "pseudo")
    k_outer: int = 2
    k_inner: int = 2
    seeds: tuple[int, ...] = (0, 1, 2)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    itm_kind: str = "boosted_trees"
    itm_params: dict = field(default_factory=dict)
    itm_train_episodes: int = 2000
    pseudo_thresholds: tuple[float, ...] = (0.5, 0.7, 0.9, 0.95)
    oracle_itm: bool = False

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.pseudo_thresholds = tuple(float(t) for t in self.pseudo_thresholds)
        if isinstance(self.mlp, dict):
            self.mlp = MlpConfig(**self.mlp)
        if isinstance(self.noise, dict):
            self.noise = NoiseSpec(**self.noise)
        for m in self.methods:
            if m not in ("fs", "pseudo") and method_noise(m, self.noise) is None:
                raise ValueError(f"unknown method {m!r}")
        if self.k_outer < 2 or self.k_inner < 2:
            raise ValueError("k_outer and k_inner must be at least 2")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def to_dict(self) -> dict:
        return {"methods": list(self.methods), "k_outer": self.k_outer, "k_inner": self.k_inner,
                "seeds": list(self.seeds), "mlp": self.mlp.to_dict(),
                "noise": {"esd_fraction": self.noise.esd_fraction,
                          "itm_error_mean": self.noise.itm_error_mean,
                          "itm_error_variance": self.noise.itm_error_variance,
                          "seed": self.noise.seed},
                "itm_kind": self.itm_kind, "itm_params": dict(self.itm_params),
                "itm_train_episodes": self.itm_train_episodes,
                "pseudo_thresholds": list(self.pseudo_thresholds),
                "oracle_itm": self.oracle_itm}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown run spec keys: {sorted(unknown)}")
        return cls(**doc)


RESULTS_HEADER = ("fold", "seed", "increment", "method", "accuracy")


@dataclass
class ResultTable:
    rows: list[tuple[int, int, int, str, float]] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def curve(self, method: str) -> np.ndarray:
        """Mean accuracy per increment across all (fold, seed) cells."""
        incs = sorted({r[2] for r in self.rows if r[3] == method})
        return np.array([np.mean([r[4] for r in self.rows if r[3] == method and r[2] == i])
                         for i in incs])

    def aggregate(self) -> list[tuple[str, int, float, float, int]]:
        """``(method, increment, mean, std, n)`` per method and increment."""
        groups: dict[tuple[str, int], list[float]] = {}
        for _, _, inc, m, acc in self.rows:
            groups.setdefault((m, inc), []).append(acc)
        return [(m, inc, float(np.mean(v)), float(np.std(v)), len(v))
                for (m, inc), v in sorted(groups.items())]

    def final(self, method: str) -> float:
        return float(self.curve(method)[-1])

    def to_csv(self) -> str:
        lines = [",".join(RESULTS_HEADER)]
        lines += [f"{f},{s},{i},{m},{a!r}" for f, s, i, m, a in self.rows]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        lines = text.strip().splitlines()
        if tuple(lines[0].split(",")) != RESULTS_HEADER:
            raise ValueError("results CSV header mismatch")
        rows = []
        for line in lines[1:]:
            f, s, i, m, a = line.split(",")
            rows.append((int(f), int(s), int(i), m, float(a)))
        return cls(rows)


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _sl_arrays(examples):
    X = np.array([e.input for e in examples]).reshape(len(examples), ballsim.N_TASK)
    y = np.array([e.label for e in examples], dtype=np.int64)
    return X, y


def prepare_selflabels(ds: DatasetSplit, itms, plan: SelfLabelingPlan, noises: dict,
                       seeds: Sequence[int]) -> dict:
    """Self-labeled increment batches per (method, seed, increment index)."""
    out = {}
    for j, inc in enumerate(ds.increments):
        events, streams = episode_events(ds, inc)
        times, _ = infer_times_batch(events, plan, itms)
        cached = {c: LookupITM({e.event_id: float(t) for e, t in zip(events, times[c])})
                  for c in plan.causes}
        for seed in seeds:
            for method, noise in noises.items():
                # Same generator for every variant: corrupted sets are nested.
                rng = np.random.default_rng([noise.seed, seed, j])
                ex = build_selflabeled_dataset(events, plan, cached, streams, noise, rng,
                                               ball_task_assembler)
                out[(method, seed, j)] = _sl_arrays(ex)
        _event("selflabel_increment", increment=j, events=len(events))
    return out


def _select_pseudo_threshold(spec: ExperimentSpec, ds: DatasetSplit, base, first_inc,
                             train_seed: int, inner_rng) -> float:
    """Pick the pseudo-label threshold by inner folds on the validation split."""
    Xv, yv = ballsim.as_arrays(ds.validation)
    folds = stratified_folds(yv, spec.k_inner, inner_rng)
    cfg = replace(spec.mlp, seed=train_seed)
    best, best_score = spec.pseudo_thresholds[0], -1.0
    for thr in spec.pseudo_thresholds:
        p = base.predict_proba(first_inc)
        keep = p.max(axis=1) > thr
        X0, y0 = ballsim.as_arrays(ds.pretrain)
        model = base
        if keep.any():
            model = train_classifier(cfg, np.vstack([X0, first_inc[keep]]),
                                     np.concatenate([y0, np.argmax(p[keep], axis=1)]), N_CLASSES)
        score = float(np.mean([model.accuracy(Xv[f], yv[f]) for f in folds]))
        if score > best_score:
            best, best_score = thr, score
    return best


def _run_cell(ds: DatasetSplit, spec: ExperimentSpec, selflabels: dict, fold: int,
              test_idx: np.ndarray, seed: int) -> list[tuple[int, int, int, str, float]]:
    """All method curves for one (outer fold, seed) cell."""
    X0, y0 = ballsim.as_arrays(ds.pretrain)
    Xt, yt = ballsim.as_arrays(ds.test)
    inc_true = [ballsim.as_arrays(inc) for inc in ds.increments]
    ev = (Xt[test_idx], yt[test_idx])
    order = np.random.default_rng([seed, 7]).permutation(len(ds.increments))
    train_seed = _derived_seed(seed, fold, 11)
    cfg = replace(spec.mlp, seed=train_seed)
    base = train_classifier(cfg, X0, y0, N_CLASSES)
    rows = []
    for method in spec.methods:
        if method == "fs":
            curve = incremental_retrain((X0, y0), [inc_true[j] for j in order], ev, cfg,
                                        initial_model=base)
        elif method == "pseudo":
            thr = spec.pseudo_thresholds[0]
            if len(order):
                thr = _select_pseudo_threshold(spec, ds, base, inc_true[order[0]][0],
                                               train_seed, np.random.default_rng([seed, fold, 13]))
            curve = pseudo_label_baseline((X0, y0), [inc_true[j][0] for j in order], thr, cfg,
                                          ev, initial_model=base)
            rows.append((fold, seed, -1, "pseudo_threshold", float(thr)))
        else:
            curve = incremental_retrain((X0, y0), [selflabels[(method, seed, j)] for j in order],
                                        ev, cfg, initial_model=base)
        rows.extend((fold, seed, i, method, float(acc)) for i, acc in enumerate(curve))
    return rows


def _cell_job(args):
    return _run_cell(*args)


def run_experiment(ds: DatasetSplit, spec: ExperimentSpec, itms=None,
                   plan: SelfLabelingPlan | None = None, jobs: int = 1) -> ResultTable:
    """Nested k-fold comparison of the configured methods.

    Outer folds partition the test split. Each (fold, seed) cell trains with
    its own derived seed; all methods in a cell share that seed and the
    increment-0 model. ``jobs`` > 1 runs cells in worker processes; results are
    merged in a fixed order, so output does not depend on ``jobs``.
    """
    plan = plan or ball_plan()
    if itms is None:
        if spec.oracle_itm:
            itms = {c: OracleITM(c) for c in plan.causes}
        else:
            itms = train_ball_itms(ds.config, ds.threshold, spec.itm_train_episodes,
                                   spec.itm_kind, spec.itm_params)
            _event("itm_trained", kind=spec.itm_kind, episodes=spec.itm_train_episodes)
    noises = {m: method_noise(m, spec.noise) for m in spec.methods
              if method_noise(m, spec.noise) is not None}
    selflabels = prepare_selflabels(ds, itms, plan, noises, spec.seeds)
    _, yt = ballsim.as_arrays(ds.test)
    outer = stratified_folds(yt, spec.k_outer,
                             np.random.default_rng(_derived_seed(ds.config.seed, 1)))
    cells = [(ds, spec, selflabels, fold, idx, seed)
             for fold, idx in enumerate(outer) for seed in spec.seeds]
    if jobs > 1 and len(cells) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
            results = list(pool.map(_cell_job, cells))
    else:
        results = [_cell_job(c) for c in cells]
    table = ResultTable(info={"pseudo_thresholds": {}})
    for rows in results:
        for r in rows:
            if r[3] == "pseudo_threshold":
                table.info["pseudo_thresholds"][f"{r[0]}:{r[1]}"] = r[4]
            else:
                table.rows.append(r)
    for (fold, seed, method), curve in _curves(table).items():
        _event("curve", fold=fold, seed=seed, method=method, start=curve[0], final=curve[-1])
    table.rows.sort(key=lambda r: (r[0], r[1], spec.methods.index(r[3]), r[2]))
    return table


def _curves(table: ResultTable) -> dict:
    out: dict = {}
    for f, s, i, m, a in sorted(table.rows, key=lambda r: (r[0], r[1], r[3], r[2])):
        out.setdefault((f, s, m), []).append(a)
    return out


def nested_kfold(ds: DatasetSplit, spec: ExperimentSpec, k_outer: int | None = None,
                 k_inner: int | None = None, seeds: Sequence[int] | None = None,
                 **kw) -> ResultTable:
    spec = replace(spec, k_outer=k_outer or spec.k_outer, k_inner=k_inner or spec.k_inner,
                   seeds=tuple(seeds) if seeds is not None else spec.seeds)
    return run_experiment(ds, spec, **kw)
