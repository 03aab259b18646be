"""Two-ball drop simulation, effect categorization and class-balanced datasets.

Two spheres start above a flat square surface, drift horizontally at a small
"penalty" speed, are released at randomized times, fall, possibly collide, and
come to rest. The resting configuration is the effect; the state of each ball
at its release is the cause.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _backend
from .errors import QuotaError
from .streams import Stream

N_CLASSES = 8
N_TASK = 6
N_ITM = 18

# Row layout of a per-ball cause stream sample.
STATE_COLUMNS = ("x", "y", "z", "vx", "vy", "vz")


@dataclass(frozen=True)
class SimConfig:
    surface_half_extent: float = 75.0
    spawn_region_half_extent: float = 10.0
    ball_radius: float = 5.0
    restitution: float = 0.6
    gravity: float = 9.8
    timestep: float = 1.0 / 240.0
    wind_magnitude: float = 0.0
    wind_window: tuple[float, float] = (0.1, 0.5)
    wind_duration: float = 0.3
    wind_direction: tuple[float, float] = (1.0, 0.0)
    penalty_velocity: float = 0.0025
    settle_speed: float = 0.05
    settle_steps: int = 48
    max_duration: float = 60.0
    seed: int = 0
    ball1_height: tuple[float, float] = (8.0, 14.0)
    ball2_height: tuple[float, float] = (24.0, 34.0)
    pre_roll: tuple[float, float] = (0.1, 0.3)
    drop_interval: tuple[float, float] = (0.0, 0.5)
    bounce_threshold: float = 0.5
    ground_drag: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "wind_window", tuple(float(v) for v in self.wind_window))
        for name in ("wind_direction", "ball1_height", "ball2_height", "pre_roll",
                     "drop_interval"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    def validate(self):
        r = self.ball_radius
        problems = []
        if not 0 < self.spawn_region_half_extent + r <= self.surface_half_extent:
            problems.append("spawn region must lie inside the surface")
        if not 0 < self.restitution < 1:
            problems.append("restitution must be in (0, 1)")
        if not (self.gravity > 0 and self.timestep > 0 and r > 0):
            problems.append("gravity, timestep and radius must be positive")
        if self.wind_magnitude < 0 or self.penalty_velocity < 0:
            problems.append("wind and penalty magnitudes must be nonnegative")
        if not (self.settle_speed > 0 and self.settle_steps >= 1):
            problems.append("settle_speed and settle_steps must be positive")
        if self.max_duration <= self.pre_roll[1] + self.drop_interval[1]:
            problems.append("max_duration too short for the drop schedule")
        if min(self.ball1_height) < r:
            problems.append("ball 1 would start below the surface")
        if self.ball2_height[0] <= self.ball1_height[1]:
            problems.append("ball 2 must spawn strictly above ball 1")
        # Shortest bounce period is set by the bounce threshold speed.
        if self.timestep >= 0.1 * (2.0 * self.bounce_threshold / self.gravity):
            problems.append("timestep too coarse for the bounce period")
        lo, hi = self.wind_window
        if not 0 <= lo <= hi:
            problems.append("wind_window must satisfy 0 <= lo <= hi")
        if math.hypot(*self.wind_direction) == 0:
            problems.append("wind_direction must be nonzero")
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown SimConfig keys: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        return cls(**kw)


@dataclass(frozen=True)
class BallState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError("ball state must be finite")


@dataclass
class EpisodeRecord:
    """One simulated episode. ``states`` has shape (n, 2, 6) on the step grid."""

    seed: int | None
    config: SimConfig
    times: np.ndarray
    states: np.ndarray
    drop_steps: tuple[int, int]
    drop_times: tuple[float, float]
    settle_time: float
    settled: bool
    collided: bool
    n_impacts: int
    rebound_counts: tuple[int, int]
    wind_ball: int
    wind_times: tuple[float, float]
    magnitude_threshold: float | None = None
    class_label: int | None = None
    degenerate: bool = False

    @property
    def final_positions(self) -> np.ndarray:
        return self.states[-1, :, :3].copy()

    @property
    def final_velocities(self) -> np.ndarray:
        return self.states[-1, :, 3:].copy()

    @property
    def distance_vector(self) -> np.ndarray:
        fp = self.states[-1, :, :3]
        return fp[1] - fp[0]

    @property
    def initial_positions(self) -> np.ndarray:
        """Positions at each ball's release."""
        return np.array([self.states[self.drop_steps[i], i, :3] for i in range(2)])

    @property
    def true_interaction_times(self) -> tuple[float, float]:
        return (self.settle_time - self.drop_times[0], self.settle_time - self.drop_times[1])

    def cause_stream(self, ball: int) -> Stream:
        return Stream(self.times, self.states[:, ball, :])

    @property
    def cause_stream_1(self) -> Stream:
        return self.cause_stream(0)

    @property
    def cause_stream_2(self) -> Stream:
        return self.cause_stream(1)

    @property
    def effect_stream(self) -> Stream:
        """A single joint sample at settle detection.

        Columns: final positions (6), final velocities (6), distance vector (3),
        rebound counts (2).
        """
        row = effect_row(self.states[-1], self.rebound_counts)
        return Stream([self.settle_time], row[None, :])

    def state(self, ball: int, step: int) -> BallState:
        row = self.states[step, ball]
        return BallState(row[:3].copy(), row[3:].copy())

    def with_threshold(self, threshold: float) -> "EpisodeRecord":
        label, degenerate = _categorize(self.distance_vector, threshold)
        return replace(self, magnitude_threshold=float(threshold), class_label=label,
                       degenerate=degenerate)


def effect_row(final_states: np.ndarray, rebounds) -> np.ndarray:
    """Raw effect features from the (2, 6) resting states; label not included."""
    fp = final_states[:, :3]
    fv = final_states[:, 3:]
    return np.concatenate([fp.ravel(), fv.ravel(), fp[1] - fp[0],
                           np.asarray(rebounds, dtype=float)])


def itm_features_from_effect(row: np.ndarray, label: int) -> np.ndarray:
    """Insert the class label into a raw effect row, giving the 18 ITM inputs."""
    return np.concatenate([row[:15], [float(label)], row[15:17]])


def _categorize(vec, threshold) -> tuple[int, bool]:
    dx, dy = float(vec[0]), float(vec[1])
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise ValueError("distance vector must be finite")
    if dx == 0.0 and dy == 0.0:
        return 0, True
    angle = math.atan2(dy, dx)
    if angle < 0:
        angle += 2.0 * math.pi
    quadrant = min(int(angle // (0.5 * math.pi)), 3)
    far = int(math.hypot(dx, dy) >= threshold)
    return quadrant * 2 + far, False


def categorize_effect(distance_vector, magnitude_threshold: float) -> int:
    """Class id ``quadrant * 2 + far`` from the planar part of the vector.

    Quadrants are 90 degree sectors counted from +x, each including its lower
    boundary. A zero planar vector maps to class 0 with a warning.
    """
    label, degenerate = _categorize(distance_vector, magnitude_threshold)
    if degenerate:
        warnings.warn("zero planar distance vector; assigned class 0", RuntimeWarning,
                      stacklevel=2)
    return label


def task_input(p1, p2, t1: float, t2: float) -> np.ndarray:
    """Six task features from the two release positions and times."""
    v = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    return np.array([math.sqrt(v @ v), math.hypot(v[0], v[1]), v[0], v[1], v[2],
                     float(t2) - float(t1)])


def make_features(episode: EpisodeRecord) -> tuple[np.ndarray, np.ndarray]:
    if not episode.settled:
        raise ValueError("episode did not settle; features are undefined")
    if episode.class_label is None:
        raise ValueError("episode has no class label; call with_threshold first")
    ip = episode.initial_positions
    x = task_input(ip[0], ip[1], *episode.drop_times)
    row = effect_row(episode.states[-1], episode.rebound_counts)
    return x, itm_features_from_effect(row, episode.class_label)


def episode_seed(master: int, stream: int, index: int) -> int:
    """Per-episode 64-bit seed derived from (master seed, stream, index)."""
    ss = np.random.SeedSequence(entropy=int(master) & (2**128 - 1),
                                spawn_key=(int(stream), int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _steps(t: float, dt: float) -> int:
    return int(round(t / dt))


def simulate_episode(config: SimConfig, rng, *, force_python: bool = False) -> EpisodeRecord:
    """Simulate one episode. ``rng`` is an integer seed or a numpy Generator."""
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    c = config
    dt, r = c.timestep, c.ball_radius
    s = c.spawn_region_half_extent
    # Draw order is fixed; wind magnitude does not change the stream.
    xy = rng.uniform(-s, s, size=(2, 2))
    z = (rng.uniform(*c.ball1_height), rng.uniform(*c.ball2_height))
    theta = rng.uniform(0.0, 2.0 * math.pi, size=2)
    pre = rng.uniform(*c.pre_roll)
    gap = rng.uniform(*c.drop_interval)
    wind_ball = int(rng.integers(0, 2))
    wind_frac = rng.uniform(*c.wind_window)

    pos0 = np.column_stack([xy, z])
    vel0 = np.column_stack([c.penalty_velocity * np.cos(theta),
                            c.penalty_velocity * np.sin(theta), np.zeros(2)])
    d1 = max(_steps(pre, dt), 1)
    d2 = d1 + _steps(gap, dt)
    fall = math.sqrt(2.0 * (z[wind_ball] - r) / c.gravity)
    w_lo = (d1, d2)[wind_ball] + _steps(wind_frac * fall, dt)
    w_hi = w_lo + _steps(c.wind_duration, dt)
    return simulate_from_initial(c, pos0, vel0, (d1, d2), wind_ball, (w_lo, w_hi), seed=seed,
                                 force_python=force_python)


def simulate_from_initial(config: SimConfig, positions, velocities, drop_steps,
                          wind_ball: int = 0, wind_steps=(0, 0), *, seed: int | None = None,
                          force_python: bool = False) -> EpisodeRecord:
    """Integrate explicit initial conditions.

    ``positions`` and ``velocities`` are (2, 3); each ball rolls horizontally
    until its drop step, then falls. Wind acts on ``wind_ball`` over the
    half-open step range ``wind_steps``.
    """
    c = config
    dt = c.timestep
    pos0 = np.asarray(positions, dtype=float).reshape(2, 3)
    vel0 = np.asarray(velocities, dtype=float).reshape(2, 3)
    d1, d2 = (int(d) for d in drop_steps)
    wx, wy = c.wind_direction
    norm = math.hypot(wx, wy)
    wind_acc = np.array([c.wind_magnitude * wx / norm, c.wind_magnitude * wy / norm])
    params = np.array([dt, c.gravity, c.ball_radius, c.restitution, c.bounce_threshold,
                       math.exp(-c.ground_drag * dt), c.surface_half_extent,
                       c.settle_speed, 0.0])
    max_steps = _steps(c.max_duration, dt)
    w_lo, w_hi = (int(w) for w in wind_steps)
    states, rebounds, collided, settle_step, n_impacts = _backend.simulate_two_balls(
        pos0, vel0, np.array([d1, d2], dtype=np.int64), params, int(c.settle_steps),
        int(wind_ball), wind_acc, np.array([w_lo, w_hi], dtype=np.int64), max_steps,
        force_python=force_python)
    n = len(states)
    times = np.arange(n) * dt
    return EpisodeRecord(
        seed=seed, config=config, times=times, states=states, drop_steps=(d1, d2),
        drop_times=(d1 * dt, d2 * dt), settle_time=(n - 1) * dt,
        settled=settle_step >= 0, collided=bool(collided), n_impacts=int(n_impacts),
        rebound_counts=(int(rebounds[0]), int(rebounds[1])), wind_ball=int(wind_ball),
        wind_times=(w_lo * dt, w_hi * dt))


# Dataset generation -------------------------------------------------------

SPLITS = ("pretrain", "validation", "test", "increment")
_STREAM = {"calibration": 0, "pretrain": 1, "validation": 2, "test": 3}
_INCREMENT_STREAM = 100
CALIBRATION_EPISODES = 500


@dataclass(frozen=True)
class SplitCounts:
    pretrain: int = 320
    increment: int = 120
    n_increments: int = 10
    test: int = 480
    validation: int = 160

    def __post_init__(self):
        for name in ("pretrain", "increment", "test", "validation"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} count must be positive")
        if self.n_increments < 0:
            raise ValueError("n_increments must be nonnegative")

    @classmethod
    def parse(cls, text: str) -> "SplitCounts":
        """``pretrain,increment,test,validation[,n_increments]``."""
        parts = [int(v) for v in text.split(",")]
        if len(parts) not in (4, 5):
            raise ValueError("counts take 4 or 5 comma-separated integers")
        kw = dict(zip(("pretrain", "increment", "test", "validation", "n_increments"), parts))
        if len(parts) == 4:
            kw["n_increments"] = 1
        return cls(**kw)


@dataclass
class Sample:
    split: str
    increment: int
    seed: int
    wind: float
    label: int
    task_input: np.ndarray
    itm_features: np.ndarray
    true_times: tuple[float, float]
    drop_times: tuple[float, float]
    settle_time: float
    collided: bool


@dataclass
class DatasetSplit:
    config: SimConfig
    counts: SplitCounts
    threshold: float
    pretrain: list[Sample] = field(default_factory=list)
    increments: list[list[Sample]] = field(default_factory=list)
    test: list[Sample] = field(default_factory=list)
    validation: list[Sample] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def all_samples(self) -> list[Sample]:
        out = list(self.pretrain) + list(self.validation) + list(self.test)
        for inc in self.increments:
            out.extend(inc)
        return out

    def episode(self, sample: Sample, *, force_python: bool = False) -> EpisodeRecord:
        """Re-simulate the episode behind a sample."""
        cfg = replace(self.config, wind_magnitude=sample.wind)
        return simulate_episode(cfg, sample.seed, force_python=force_python).with_threshold(
            self.threshold)

    def manifest(self) -> dict:
        return {"config": self.config.to_dict(), "counts": asdict(self.counts),
                "magnitude_threshold": self.threshold, **self.stats}


def calibrate_threshold(config: SimConfig, n: int = CALIBRATION_EPISODES) -> float:
    """Median planar final distance over ``n`` wind-free episodes."""
    cfg = replace(config, wind_magnitude=0.0)
    d = []
    for i in range(n):
        ep = simulate_episode(cfg, episode_seed(config.seed, _STREAM["calibration"], i))
        d.append(math.hypot(*ep.distance_vector[:2]))
    return float(np.median(d))


def _fill(config: SimConfig, split: str, stream: int, quota_total: int, threshold: float,
          budget_factor: int, increment: int, tally: dict) -> list[Sample]:
    if quota_total % N_CLASSES:
        warnings.warn(f"{split} count {quota_total} is not a multiple of {N_CLASSES}; "
                      "extra samples go to the lowest classes", RuntimeWarning, stacklevel=3)
    base, extra = divmod(quota_total, N_CLASSES)
    quota = [base + (1 if k < extra else 0) for k in range(N_CLASSES)]
    got: list[list[Sample]] = [[] for _ in range(N_CLASSES)]
    budget = budget_factor * quota_total
    i = 0
    while any(len(g) < q for g, q in zip(got, quota)):
        if i >= budget:
            shortfall = {k: q - len(g) for k, (g, q) in enumerate(zip(got, quota)) if len(g) < q}
            raise QuotaError(f"{split}: class quota unreachable after {budget} episodes; "
                             f"shortfall {shortfall}", shortfall)
        seed = episode_seed(config.seed, stream, i)
        i += 1
        ep = simulate_episode(config, seed)
        tally["episodes"] += 1
        tally["collided"] += ep.collided
        if not ep.settled:
            tally["unsettled"] += 1
            continue
        label, degenerate = _categorize(ep.distance_vector, threshold)
        if degenerate or len(got[label]) >= quota[label]:
            continue
        ep = replace(ep, magnitude_threshold=threshold, class_label=label)
        x, feats = make_features(ep)
        got[label].append(Sample(split, increment, seed, config.wind_magnitude, label, x,
                                 feats, ep.true_interaction_times, ep.drop_times,
                                 ep.settle_time, ep.collided))
    # Episode order, not class order.
    return sorted((s for g in got for s in g), key=lambda s: s.seed)


def generate_dataset(config: SimConfig, counts: SplitCounts, magnitude_threshold="auto",
                     *, pre_deployment_wind: float = 0.0,
                     budget_factor: int = 60) -> DatasetSplit:
    """Class-balanced splits.

    Pretrain and validation come from the pre-deployment domain
    (``pre_deployment_wind``); test and increments use ``config.wind_magnitude``.
    """
    if magnitude_threshold == "auto":
        threshold = calibrate_threshold(config)
    else:
        threshold = float(magnitude_threshold)
        if not threshold > 0:
            raise ValueError("magnitude threshold must be positive")
    pre_cfg = replace(config, wind_magnitude=pre_deployment_wind)
    tally = {"episodes": 0, "collided": 0, "unsettled": 0}
    ds = DatasetSplit(config=config, counts=counts, threshold=threshold)
    ds.pretrain = _fill(pre_cfg, "pretrain", _STREAM["pretrain"], counts.pretrain,
                        threshold, budget_factor, -1, tally)
    ds.validation = _fill(pre_cfg, "validation", _STREAM["validation"], counts.validation,
                          threshold, budget_factor, -1, tally)
    ds.test = _fill(config, "test", _STREAM["test"], counts.test, threshold,
                    budget_factor, -1, tally)
    ds.increments = [_fill(config, "increment", _INCREMENT_STREAM + j, counts.increment,
                           threshold, budget_factor, j, tally)
                     for j in range(counts.n_increments)]
    ds.stats = {
        "episodes_simulated": tally["episodes"],
        "collision_rate": tally["collided"] / max(tally["episodes"], 1),
        "unsettled": tally["unsettled"],
        "pre_deployment_wind": pre_deployment_wind,
        "backend": _backend.NAME,
    }
    return ds


def collision_rate(config: SimConfig, n: int = 1000, stream: int = 7) -> float:
    hits = sum(simulate_episode(config, episode_seed(config.seed, stream, i)).collided
               for i in range(n))
    return hits / n


# CSV ----------------------------------------------------------------------

CSV_HEADER = (["split", "increment", "seed", "wind", "label", "true_t1", "true_t2",
               "drop_t1", "drop_t2", "settle_time", "collided"]
              + [f"task_{i}" for i in range(N_TASK)] + [f"itm_{i}" for i in range(N_ITM)])


def dataset_to_csv(ds: DatasetSplit) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in ds.all_samples():
        w.writerow([s.split, s.increment, s.seed, repr(s.wind), s.label,
                    repr(s.true_times[0]), repr(s.true_times[1]),
                    repr(s.drop_times[0]), repr(s.drop_times[1]), repr(s.settle_time),
                    int(s.collided)]
                   + [repr(float(v)) for v in s.task_input]
                   + [repr(float(v)) for v in s.itm_features])
    return buf.getvalue()


def dataset_from_csv(text: str, manifest: dict) -> DatasetSplit:
    config = SimConfig.from_dict(manifest["config"])
    counts = SplitCounts(**manifest["counts"])
    ds = DatasetSplit(config=config, counts=counts,
                      threshold=float(manifest["magnitude_threshold"]),
                      stats={k: v for k, v in manifest.items()
                             if k not in ("config", "counts", "magnitude_threshold")})
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError("dataset CSV header mismatch")
    incs: dict[int, list[Sample]] = {}
    for row in rows[1:]:
        split, inc = row[0], int(row[1])
        nums = [float(v) for v in row[5:10]]
        s = Sample(split=split, increment=inc, seed=int(row[2]), wind=float(row[3]),
                   label=int(row[4]), true_times=(nums[0], nums[1]),
                   drop_times=(nums[2], nums[3]), settle_time=nums[4],
                   collided=bool(int(row[10])),
                   task_input=np.array([float(v) for v in row[11:11 + N_TASK]]),
                   itm_features=np.array([float(v) for v in row[11 + N_TASK:]]))
        if split == "increment":
            incs.setdefault(inc, []).append(s)
        elif split in ("pretrain", "validation", "test"):
            getattr(ds, split).append(s)
        else:
            raise ValueError(f"unknown split {split!r}")
    ds.increments = [incs[j] for j in sorted(incs)]
    return ds


def write_dataset(ds: DatasetSplit, csv_path, manifest_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        fh.write(dataset_to_csv(ds))
    with open(manifest_path, "w") as fh:
        json.dump(ds.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_dataset(csv_path, manifest_path) -> DatasetSplit:
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    with open(csv_path, newline="") as fh:
        return dataset_from_csv(fh.read(), manifest)


def as_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([s.task_input for s in samples]).reshape(len(samples), N_TASK)
    y = np.array([s.label for s in samples], dtype=np.int64)
    return X, y
