"""Small numpy learners: an MLP classifier, boosted regression trees and k-NN.

The classifier is trained with AdamW (decoupled weight decay), ReLU hidden
layers, inverted dropout and softmax cross-entropy on standardized inputs.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ZeroVarianceError

# Standardization ----------------------------------------------------------


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(mean, scale)

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * self.scale + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.array(doc["mean"], dtype=float), np.array(doc["scale"], dtype=float))


def _check_matrix(X, name="inputs") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError(f"{name} must be a nonempty 2-d matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contain NaN or Inf")
    return X


# MLP ----------------------------------------------------------------------


@dataclass(frozen=True)
class MlpConfig:
    layer_widths: tuple[int, ...] = (32, 64, 32)
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    epochs: int = 200
    batch_size: int = 64
    dropout_rate: float = 0.1
    seed: int = 0
    l2_penalty: float = 0.0  # coupled L2 added to the loss

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if not self.layer_widths or min(self.layer_widths) <= 0:
            raise ValueError("need at least one hidden layer with positive width")
        if not self.learning_rate > 0 or self.weight_decay < 0 or self.l2_penalty < 0:
            raise ValueError("bad learning rate or decay")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")

    def to_dict(self):
        d = asdict(self)
        d["layer_widths"] = list(self.layer_widths)
        return d


ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def init_params(sizes, rng) -> list[np.ndarray]:
    """He-normal weights, zero biases, as a flat [W0, b0, W1, b1, ...] list."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        params.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, X, masks=None) -> np.ndarray:
    """Class probabilities. ``masks`` are per-hidden-layer dropout multipliers."""
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        z = h @ params[2 * i] + params[2 * i + 1]
        if i == n_layers - 1:
            return _softmax(z)
        h = np.maximum(z, 0.0)
        if masks is not None:
            h = h * masks[i]


def loss_and_grads(params, X, y, masks=None, l2: float = 0.0):
    """Mean cross-entropy (plus ``l2/2 * sum W**2``) and its gradients."""
    n_layers = len(params) // 2
    acts = [X]
    pre = []
    h = X
    for i in range(n_layers):
        z = h @ params[2 * i] + params[2 * i + 1]
        pre.append(z)
        if i == n_layers - 1:
            break
        h = np.maximum(z, 0.0)
        if masks is not None:
            h = h * masks[i]
        acts.append(h)
    p = _softmax(pre[-1])
    n = len(X)
    loss = -np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300)))
    if l2:
        loss += 0.5 * l2 * sum(float(np.sum(params[2 * i] ** 2)) for i in range(n_layers))
    grads = [None] * len(params)
    delta = p
    delta[np.arange(n), y] -= 1.0
    delta /= n
    for i in range(n_layers - 1, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if l2:
            grads[2 * i] = grads[2 * i] + l2 * params[2 * i]
        if i:
            delta = delta @ params[2 * i].T
            if masks is not None:
                delta = delta * masks[i - 1]
            delta = delta * (pre[i - 1] > 0)
    return loss, grads


@dataclass
class Classifier:
    params: list[np.ndarray]
    config: MlpConfig
    n_classes: int
    scaler: Standardizer
    single_class: bool = False

    @property
    def n_features(self) -> int:
        return self.params[0].shape[0]

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return forward(self.params, self.scaler.transform(X))

    def predict_classes(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def accuracy(self, X, y) -> float:
        return float(np.mean(self.predict_classes(X) == np.asarray(y)))

    def to_dict(self) -> dict:
        return {"kind": "mlp", "config": self.config.to_dict(), "n_classes": self.n_classes,
                "scaler": self.scaler.to_dict(), "single_class": self.single_class,
                "params": [p.tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, doc) -> "Classifier":
        cfg = dict(doc["config"])
        return cls([np.array(p, dtype=float) for p in doc["params"]], MlpConfig(**cfg),
                   int(doc["n_classes"]), Standardizer.from_dict(doc["scaler"]),
                   bool(doc.get("single_class", False)))


def predict(classifier: Classifier, x) -> tuple[int, np.ndarray]:
    """Class id (ties to the lowest id) and probability vector for one input."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("predict takes a single input vector")
    p = classifier.predict_proba(x)[0]
    return int(np.argmax(p)), p


def train_classifier(config: MlpConfig, inputs, labels, n_classes: int | None = None
                     ) -> Classifier:
    X = _check_matrix(inputs)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (len(X),):
        raise ValueError("labels must be a vector matching inputs")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError("labels out of range")
    single = len(np.unique(y)) == 1
    if single:
        warnings.warn("training data holds a single class", RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(config.seed)
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    sizes = [X.shape[1], *config.layer_widths, n_classes]
    # One flat buffer so the optimizer update is a handful of vector ops.
    init = init_params(sizes, rng)
    flat = np.concatenate([p.ravel() for p in init])
    params, offset = [], 0
    for p in init:
        params.append(flat[offset:offset + p.size].reshape(p.shape))
        offset += p.size
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    b1, b2 = ADAM_BETAS
    lr, wd = config.learning_rate, config.weight_decay
    keep = 1.0 - config.dropout_rate
    n_hidden = sum(config.layer_widths)
    cuts = np.cumsum(config.layer_widths)[:-1]
    n = len(Z)
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = Z[idx], y[idx]
            masks = None
            if config.dropout_rate > 0:
                block = (rng.random((len(idx), n_hidden)) < keep) * (1.0 / keep)
                masks = np.split(block, cuts, axis=1)
            _, grads = loss_and_grads(params, xb, yb, masks, config.l2_penalty)
            g = np.concatenate([gi.ravel() for gi in grads])
            step += 1
            if wd:
                flat *= 1.0 - lr * wd
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            flat -= (lr / (1.0 - b1 ** step)) * m / (np.sqrt(v / (1.0 - b2 ** step)) + ADAM_EPS)
    params = [p.copy() for p in params]
    return Classifier(params, config, n_classes, scaler, single)


# Regressors ---------------------------------------------------------------


class KnnRegressor:
    kind = "knn"

    def __init__(self, k: int = 5):
        if k < 1:
            raise ValueError("k must be positive")
        self.k = int(k)

    def fit(self, X, y):
        X = _check_matrix(X)
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("targets must be finite")
        if self.k > len(X):
            raise ValueError(f"k={self.k} exceeds the {len(X)} training samples")
        self.scaler = Standardizer.fit(X)
        self.Z = self.scaler.transform(X)
        self.y = y
        return self

    def predict(self, X) -> np.ndarray:
        Q = self.scaler.transform(np.atleast_2d(np.asarray(X, dtype=float)))
        out = np.empty(len(Q))
        for start in range(0, len(Q), 256):
            q = Q[start:start + 256]
            d2 = ((q[:, None, :] - self.Z[None, :, :]) ** 2).sum(axis=2)
            nn = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
            out[start:start + 256] = self.y[nn].mean(axis=1)
        return out

    def to_dict(self):
        return {"kind": self.kind, "k": self.k, "scaler": self.scaler.to_dict(),
                "Z": self.Z.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, doc):
        m = cls(doc["k"])
        m.scaler = Standardizer.from_dict(doc["scaler"])
        m.Z = np.array(doc["Z"], dtype=float)
        m.y = np.array(doc["y"], dtype=float)
        return m


@dataclass
class Tree:
    """Array-encoded binary regression tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.value[node]
            rows = np.nonzero(inner)[0]
            go_left = X[rows, f[inner]] <= self.threshold[node[inner]]
            node[rows] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.array(doc["feature"], dtype=np.int64),
                   np.array(doc["threshold"], dtype=float),
                   np.array(doc["left"], dtype=np.int64), np.array(doc["right"], dtype=np.int64),
                   np.array(doc["value"], dtype=float))


def _best_split(X, r, min_leaf):
    """Exact greedy squared-error split over all features; None if no gain."""
    n = len(r)
    total = r.sum()
    base = total * total / n
    best = (0.0, -1, 0.0)
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cs = np.cumsum(r[order])[:-1]
        nl = np.arange(1, n)
        valid = xs[:-1] < xs[1:]
        if min_leaf > 1:
            valid &= (nl >= min_leaf) & (n - nl >= min_leaf)
        if not valid.any():
            continue
        gain = cs * cs / nl + (total - cs) ** 2 / (n - nl) - base
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0] * (1 + 1e-12) + 1e-15:
            best = (float(gain[i]), j, 0.5 * (xs[i] + xs[i + 1]))
    return None if best[1] < 0 else best


def fit_tree(X, r, max_depth: int, min_leaf: int = 1) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx, depth):
        k = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(r[idx].mean()))
        if depth >= max_depth or len(idx) < 2 * min_leaf:
            return k
        split = _best_split(X[idx], r[idx], min_leaf)
        if split is None:
            return k
        _, j, thr = split
        mask = X[idx, j] <= thr
        feature[k] = j
        threshold[k] = thr
        left[k] = grow(idx[mask], depth + 1)
        right[k] = grow(idx[~mask], depth + 1)
        return k

    grow(np.arange(len(r)), 0)
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value))


class BoostedTrees:
    """Stage-wise least-squares boosting of depth-limited regression trees."""

    kind = "boosted_trees"

    def __init__(self, n_trees: int = 200, max_depth: int = 4, learning_rate: float = 0.1,
                 min_samples_leaf: int = 1):
        if n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if max_depth < 1 or not learning_rate > 0 or min_samples_leaf < 1:
            raise ValueError("bad boosted-tree hyperparameters")
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.learning_rate = float(learning_rate)
        self.min_samples_leaf = int(min_samples_leaf)

    def fit(self, X, y):
        X = _check_matrix(X)
        y = np.asarray(y, dtype=float)
        if y.shape != (len(X),) or not np.all(np.isfinite(y)):
            raise ValueError("targets must be a finite vector matching inputs")
        self.base = float(y.mean())
        pred = np.full(len(y), self.base)
        self.trees = []
        for _ in range(self.n_trees):
            tree = fit_tree(X, y - pred, self.max_depth, self.min_samples_leaf)
            self.trees.append(tree)
            pred += self.learning_rate * tree.predict(X)
        return self

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(len(X), self.base)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def to_dict(self):
        return {"kind": self.kind, "n_trees": self.n_trees, "max_depth": self.max_depth,
                "learning_rate": self.learning_rate, "min_samples_leaf": self.min_samples_leaf,
                "base": self.base, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, doc):
        m = cls(doc["n_trees"], doc["max_depth"], doc["learning_rate"],
                doc.get("min_samples_leaf", 1))
        m.base = float(doc["base"])
        m.trees = [Tree.from_dict(t) for t in doc["trees"]]
        return m


REGRESSORS = {"knn": KnnRegressor, "boosted_trees": BoostedTrees}


def train_regressor(kind: str, hyperparameters: dict | None, inputs, targets):
    try:
        cls = REGRESSORS[kind]
    except KeyError:
        raise ValueError(f"unknown regressor kind {kind!r}") from None
    return cls(**(hyperparameters or {})).fit(inputs, targets)


def metrics(predictions, targets) -> tuple[float, float]:
    """``(r2, mae)``. Raises ZeroVarianceError (carrying ``mae``) for constant targets."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape or p.size == 0:
        raise ValueError("predictions and targets need equal nonzero lengths")
    mae = float(np.mean(np.abs(p - t)))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        raise ZeroVarianceError(mae)
    ss_res = float(np.sum((t - p) ** 2))
    return 1.0 - ss_res / ss_tot, mae


# Persistence --------------------------------------------------------------


def model_to_json(model) -> str:
    return json.dumps(model.to_dict())


def model_from_json(text: str):
    doc = json.loads(text)
    kind = doc.get("kind")
    if kind == "mlp":
        return Classifier.from_dict(doc)
    if kind in REGRESSORS:
        return REGRESSORS[kind].from_dict(doc)
    raise ValueError(f"unknown model kind {kind!r}")
