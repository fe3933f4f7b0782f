"""Next-hour return forecasters: gradient-boosted regression trees and ridge.

One global forecaster is trained on the pooled cross-section: every
(asset, hour) pair contributes a feature row whose target is that asset's
next-hour return. The boosted-tree learner uses squared-error loss with exact
greedy splits (no histogramming) and is fully deterministic for a fixed seed;
the closed-form ridge regressor doubles as a fast, independently checkable
alternative.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrainingSet, FeatureMismatch, ShapeMismatch
from .features import FeatureTensor
from .market_data import ReturnMatrix

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForecasterConfig:
    algorithm: str = "gbdt"        # "gbdt" or "ridge"
    trees: int = 100
    depth: int = 3
    learning_rate: float = 0.1
    subsample: float = 1.0
    min_samples_leaf: int = 1
    ridge_lambda: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ("gbdt", "ridge"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.trees < 1:
            raise ValueError("trees must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning rate must be in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.ridge_lambda < 0.0:
            raise ValueError("ridge penalty must be >= 0")


def build_training_set(
    features: FeatureTensor, returns: ReturnMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Pair feature cell (i, t, :) with target returns[i, t+1].

    The last hour has no target and is dropped. Rows are ordered asset-major
    then time, which only matters for reproducibility.
    """
    if features.assets != returns.assets or not np.array_equal(
        features.timestamps, returns.timestamps
    ):
        raise ShapeMismatch("features and returns must share assets and timestamps")
    n, l, d = features.values.shape
    if l < 2:
        raise EmptyTrainingSet("need at least 2 hours to form (features, next-return) pairs")
    x = features.values[:, :-1, :].reshape(n * (l - 1), d)
    y = returns.values[:, 1:].reshape(n * (l - 1))
    return np.ascontiguousarray(x), np.ascontiguousarray(y)


# -- boosted trees -------------------------------------------------------------

@dataclass
class _Tree:
    """Flat arrays; feature < 0 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0])
        stack = [(0, np.arange(x.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if self.feature[node] < 0:
                out[idx] = self.value[node]
                continue
            go_left = x[idx, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], idx[go_left]))
            stack.append((self.right[node], idx[~go_left]))
        return out


class _TreeBuilder:
    """Exact greedy CART regression on presorted feature orderings."""

    def __init__(self, x: np.ndarray, max_depth: int, min_leaf: int):
        self.x = x
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.order = np.argsort(x, axis=0, kind="stable")  # (rows, features)
        self.nodes: list[list] = []  # feature, threshold, left, right, value

    def build(self, grad: np.ndarray, rows: np.ndarray) -> _Tree:
        self.grad = grad
        self.nodes = []
        mask = np.zeros(self.x.shape[0], dtype=bool)
        mask[rows] = True
        self._grow(mask, self.max_depth)
        return _Tree(
            feature=np.array([n[0] for n in self.nodes], dtype=np.int64),
            threshold=np.array([n[1] for n in self.nodes], dtype=np.float64),
            left=np.array([n[2] for n in self.nodes], dtype=np.int64),
            right=np.array([n[3] for n in self.nodes], dtype=np.int64),
            value=np.array([n[4] for n in self.nodes], dtype=np.float64),
        )

    def _leaf(self, mask: np.ndarray) -> int:
        node = len(self.nodes)
        self.nodes.append([-1, 0.0, -1, -1, float(self.grad[mask].mean())])
        return node

    def _grow(self, mask: np.ndarray, depth: int) -> int:
        count = int(mask.sum())
        if depth == 0 or count < 2 * self.min_leaf or count < 2:
            return self._leaf(mask)

        best = None  # (gain, feature, threshold)
        g_total = self.grad[mask].sum()
        for j in range(self.x.shape[1]):
            idx = self.order[:, j][mask[self.order[:, j]]]
            xs = self.x[idx, j]
            gs = np.cumsum(self.grad[idx])
            # split after position i: left = idx[:i+1]; needs a strict value change
            counts = np.arange(1, count)
            valid = xs[:-1] < xs[1:]
            if self.min_leaf > 1:
                valid &= (counts >= self.min_leaf) & (count - counts >= self.min_leaf)
            if not valid.any():
                continue
            left_sum = gs[:-1]
            gain = left_sum**2 / counts + (g_total - left_sum) ** 2 / (count - counts)
            gain[~valid] = -np.inf
            i = int(np.argmax(gain))
            score = gain[i] - g_total**2 / count
            if score > 1e-18 and (best is None or score > best[0]):
                best = (float(score), j, float((xs[i] + xs[i + 1]) / 2.0))

        if best is None:
            return self._leaf(mask)

        _, feature, threshold = best
        go_left = mask & (self.x[:, feature] <= threshold)
        go_right = mask & ~go_left
        node = len(self.nodes)
        self.nodes.append([feature, threshold, -1, -1, 0.0])
        self.nodes[node][2] = self._grow(go_left, depth - 1)
        self.nodes[node][3] = self._grow(go_right, depth - 1)
        return node


def _fit_gbdt(x: np.ndarray, y: np.ndarray, config: ForecasterConfig) -> dict:
    base = float(y.mean())
    pred = np.full(len(y), base)
    builder = _TreeBuilder(x, config.depth, config.min_samples_leaf)
    rng = np.random.default_rng(config.seed)
    trees: list[_Tree] = []
    all_rows = np.arange(len(y))
    for _ in range(config.trees):
        resid = y - pred
        if np.allclose(resid, 0.0, atol=1e-15):
            break
        if config.subsample < 1.0:
            size = max(2 * config.min_samples_leaf, int(round(config.subsample * len(y))))
            rows = np.sort(rng.choice(len(y), size=min(size, len(y)), replace=False))
        else:
            rows = all_rows
        tree = builder.build(resid, rows)
        trees.append(tree)
        pred = pred + config.learning_rate * tree.predict(x)
    return {"base": base, "trees": trees, "learning_rate": config.learning_rate}


def _predict_gbdt(params: dict, x: np.ndarray) -> np.ndarray:
    out = np.full(x.shape[0], params["base"])
    for tree in params["trees"]:
        out = out + params["learning_rate"] * tree.predict(x)
    return out


# -- ridge ---------------------------------------------------------------------

def _fit_ridge(x: np.ndarray, y: np.ndarray, config: ForecasterConfig) -> dict:
    x_mean = x.mean(axis=0)
    y_mean = float(y.mean())
    xc = x - x_mean
    gram = xc.T @ xc + config.ridge_lambda * np.eye(x.shape[1])
    try:
        w = np.linalg.solve(gram, xc.T @ (y - y_mean))
    except np.linalg.LinAlgError:
        w = np.linalg.lstsq(gram, xc.T @ (y - y_mean), rcond=None)[0]
    return {"weights": w, "intercept": y_mean - float(x_mean @ w)}


def _predict_ridge(params: dict, x: np.ndarray) -> np.ndarray:
    return x @ params["weights"] + params["intercept"]


# -- public model --------------------------------------------------------------

@dataclass
class TrainedForecaster:
    config: ForecasterConfig
    params: dict
    feature_names: tuple[str, ...] | None = field(default=None)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.config.algorithm == "gbdt":
            return _predict_gbdt(self.params, x)
        return _predict_ridge(self.params, x)

    def predict_at(self, features: FeatureTensor, t: int) -> np.ndarray:
        """Cross-section of next-hour predictions from the feature column at t."""
        if self.feature_names is not None and features.names != self.feature_names:
            raise FeatureMismatch(
                f"features {list(features.names)} != trained {list(self.feature_names)}"
            )
        return self.predict(features.values[:, t, :])

    def to_bytes(self) -> bytes:
        blob = {
            "format_version": _FORMAT_VERSION,
            "config": self.config,
            "params": self.params,
            "feature_names": self.feature_names,
        }
        return pickle.dumps(blob)

    @staticmethod
    def from_bytes(data: bytes) -> "TrainedForecaster":
        blob = pickle.loads(data)
        if blob.get("format_version") != _FORMAT_VERSION:
            raise ValueError(f"unsupported forecaster blob version {blob.get('format_version')}")
        return TrainedForecaster(blob["config"], blob["params"], blob["feature_names"])


def fit_forecaster(
    x: np.ndarray,
    y: np.ndarray,
    config: ForecasterConfig | None = None,
    feature_names: tuple[str, ...] | None = None,
) -> TrainedForecaster:
    """Fit the configured forecaster; constant targets yield a constant model.

    Training MSE never exceeds that of the constant-mean predictor: boosting
    starts from the target mean and each stage fits residuals, and the ridge
    solution includes the mean as a feasible point.
    """
    config = config or ForecasterConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise ShapeMismatch(f"X {x.shape} incompatible with y {y.shape}")
    if len(y) < 10:
        raise EmptyTrainingSet(f"need at least 10 training rows, got {len(y)}")

    if np.ptp(y) == 0.0:
        if config.algorithm == "gbdt":
            params = {"base": float(y[0]), "trees": [], "learning_rate": config.learning_rate}
        else:
            params = {"weights": np.zeros(x.shape[1]), "intercept": float(y[0])}
        return TrainedForecaster(config, params, feature_names)

    if config.algorithm == "gbdt":
        params = _fit_gbdt(x, y, config)
    else:
        params = _fit_ridge(x, y, config)
    return TrainedForecaster(config, params, feature_names)
