"""Newton-boosted regression trees with second-order split gains.

Stage-wise ensemble under halved squared loss l = (y - F)^2 / 2, so the
per-row gradient is g = F - y and the hessian h = 1. Each round draws a
seeded row subsample, grows a depth-limited tree by exact greedy search over
midpoints of distinct feature values, keeps a split only when its
regularized gain is positive, and sets leaf weights to -sum(g)/(sum(h)+lambda).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import SupervisedDataSet
from ..errors import FitError, ValidationError


@dataclass(frozen=True)
class BoostConfig:
    n_rounds: int = 40
    max_depth: int = 5
    shrinkage: float = 0.1
    gamma: float = 0.1
    reg_lambda: float = 1.0
    subsample: float = 0.75
    min_leaf: int = 1
    seed: int = 0
    base_score: float | None = None  # None -> mean training label


@dataclass
class TreeNode:
    weight: float = 0.0
    feature: int | None = None
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"weight": self.weight}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            return cls(weight=float(d["weight"]))
        return cls(
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


@dataclass
class BoostedEnsemble:
    trees: list[TreeNode]
    shrinkage: float
    base_score: float
    n_features: int

    def predict(self, x: np.ndarray) -> float:
        return predict_boosted(self, x)

    def to_snapshot(self) -> dict:
        return {
            "kind": "boosted",
            "base_score": self.base_score,
            "shrinkage": self.shrinkage,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "BoostedEnsemble":
        return cls(
            trees=[TreeNode.from_dict(t) for t in snap["trees"]],
            shrinkage=float(snap["shrinkage"]),
            base_score=float(snap["base_score"]),
            n_features=int(snap["n_features"]),
        )


def _leaf_weight(g_sum: float, h_sum: float, lam: float) -> float:
    return -g_sum / (h_sum + lam)


def split_gain(
    gl: float, hl: float, gr: float, hr: float, lam: float, gamma: float
) -> float:
    """Regularized gain of splitting a node with totals (gl+gr, hl+hr)."""
    parent = (gl + gr) ** 2 / (hl + hr + lam)
    return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - gamma


def _best_split(
    x: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: BoostConfig
) -> tuple[float, int, float] | None:
    """Exact greedy search over midpoints of distinct values of every feature."""
    n, d = x.shape
    g_total = float(g.sum())
    h_total = float(h.sum())
    best: tuple[float, int, float] | None = None
    for j in range(d):
        col = x[:, j]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        gcum = np.cumsum(g[order])
        hcum = np.cumsum(h[order])
        boundary = np.nonzero(xs[:-1] < xs[1:])[0]  # last index of each left block
        for i in boundary:
            n_left = i + 1
            if n_left < cfg.min_leaf or n - n_left < cfg.min_leaf:
                continue
            gl, hl = float(gcum[i]), float(hcum[i])
            gain = split_gain(gl, hl, g_total - gl, h_total - hl, cfg.reg_lambda, cfg.gamma)
            if gain > 0.0 and (best is None or gain > best[0]):
                best = (gain, j, float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _grow(x: np.ndarray, g: np.ndarray, h: np.ndarray, depth: int, cfg: BoostConfig) -> TreeNode:
    if depth < cfg.max_depth and x.shape[0] >= 2 * cfg.min_leaf:
        found = _best_split(x, g, h, cfg)
        if found is not None:
            _, j, thr = found
            mask = x[:, j] <= thr
            return TreeNode(
                feature=j,
                threshold=thr,
                left=_grow(x[mask], g[mask], h[mask], depth + 1, cfg),
                right=_grow(x[~mask], g[~mask], h[~mask], depth + 1, cfg),
            )
    return TreeNode(weight=_leaf_weight(float(g.sum()), float(h.sum()), cfg.reg_lambda))


def tree_predict(node: TreeNode, x: np.ndarray) -> np.ndarray:
    """Leaf weights for a batch (n, d)."""
    out = np.empty(x.shape[0])
    stack = [(node, np.arange(x.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.weight
            continue
        mask = x[idx, nd.feature] <= nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


def fit_boosted(data: SupervisedDataSet, cfg: BoostConfig = BoostConfig()) -> BoostedEnsemble:
    """Run cfg.n_rounds Newton-boosting rounds on one supervised dataset."""
    x = data.features
    y = data.labels
    n = len(y)
    if n == 0:
        raise FitError("cannot fit boosting on an empty dataset")
    base = float(y.mean()) if cfg.base_score is None else float(cfg.base_score)
    rng = np.random.default_rng(cfg.seed)

    preds = np.full(n, base)
    trees: list[TreeNode] = []
    for _ in range(cfg.n_rounds):
        g = preds - y
        h = np.ones(n)
        if cfg.subsample < 1.0:
            size = max(1, int(round(cfg.subsample * n)))
            idx = np.sort(rng.choice(n, size=size, replace=False))
        else:
            idx = np.arange(n)
        tree = _grow(x[idx], g[idx], h[idx], 0, cfg)
        trees.append(tree)
        preds = preds + cfg.shrinkage * tree_predict(tree, x)
    return BoostedEnsemble(
        trees=trees, shrinkage=cfg.shrinkage, base_score=base, n_features=x.shape[1]
    )


def predict_boosted(model: BoostedEnsemble, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.n_features:
        raise ValidationError(f"expected {model.n_features} features, got {x.size}")
    row = x[None, :]
    total = model.base_score
    for tree in model.trees:
        total += model.shrinkage * float(tree_predict(tree, row)[0])
    return total
