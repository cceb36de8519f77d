"""Gradient-boosted regression trees with a second-order objective.

Squared-error loss in the halved convention, 0.5 * sum (y - yhat)^2, so the
per-point gradient is g = yhat - y and the hessian is h = 1.  Leaf weights
minimize the second-order objective sum(g w + 0.5 h w^2) + 0.5 lambda w^2,
giving w* = -G / (H + lambda).  Split search is exact greedy over midpoints
of consecutive distinct sorted feature values, with a deterministic
tie-break: lowest feature index first, then lowest threshold.

An Ensemble is an ordered list of segments (base first, then fine-tune),
each a list of trees sharing one learning rate.  The NormSpec stored on the
ensemble maps physical inputs to model space: voltages divide by v_scale,
currents by i_scale, and predictions multiply back by v_scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class TrainingError(RuntimeError):
    """Boosting aborted; carries the offending round index."""

    def __init__(self, message: str, round_index: int):
        super().__init__(f"{message} (round {round_index})")
        self.round_index = round_index


MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NormSpec:
    """Feature/target scaling between physical units and model space."""

    v_scale: float = 1.0
    i_scale: float = 1.0

    def __post_init__(self):
        if not (self.v_scale > 0 and self.i_scale > 0):
            raise ValueError("normalization scales must be positive")


@dataclass
class TreeNode:
    """Binary regression tree node; a leaf has no children."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def leaf_value(self, x) -> float:
        node = self
        while not node.is_leaf:
            node = node.left if x[node.feature] < node.threshold else node.right
        return node.weight


@dataclass(frozen=True)
class Segment:
    """A block of trees trained together with one learning rate."""

    tag: str
    learning_rate: float
    trees: tuple

    def __post_init__(self):
        if self.tag not in ("base", "finetune"):
            raise ValueError("segment tag must be 'base' or 'finetune'")
        object.__setattr__(self, "trees", tuple(self.trees))


@dataclass
class BoostHistory:
    """Per-round mean-squared losses recorded during a boosting run."""

    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)


@dataclass
class Ensemble:
    """Additive tree model: base_score plus learning-rate-weighted leaves."""

    base_score: float
    segments: tuple
    norm: NormSpec = NormSpec()
    history: BoostHistory | None = None

    def __post_init__(self):
        self.segments = tuple(self.segments)
        tags = [s.tag for s in self.segments]
        if "finetune" in tags and "base" in tags[tags.index("finetune"):]:
            raise ValueError("segments must be ordered base-first")

    @property
    def n_trees(self) -> int:
        return sum(len(s.trees) for s in self.segments)

    def tree_counts(self) -> dict:
        counts: dict = {}
        for s in self.segments:
            counts[s.tag] = counts.get(s.tag, 0) + len(s.trees)
        return counts


@dataclass(frozen=True)
class TrainConfig:
    """Boosting hyper-parameters."""

    n_trees: int = 400
    max_depth: int = 4
    learning_rate: float = 0.12
    lambda_l2: float = 1.0
    gamma_leaf: float = 0.0
    min_child_weight: float = 1.0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.lambda_l2 < 0 or self.gamma_leaf < 0:
            raise ValueError("regularizers must be nonnegative")
        if self.min_child_weight < 0:
            raise ValueError("min_child_weight must be nonnegative")


BASE_RECIPE = TrainConfig(n_trees=400, max_depth=4, learning_rate=0.12)


def leaf_weight(grad_sum: float, hess_sum: float, lambda_l2: float) -> float:
    """Optimal leaf weight -G / (H + lambda)."""
    denom = hess_sum + lambda_l2
    if denom == 0.0:
        raise ValueError("hess_sum + lambda_l2 must be nonzero")
    return -grad_sum / denom


def split_gain(g_left: float, h_left: float, g_right: float, h_right: float,
               lambda_l2: float, gamma_leaf: float) -> float:
    """Objective reduction of a candidate split."""
    lam = lambda_l2
    return 0.5 * (g_left ** 2 / (h_left + lam)
                  + g_right ** 2 / (h_right + lam)
                  - (g_left + g_right) ** 2 / (h_left + h_right + lam)) - gamma_leaf


def _best_split(x, g, h, idx_by_feature, cfg: TrainConfig):
    """Scan both features over midpoints of consecutive distinct values.

    Returns (gain, feature, threshold) of the best candidate or None.  The
    strict > update combined with ascending scan order realizes the
    tie-break contract.
    """
    g_total = float(g[idx_by_feature[0]].sum())
    h_total = float(h[idx_by_feature[0]].sum())
    parent = g_total ** 2 / (h_total + cfg.lambda_l2)
    best = None
    for f in (0, 1):
        idx = idx_by_feature[f]
        xv = x[idx, f]
        distinct = xv[:-1] < xv[1:]
        if not distinct.any():
            continue
        gs = np.cumsum(g[idx])[:-1]
        hs = np.cumsum(h[idx])[:-1]
        thr = (xv[:-1] + xv[1:]) * 0.5
        ok = distinct & (thr > xv[:-1])  # degenerate midpoints cannot partition
        ok &= (hs >= cfg.min_child_weight) & (h_total - hs >= cfg.min_child_weight)
        if not ok.any():
            continue
        gl, hl = gs[ok], hs[ok]
        gr, hr = g_total - gl, h_total - hl
        gains = 0.5 * (gl ** 2 / (hl + cfg.lambda_l2)
                       + gr ** 2 / (hr + cfg.lambda_l2) - parent) - cfg.gamma_leaf
        j = int(np.argmax(gains))
        if best is None or gains[j] > best[0]:
            best = (float(gains[j]), f, float(thr[ok][j]))
    return best


def _grow(x, g, h, idx_by_feature, cfg: TrainConfig, depth: int, leaf_updates: list):
    idx = idx_by_feature[0]
    g_sum = float(g[idx].sum())
    h_sum = float(h[idx].sum())

    def leaf():
        w = leaf_weight(g_sum, h_sum, cfg.lambda_l2)
        leaf_updates.append((idx, w))
        return TreeNode(weight=w)

    if depth >= cfg.max_depth or idx.shape[0] < 2:
        return leaf()
    best = _best_split(x, g, h, idx_by_feature, cfg)
    if best is None or best[0] <= 0.0:
        return leaf()
    _, f, thr = best
    go_left = [x[ix, f] < thr for ix in idx_by_feature]
    left_idx = (idx_by_feature[0][go_left[0]], idx_by_feature[1][go_left[1]])
    right_idx = (idx_by_feature[0][~go_left[0]], idx_by_feature[1][~go_left[1]])
    return TreeNode(
        feature=f, threshold=thr,
        left=_grow(x, g, h, left_idx, cfg, depth + 1, leaf_updates),
        right=_grow(x, g, h, right_idx, cfg, depth + 1, leaf_updates))


def fit_tree(data, current_pred, cfg: TrainConfig) -> TreeNode:
    """Fit one regression tree to the residuals of the current prediction."""
    x = np.asarray(data.x, dtype=float)
    y = np.asarray(data.y, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("cannot fit a tree on empty data")
    pred = np.broadcast_to(np.asarray(current_pred, dtype=float), y.shape)
    g = pred - y
    h = np.ones_like(y)
    idx0 = np.argsort(x[:, 0], kind="stable")
    idx1 = np.argsort(x[:, 1], kind="stable")
    return _grow(x, g, h, (idx0, idx1), cfg, 0, [])


def _eval_tree(tree: TreeNode, x: np.ndarray) -> np.ndarray:
    """Vectorized leaf lookup for one tree over an (N, 2) matrix."""
    flat = _flatten(tree)
    feature = flat["feature"]
    threshold = flat["threshold"]
    left = flat["left"]
    right = flat["right"]
    node = np.zeros(x.shape[0], dtype=np.int64)
    while True:
        f = feature[node]
        internal = f >= 0
        if not internal.any():
            break
        vals = np.where(f == 0, x[:, 0], x[:, 1])
        child = np.where(vals < threshold[node], left[node], right[node])
        node = np.where(internal, child, node)
    return flat["weight"][node]


def _boost_segment(x, y, preds, cfg: TrainConfig, tag: str,
                   val_x=None, val_y=None, val_preds=None):
    """Run cfg.n_trees boosting rounds starting from the given predictions.

    Mutates preds / val_preds in place and returns (Segment, BoostHistory).
    """
    history = BoostHistory()
    idx0 = np.argsort(x[:, 0], kind="stable")
    idx1 = np.argsort(x[:, 1], kind="stable")
    h = np.ones_like(y)
    trees = []
    for rnd in range(cfg.n_trees):
        g = preds - y
        if not math.isfinite(float(np.dot(g, g))):
            raise TrainingError("non-finite training loss", rnd)
        leaf_updates: list = []
        tree = _grow(x, g, h, (idx0, idx1), cfg, 0, leaf_updates)
        for idx, w in leaf_updates:
            preds[idx] += cfg.learning_rate * w
        loss = float(np.mean((y - preds) ** 2))
        if not math.isfinite(loss):
            raise TrainingError("non-finite training loss", rnd)
        history.train_mse.append(loss)
        if val_x is not None:
            val_preds += cfg.learning_rate * _eval_tree(tree, val_x)
            history.val_mse.append(float(np.mean((val_y - val_preds) ** 2)))
        trees.append(tree)
    return Segment(tag, cfg.learning_rate, tuple(trees)), history


def train(data, val, cfg: TrainConfig) -> Ensemble:
    """Train a base ensemble; loss curves land on ensemble.history."""
    x = np.asarray(data.x, dtype=float)
    y = np.asarray(data.y, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("training data is empty")
    norm = data.meta.get("norm", NormSpec()) if hasattr(data, "meta") else NormSpec()
    base_score = float(y.mean())
    preds = np.full(y.shape, base_score)
    val_x = val_y = val_preds = None
    if val is not None and len(val.y):
        val_x = np.asarray(val.x, dtype=float)
        val_y = np.asarray(val.y, dtype=float)
        val_preds = np.full(val_y.shape, base_score)
    segment, history = _boost_segment(
        x, y, preds, cfg, "base", val_x, val_y, val_preds)
    return Ensemble(base_score=base_score, segments=(segment,), norm=norm,
                    history=history)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict_model_space(ens: Ensemble, x_model: np.ndarray) -> np.ndarray:
    """Raw additive model output for already-normalized (N, 2) inputs."""
    out = np.full(x_model.shape[0], ens.base_score)
    for seg in ens.segments:
        for tree in seg.trees:
            out += seg.learning_rate * _eval_tree(tree, x_model)
    return out


def predict_batch(ens: Ensemble, x: np.ndarray) -> np.ndarray:
    """Predict next voltages for an (N, 2) matrix of physical (v, i) rows."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    x_model = np.column_stack([x[:, 0] / ens.norm.v_scale,
                               x[:, 1] / ens.norm.i_scale])
    return predict_model_space(ens, x_model) * ens.norm.v_scale


def predict(ens: Ensemble, x) -> float:
    """Predict the next voltage for one physical (v, i) pair."""
    v, i = float(x[0]), float(x[1])
    if not (math.isfinite(v) and math.isfinite(i)):
        raise ValueError("features must be finite")
    xm = (v / ens.norm.v_scale, i / ens.norm.i_scale)
    out = ens.base_score
    for seg in ens.segments:
        for tree in seg.trees:
            out += seg.learning_rate * tree.leaf_value(xm)
    return out * ens.norm.v_scale


# ---------------------------------------------------------------------------
# Serialization (versioned JSON, bit-stable round trips)
# ---------------------------------------------------------------------------

def _flatten(tree: TreeNode) -> dict:
    cached = getattr(tree, "_flat", None)
    if cached is not None:
        return cached
    feature, threshold, left, right, weight = [], [], [], [], []

    def visit(node: TreeNode) -> int:
        pos = len(feature)
        feature.append(node.feature if not node.is_leaf else -1)
        threshold.append(node.threshold if not node.is_leaf else 0.0)
        left.append(-1)
        right.append(-1)
        weight.append(node.weight if node.is_leaf else 0.0)
        if not node.is_leaf:
            left[pos] = visit(node.left)
            right[pos] = visit(node.right)
        return pos

    visit(tree)
    flat = {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=float),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "weight": np.array(weight, dtype=float),
    }
    tree._flat = flat
    return flat


def _unflatten(doc: dict) -> TreeNode:
    feature = doc["feature"]
    n = len(feature)
    shapes = {len(doc[k]) for k in ("feature", "threshold", "left", "right", "weight")}
    if shapes != {n}:
        raise ValueError("inconsistent tree node arrays")

    def build(pos: int) -> TreeNode:
        if feature[pos] < 0:
            return TreeNode(weight=float(doc["weight"][pos]))
        return TreeNode(
            feature=int(feature[pos]), threshold=float(doc["threshold"][pos]),
            left=build(int(doc["left"][pos])), right=build(int(doc["right"][pos])))

    return build(0)


def model_to_json(ens: Ensemble) -> str:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "base_score": float(ens.base_score),
        "norm": {"v_scale": float(ens.norm.v_scale),
                 "i_scale": float(ens.norm.i_scale)},
        "segments": [
            {
                "tag": seg.tag,
                "learning_rate": float(seg.learning_rate),
                "trees": [
                    {
                        "feature": [int(v) for v in _flatten(t)["feature"]],
                        "threshold": [float(v) for v in _flatten(t)["threshold"]],
                        "left": [int(v) for v in _flatten(t)["left"]],
                        "right": [int(v) for v in _flatten(t)["right"]],
                        "weight": [float(v) for v in _flatten(t)["weight"]],
                    }
                    for t in seg.trees
                ],
            }
            for seg in ens.segments
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def model_from_json(text: str) -> Ensemble:
    doc = json.loads(text)
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')!r}")
    segments = tuple(
        Segment(
            tag=seg["tag"], learning_rate=seg["learning_rate"],
            trees=tuple(_unflatten(t) for t in seg["trees"]))
        for seg in doc["segments"])
    norm = NormSpec(v_scale=doc["norm"]["v_scale"], i_scale=doc["norm"]["i_scale"])
    return Ensemble(base_score=doc["base_score"], segments=segments, norm=norm)


def save_model(path, ens: Ensemble) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(ens) + "\n")


def load_model(path) -> Ensemble:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(fh.read())
