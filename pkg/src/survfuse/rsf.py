"""Random survival forest.

Trees are grown on bootstrap resamples, splitting on the standardized
absolute two-sample log-rank statistic evaluated exhaustively over midpoint
thresholds of ``mtry`` randomly chosen features per node. Leaves store the
Nelson-Aalen cumulative hazard of their in-bag subjects. A subject's
ensemble mortality is the mean over trees of the leaf cumulative hazard
summed across the training event-time grid, so higher values mean higher
predicted risk on the training time scale.

Determinism: per-tree generators are spawned from the master seed before
any tree is grown, node recursion is depth-first left-to-right, and fitting
canonicalizes the sample order by a stable (time, event) sort so a
permutation of the input records cannot change the forest (up to exact
(time, event) ties between records with different features).

The split-search inner loop exploits two identities to stay vectorized:
the log-rank numerator for a left prefix equals the prefix sum of the
per-subject martingale residuals (event flag minus node Nelson-Aalen at the
subject's time), and the hypergeometric variance is a weighted sum of
``n_left * (n_at_risk - n_left)`` terms over event times, with prefix
at-risk counts obtained by one cumulative sum per candidate feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import SurvivalLabel, label_arrays
from .errors import (
    DegenerateDataError,
    DimensionMismatchError,
    EmptyChildError,
    NoEventsError,
    NonFiniteInputError,
)


@dataclass(frozen=True)
class RsfOptions:
    n_trees: int = 100
    mtry: int | None = None          # default: ceil(sqrt(n_features))
    min_leaf_size: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be >= 1")


@dataclass(eq=False)
class SurvivalTree:
    """Flat node arrays: feature < 0 marks a leaf, whose index into the leaf
    tables is stored in ``leaf_slot``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_slot: np.ndarray
    leaf_times: list[np.ndarray]      # distinct event times in the leaf
    leaf_chf: list[np.ndarray]        # Nelson-Aalen values at leaf_times
    leaf_mortality: np.ndarray        # sum of the leaf CHF over the forest grid


@dataclass(eq=False)
class ForestModel:
    trees: list[SurvivalTree]
    event_time_grid: np.ndarray
    n_features: int
    options: RsfOptions


def logrank_split_score(left: list[SurvivalLabel], right: list[SurvivalLabel]) -> float:
    """Standardized absolute two-sample log-rank statistic |O - E| / sqrt(V).

    Zero when the variance vanishes (no separating information).
    """
    if not left or not right:
        raise EmptyChildError("both children need at least one subject")
    tl, el = label_arrays(left)
    tr, er = label_arrays(right)
    t = np.concatenate([tl, tr])
    e = np.concatenate([el, er])
    in_left = np.zeros(t.size, dtype=bool)
    in_left[: tl.size] = True
    if not e.any():
        raise NoEventsError("log-rank split score needs at least one event")
    num = 0.0
    var = 0.0
    for v in np.unique(t[e]):
        at_risk = t >= v
        n = int(at_risk.sum())
        n_l = int((at_risk & in_left).sum())
        d = int(((t == v) & e).sum())
        d_l = int(((t == v) & e & in_left).sum())
        num += d_l - d * n_l / n
        if n > 1:
            var += d * (n_l / n) * (1.0 - n_l / n) * (n - d) / (n - 1)
    if var <= 0.0:
        return 0.0
    return abs(num) / math.sqrt(var)


def _node_statistics(t: np.ndarray, e: np.ndarray):
    """Event grid, at-risk matrix, variance weights and residuals for a node."""
    grid = np.unique(t[e])
    at_risk = t[None, :] >= grid[:, None]
    n_e = at_risk.sum(axis=1).astype(float)
    d_e = ((t[None, :] == grid[:, None]) & e[None, :]).sum(axis=1).astype(float)
    k_e = np.where(n_e > 1, d_e * (n_e - d_e) / (n_e ** 2 * np.maximum(n_e - 1, 1.0)), 0.0)
    na = np.cumsum(d_e / n_e)
    gidx = np.searchsorted(grid, t, side="right") - 1
    resid = e.astype(float) - np.where(gidx >= 0, na[np.maximum(gidx, 0)], 0.0)
    return at_risk.astype(float), n_e, k_e, resid


def _best_split(X_node, t_node, e_node, candidates, min_leaf):
    m = t_node.size
    if not e_node.any():
        return None
    at_risk, n_e, k_e, resid = _node_statistics(t_node, e_node)
    lo, hi = min_leaf - 1, m - min_leaf - 1
    if hi < lo:
        return None
    positions = np.arange(lo, hi + 1)
    best_score = 0.0
    best = None
    for f in candidates:
        v = X_node[:, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        cand = positions[vs[positions] < vs[positions + 1]]
        if cand.size == 0:
            continue
        prefix_resid = np.cumsum(resid[order])
        n_left = np.cumsum(at_risk[:, order], axis=1)
        var = (k_e[:, None] * n_left * (n_e[:, None] - n_left)).sum(axis=0)
        var_c = var[cand]
        scores = np.zeros(cand.size)
        ok = var_c > 0
        scores[ok] = np.abs(prefix_resid[cand[ok]]) / np.sqrt(var_c[ok])
        j = int(np.argmax(scores))
        if scores[j] > best_score:
            best_score = float(scores[j])
            best = (int(f), float((vs[cand[j]] + vs[cand[j] + 1]) / 2.0))
    return best


def _nelson_aalen(t: np.ndarray, e: np.ndarray):
    grid = np.unique(t[e])
    if grid.size == 0:
        return grid, np.zeros(0)
    at_risk = (t[None, :] >= grid[:, None]).sum(axis=1).astype(float)
    deaths = ((t[None, :] == grid[:, None]) & e[None, :]).sum(axis=1).astype(float)
    return grid, np.cumsum(deaths / at_risk)


def _chf_at(times: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(times, query, side="right") - 1
    out = np.zeros(query.size)
    hit = idx >= 0
    out[hit] = values[idx[hit]]
    return out


def _grow_tree(X, t, e, rng, mtry, min_leaf, forest_grid):
    feature, threshold, left, right, leaf_slot = [], [], [], [], []
    leaf_times, leaf_chf, leaf_mort = [], [], []
    n_features = X.shape[1]

    def make_leaf(idx):
        node = len(feature)
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        slot = len(leaf_times)
        leaf_slot.append(slot)
        g, h = _nelson_aalen(t[idx], e[idx])
        leaf_times.append(g)
        leaf_chf.append(h)
        leaf_mort.append(float(_chf_at(g, h, forest_grid).sum()))
        return node

    def build(idx):
        if idx.size < 2 * min_leaf or not e[idx].any():
            return make_leaf(idx)
        candidates = rng.choice(n_features, size=min(mtry, n_features), replace=False)
        split = _best_split(X[idx], t[idx], e[idx], candidates, min_leaf)
        if split is None:
            return make_leaf(idx)
        f, thr = split
        go_left = X[idx, f] <= thr
        node = len(feature)
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        leaf_slot.append(-1)
        left[node] = build(idx[go_left])
        right[node] = build(idx[~go_left])
        return node

    build(np.arange(t.size))
    return SurvivalTree(
        feature=np.array(feature, dtype=int),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=int),
        right=np.array(right, dtype=int),
        leaf_slot=np.array(leaf_slot, dtype=int),
        leaf_times=leaf_times,
        leaf_chf=leaf_chf,
        leaf_mortality=np.array(leaf_mort, dtype=float),
    )


def fit_forest(X: np.ndarray, labels: list[SurvivalLabel],
               options: RsfOptions | None = None) -> ForestModel:
    opts = options or RsfOptions()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise DimensionMismatchError(f"X shape {X.shape} does not match {len(labels)} labels")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInputError("X contains non-finite values")
    n, p = X.shape
    if n < 2 * opts.min_leaf_size:
        raise DegenerateDataError(
            f"need at least 2 * min_leaf_size = {2 * opts.min_leaf_size} subjects, got {n}"
        )
    times, events = label_arrays(labels)
    if not events.any():
        raise NoEventsError("forest fitting needs at least one event")

    # canonical sample order: stable sort by (time, event) so fitting is
    # independent of the caller's record order
    order = np.lexsort((events, times))
    Xc, tc, ec = X[order], times[order], events[order]

    grid = np.unique(tc[ec])
    mtry = opts.mtry if opts.mtry is not None else int(np.ceil(np.sqrt(p)))
    streams = np.random.SeedSequence(opts.seed).spawn(opts.n_trees)
    trees = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(Xc[boot], tc[boot], ec[boot], rng, mtry,
                                opts.min_leaf_size, grid))
    return ForestModel(trees=trees, event_time_grid=grid, n_features=p, options=opts)


def _route(tree: SurvivalTree, X: np.ndarray) -> np.ndarray:
    pos = np.zeros(X.shape[0], dtype=int)
    while True:
        feats = tree.feature[pos]
        active = np.nonzero(feats >= 0)[0]
        if active.size == 0:
            return pos
        node = pos[active]
        vals = X[active, tree.feature[node]]
        pos[active] = np.where(vals <= tree.threshold[node],
                               tree.left[node], tree.right[node])


def predict_risk(model: ForestModel, x: np.ndarray):
    """Ensemble mortality for one record (1-D) or a batch (2-D)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.n_features:
        raise DimensionMismatchError(
            f"model has {model.n_features} features, input has {X.shape[1]}"
        )
    total = np.zeros(X.shape[0])
    for tree in model.trees:
        leaves = tree.leaf_slot[_route(tree, X)]
        total += tree.leaf_mortality[leaves]
    risk = total / len(model.trees)
    return float(risk[0]) if single else risk
