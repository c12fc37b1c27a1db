"""Evaluation statistics for censored survival predictions.

Everything here is implemented from the definitions: Harrell's concordance
over comparable pairs, percentile bootstrap intervals, the Kaplan-Meier
product-limit curve, the two-sample log-rank test, the net reclassification
improvement, and the Wilcoxon signed-rank test with an exact small-sample
null distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import SurvivalLabel, label_arrays
from .errors import (
    DegenerateResamplingError,
    EmptyGroupError,
    MismatchedLengthsError,
    NoComparablePairsError,
    NoEventsError,
    NoNoneventsError,
    TooFewPairsError,
    TooFewResamplesError,
)

# give up on a bootstrap after this many redraws of a single resample
_MAX_REDRAWS_PER_RESAMPLE = 100


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str


@dataclass(frozen=True)
class KmPoint:
    time: float
    survival: float
    at_risk: int
    events: int


@dataclass(frozen=True)
class KmCurve:
    points: tuple[KmPoint, ...]
    group_label: str = ""
    n_subjects: int = 0

    def survival_at(self, t: float) -> float:
        s = 1.0
        for pt in self.points:
            if pt.time <= t:
                s = pt.survival
            else:
                break
        return s


@dataclass(frozen=True)
class NriResult:
    nri: float
    event_up: int
    event_down: int
    nonevent_up: int
    nonevent_down: int
    n_events: int
    n_nonevents: int
    threshold: float


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def c_index(scores, labels: list[SurvivalLabel]) -> float:
    """Harrell's concordance index.

    A pair (i, j) is comparable when subject i has an observed event strictly
    before j's time. Concordant pairs (higher score for the earlier event)
    count 1, score ties count 1/2.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size != len(labels):
        raise MismatchedLengthsError(f"{s.size} scores for {len(labels)} labels")
    t, e = label_arrays(labels)
    comparable = e[:, None] & (t[:, None] < t[None, :])
    n_pairs = int(comparable.sum())
    if n_pairs == 0:
        raise NoComparablePairsError("no (event, later-time) pair exists")
    greater = int((comparable & (s[:, None] > s[None, :])).sum())
    tied = int((comparable & (s[:, None] == s[None, :])).sum())
    return float((greater + 0.5 * tied) / n_pairs)


def bootstrap_ci(metric_fn, scores, labels: list[SurvivalLabel],
                 n_resamples: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Percentile 95% interval (2.5th/97.5th) of ``metric_fn`` under resampling.

    Patients are drawn with replacement; a resample on which the metric is
    undefined (e.g. no comparable pairs) is redrawn, up to a bounded number
    of attempts.
    """
    if n_resamples < 100:
        raise TooFewResamplesError(f"need at least 100 resamples, got {n_resamples}")
    s = np.asarray(scores, dtype=float)
    if s.size != len(labels):
        raise MismatchedLengthsError(f"{s.size} scores for {len(labels)} labels")
    rng = np.random.default_rng(seed)
    n = s.size
    values = np.empty(n_resamples)
    for r in range(n_resamples):
        for _ in range(_MAX_REDRAWS_PER_RESAMPLE):
            idx = rng.integers(0, n, size=n)
            try:
                values[r] = metric_fn(s[idx], [labels[i] for i in idx])
                break
            except NoComparablePairsError:
                continue
        else:
            raise DegenerateResamplingError(
                f"resample {r}: no valid draw in {_MAX_REDRAWS_PER_RESAMPLE} attempts"
            )
    lo, hi = np.percentile(values, [2.5, 97.5])
    return float(lo), float(hi)


def km_curve(labels: list[SurvivalLabel], group_label: str = "") -> KmCurve:
    """Kaplan-Meier product-limit estimate, one point per distinct event time."""
    if not labels:
        raise EmptyGroupError("cannot estimate a survival curve for an empty group")
    t, e = label_arrays(labels)
    event_times = np.unique(t[e])
    points = []
    s = 1.0
    for v in event_times:
        at_risk = int((t >= v).sum())
        deaths = int(((t == v) & e).sum())
        s *= 1.0 - deaths / at_risk
        points.append(KmPoint(time=float(v), survival=s, at_risk=at_risk, events=deaths))
    return KmCurve(points=tuple(points), group_label=group_label, n_subjects=len(labels))


def logrank_test(labels_a: list[SurvivalLabel], labels_b: list[SurvivalLabel]) -> TestResult:
    """Two-sample log-rank test (chi-square statistic, 1 degree of freedom)."""
    if not labels_a or not labels_b:
        raise EmptyGroupError("both groups need at least one subject")
    ta, ea = label_arrays(labels_a)
    tb, eb = label_arrays(labels_b)
    t = np.concatenate([ta, tb])
    e = np.concatenate([ea, eb])
    in_a = np.zeros(t.size, dtype=bool)
    in_a[: ta.size] = True
    if not e.any():
        raise NoEventsError("log-rank test needs at least one event")

    observed_minus_expected = 0.0
    variance = 0.0
    for v in np.unique(t[e]):
        at_risk = t >= v
        n = int(at_risk.sum())
        n_a = int((at_risk & in_a).sum())
        deaths = int(((t == v) & e).sum())
        deaths_a = int(((t == v) & e & in_a).sum())
        observed_minus_expected += deaths_a - deaths * n_a / n
        if n > 1:
            variance += deaths * (n_a / n) * (1.0 - n_a / n) * (n - deaths) / (n - 1)
    if variance <= 0.0:
        return TestResult(statistic=0.0, p_value=1.0, method="logrank")
    chi2 = observed_minus_expected ** 2 / variance
    # chi-square(1) upper tail via the complementary error function
    p = math.erfc(math.sqrt(chi2 / 2.0))
    return TestResult(statistic=float(chi2), p_value=float(p), method="logrank")


def nri(old_scores, new_scores, labels: list[SurvivalLabel], threshold: float = 0.7) -> NriResult:
    """Net reclassification improvement at a fixed risk threshold.

    Scores at or above the threshold are "high risk". Events moving up and
    non-events moving down count in favor of the new model. Scores must
    already live on the scale the threshold refers to; callers fusing models
    with unbounded linear predictors should map them through ``sigmoid``
    first so a single threshold serves every model.
    """
    old = np.asarray(old_scores, dtype=float)
    new = np.asarray(new_scores, dtype=float)
    if old.size != new.size or old.size != len(labels):
        raise MismatchedLengthsError(
            f"old ({old.size}), new ({new.size}) and labels ({len(labels)}) must align"
        )
    _, e = label_arrays(labels)
    n_events = int(e.sum())
    n_nonevents = int((~e).sum())
    if n_events == 0:
        raise NoEventsError("NRI needs at least one event")
    if n_nonevents == 0:
        raise NoNoneventsError("NRI needs at least one non-event")

    up = (old < threshold) & (new >= threshold)
    down = (old >= threshold) & (new < threshold)
    event_up = int((up & e).sum())
    event_down = int((down & e).sum())
    nonevent_up = int((up & ~e).sum())
    nonevent_down = int((down & ~e).sum())
    value = (event_up - event_down) / n_events + (nonevent_down - nonevent_up) / n_nonevents
    return NriResult(
        nri=float(value),
        event_up=event_up,
        event_down=event_down,
        nonevent_up=nonevent_up,
        nonevent_down=nonevent_down,
        n_events=n_events,
        n_nonevents=n_nonevents,
        threshold=threshold,
    )


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_signed_rank_p(ranks: np.ndarray, w_positive: float) -> float:
    """Two-sided exact p by counting sign assignments.

    Doubling the midranks makes them integers, so the full 2^n sign-flip
    distribution of the positive-rank sum is a subset-sum count, built here
    by dynamic programming. Counts stay below 2^n <= 2^20, exact in float64.
    """
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts += shifted
    n_patterns = 2.0 ** ranks.size
    w2 = int(np.rint(2.0 * w_positive))
    p_geq = counts[w2:].sum() / n_patterns
    p_leq = counts[: w2 + 1].sum() / n_patterns
    return min(1.0, 2.0 * min(p_geq, p_leq))


def wilcoxon_signed_rank(diffs, exact_threshold: int = 20) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped; absolute values are mid-ranked. With at
    most ``exact_threshold`` nonzero pairs the p-value is exact (full sign
    enumeration); beyond that a tie-corrected normal approximation with
    continuity correction is used. Fewer than 5 nonzero pairs raises.
    """
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0.0]
    n = d.size
    if n < 5:
        raise TooFewPairsError(f"need at least 5 nonzero differences, got {n}")
    ranks = _midranks(np.abs(d))
    w_positive = float(ranks[d > 0].sum())
    if n <= exact_threshold:
        p = _exact_signed_rank_p(ranks, w_positive)
        method = "wilcoxon-signed-rank-exact"
    else:
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        var -= float((tie_counts.astype(float) ** 3 - tie_counts).sum()) / 48.0
        if var <= 0:
            return TestResult(statistic=w_positive, p_value=1.0,
                              method="wilcoxon-signed-rank-normal")
        centered = w_positive - mean
        z = (centered - 0.5 * np.sign(centered)) / math.sqrt(var)
        p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
        method = "wilcoxon-signed-rank-normal"
    return TestResult(statistic=w_positive, p_value=float(p), method=method)
