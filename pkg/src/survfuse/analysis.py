"""Study-level analyses: risk stratification, factor analysis, model
comparison, and the end-to-end evaluation pipeline.

``run_study`` reproduces the full experiment on one cohort: split, impute,
train the clinical and imaging networks, fuse (pairwise, with the severity
index, and over the two forest baselines), then evaluate concordance with
bootstrap intervals overall and truncated at 30 days, the reclassification
ledger, stratified survival curves with log-rank tests, paired comparisons
against the severity index, and the RV dysfunction factor analysis. The
whole pipeline is deterministic given the config seed: every stochastic
stage draws from its own substream derived from (seed, stage).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import deep_survival, pesi, rsf
from .cox_linear import FitOptions
from .dataset import (
    Dataset,
    SurvivalLabel,
    clinical_matrix,
    impute_missing,
    split_dataset,
    truncate_30day,
)
from .errors import (
    DegenerateResamplingError,
    EmptyInputError,
    MismatchedLengthsError,
    MissingModalityError,
    NoComparablePairsError,
    TooFewPairsError,
    TooFewResamplesError,
)
from .fusion import FusionModel, fit_fusion, predict_fused
from .metrics import (
    TestResult,
    bootstrap_ci,
    c_index,
    km_curve,
    logrank_test,
    nri,
    sigmoid,
    wilcoxon_signed_rank,
)

MODEL_KINDS = (
    "pesi",
    "rsf_fused",
    "deep_imaging",
    "deep_clinical",
    "deep_multimodal",
    "deep_pesi_fused",
)

# the short-term table drops the forest baseline
SHORT_TERM_KINDS = tuple(k for k in MODEL_KINDS if k != "rsf_fused")

SPLIT_NAMES = ("train", "val", "test")

_MAX_REDRAWS = 100


@dataclass(frozen=True)
class RiskStrata:
    high_ids: tuple[str, ...]
    low_ids: tuple[str, ...]
    cut_value: float
    method: str


@dataclass(frozen=True)
class RvFactorReport:
    n_rv: int
    rv_high_count: int
    rv_high_pct: float | None        # None when there are no RV patients
    n_deaths: int
    deaths_high_count: int
    death_capture_pct: float | None  # None when there are no deaths


@dataclass(frozen=True)
class ComparisonResult:
    test: TestResult
    mean_diff: float
    n_resamples: int


def format_pct(value: float) -> str:
    """Percentages are reported at one decimal place (e.g. '68.8')."""
    return f"{value:.1f}"


def stratify(scores, ids, method: str = "median", threshold: float | None = None) -> RiskStrata:
    """Partition patients into high/low risk groups; ties go to high.

    ``median`` cuts at the sample median of the scores; ``fixed`` uses the
    supplied threshold unchanged.
    """
    s = np.asarray(scores, dtype=float)
    ids = tuple(ids)
    if s.size == 0:
        raise EmptyInputError("no scores to stratify")
    if s.size != len(ids):
        raise MismatchedLengthsError(f"{s.size} scores for {len(ids)} ids")
    if method == "median":
        cut = float(np.median(s))
    elif method == "fixed":
        if threshold is None:
            raise ValueError("fixed stratification needs a threshold")
        cut = float(threshold)
    else:
        raise ValueError(f"unknown stratification method {method!r}")
    high = s >= cut
    return RiskStrata(
        high_ids=tuple(i for i, h in zip(ids, high) if h),
        low_ids=tuple(i for i, h in zip(ids, high) if not h),
        cut_value=cut,
        method=method,
    )


def rv_factor_analysis(strata: RiskStrata, rv_flags: dict[str, bool],
                       death_flags: dict[str, bool]) -> RvFactorReport:
    """How often RV dysfunction and death land in the high-risk stratum.

    Degenerate denominators (no RV patients, no deaths) yield None fields
    rather than an error so a report can still be produced.
    """
    all_ids = strata.high_ids + strata.low_ids
    missing = [i for i in all_ids if i not in rv_flags or i not in death_flags]
    if missing:
        raise MismatchedLengthsError(
            f"flags missing for {len(missing)} stratified patient(s), e.g. {missing[0]!r}"
        )
    high = set(strata.high_ids)
    rv_ids = [i for i in all_ids if rv_flags[i]]
    death_ids = [i for i in all_ids if death_flags[i]]
    rv_high = sum(1 for i in rv_ids if i in high)
    deaths_high = sum(1 for i in death_ids if i in high)
    return RvFactorReport(
        n_rv=len(rv_ids),
        rv_high_count=rv_high,
        rv_high_pct=100.0 * rv_high / len(rv_ids) if rv_ids else None,
        n_deaths=len(death_ids),
        deaths_high_count=deaths_high,
        death_capture_pct=100.0 * deaths_high / len(death_ids) if death_ids else None,
    )


def compare_to_pesi(model_scores, pesi_scores, labels: list[SurvivalLabel],
                    n_resamples: int = 1000, seed: int = 0) -> ComparisonResult:
    """Paired bootstrap comparison of concordance against the severity index.

    Each resample draws patients with replacement and records the c-index
    difference (model minus index) on the identical resample, so the
    Wilcoxon signed-rank test sees properly paired values. Identical scores
    produce all-zero differences, reported as "no difference" (p = 1).
    """
    if n_resamples < 100:
        raise TooFewResamplesError(f"need at least 100 resamples, got {n_resamples}")
    model_scores = np.asarray(model_scores, dtype=float)
    pesi_scores = np.asarray(pesi_scores, dtype=float)
    n = len(labels)
    if model_scores.size != n or pesi_scores.size != n:
        raise MismatchedLengthsError("scores and labels must align")
    rng = np.random.default_rng(seed)
    diffs = np.empty(n_resamples)
    for r in range(n_resamples):
        for _ in range(_MAX_REDRAWS):
            idx = rng.integers(0, n, size=n)
            sub = [labels[i] for i in idx]
            try:
                diffs[r] = c_index(model_scores[idx], sub) - c_index(pesi_scores[idx], sub)
                break
            except NoComparablePairsError:
                continue
        else:
            raise DegenerateResamplingError(f"resample {r}: no valid draw in {_MAX_REDRAWS} attempts")
    try:
        test = wilcoxon_signed_rank(diffs)
    except TooFewPairsError:
        test = TestResult(statistic=0.0, p_value=1.0,
                          method="wilcoxon-signed-rank-degenerate (no nonzero differences)")
    return ComparisonResult(test=test, mean_diff=float(diffs.mean()), n_resamples=n_resamples)


# ---------------------------------------------------------------------------
# full study pipeline


@dataclass(frozen=True)
class DeepHyper:
    hidden_dims: tuple[int, ...] = (32,)
    learning_rate: float = 1e-3
    epochs: int = 500
    weight_decay: float = 1e-4
    patience: int = 50


@dataclass(frozen=True)
class RsfHyper:
    n_trees: int = 100
    mtry: int | None = None
    min_leaf_size: int = 15


@dataclass(frozen=True)
class StudyConfig:
    seed: int = 0
    train_frac: float = 0.7
    val_frac: float = 0.1
    models: tuple[str, ...] = MODEL_KINDS
    bootstrap_resamples: int = 1000
    nri_threshold: float = 0.7
    stratification_method: str = "median"
    stratification_threshold: float | None = None
    deep_clinical: DeepHyper = field(default_factory=DeepHyper)
    deep_imaging: DeepHyper = field(default_factory=lambda: DeepHyper(hidden_dims=(64,)))
    rsf: RsfHyper = field(default_factory=RsfHyper)
    fusion_ridge: float = 1e-8

    def __post_init__(self):
        unknown = set(self.models) - set(MODEL_KINDS)
        if unknown:
            raise ValueError(f"unknown model kinds: {sorted(unknown)}")


@dataclass(frozen=True, eq=False)
class StudyReport:
    overall: dict
    short_term: dict
    nri: dict
    km: dict
    rv_analysis: dict | None
    comparisons: dict


@dataclass(eq=False)
class StudyArtifacts:
    """Fitted components kept for persistence and scoring."""

    dataset: Dataset
    split: object
    deep_clinical: object | None = None
    deep_imaging: object | None = None
    rsf_clin: object | None = None
    rsf_img: object | None = None
    fusion_multimodal: FusionModel | None = None
    fusion_pesi: FusionModel | None = None
    fusion_rsf: FusionModel | None = None


# stage tags for derived random substreams; order is frozen, append only
_STAGE = {"split": 0, "deep_clinical": 1, "deep_imaging": 2, "rsf_clin": 3,
          "rsf_img": 4, "ci": 5, "compare": 6, "ci_short": 7}


def _derived_seed(*key: int) -> int:
    return int(np.random.SeedSequence(tuple(key)).generate_state(1, dtype=np.uint64)[0])


def _needs(models, *kinds):
    return any(k in models for k in kinds)


def run_study(ds: Dataset, config: StudyConfig | None = None) -> StudyReport:
    report, _ = run_study_full(ds, config)
    return report


def run_study_full(ds: Dataset, config: StudyConfig | None = None):
    """Returns ``(StudyReport, StudyArtifacts)``; see module docstring."""
    cfg = config or StudyConfig()
    models = tuple(cfg.models)

    split = split_dataset(ds, cfg.seed, cfg.train_frac, cfg.val_frac)
    ds = impute_missing(ds, split.train_ids)

    id_rows = {r.patient_id: i for i, r in enumerate(ds.records)}
    rows = {
        "train": np.array([id_rows[i] for i in ds.patient_ids if i in set(split.train_ids)]),
        "val": np.array([id_rows[i] for i in ds.patient_ids if i in set(split.val_ids)]),
        "test": np.array([id_rows[i] for i in ds.patient_ids if i in set(split.test_ids)]),
    }
    labels_all = ds.labels
    labels = {s: [labels_all[i] for i in rows[s]] for s in SPLIT_NAMES}
    ids = {s: [ds.records[i].patient_id for i in rows[s]] for s in SPLIT_NAMES}

    clin_all = clinical_matrix(ds)
    clin = {s: clin_all[rows[s]] for s in SPLIT_NAMES}

    needs_imaging = _needs(models, "deep_imaging", "deep_multimodal", "deep_pesi_fused", "rsf_fused")
    img = None
    if needs_imaging:
        lacking = [r.patient_id for r in ds.records if r.imaging_features is None]
        if lacking:
            raise MissingModalityError(
                f"{len(lacking)} patient(s) lack imaging features (e.g. {lacking[0]!r}) "
                "but an imaging model was requested"
            )
        img_all = np.array([r.imaging_features for r in ds.records], dtype=float)
        img = {s: img_all[rows[s]] for s in SPLIT_NAMES}

    pesi_all = pesi.pesi_predictor(ds)
    pesi_scores = {s: pesi_all[rows[s]] for s in SPLIT_NAMES}

    arts = StudyArtifacts(dataset=ds, split=split)
    raw: dict[str, dict[str, np.ndarray]] = {}
    prob: dict[str, dict[str, np.ndarray]] = {}

    if "pesi" in models:
        raw["pesi"] = pesi_scores
        prob["pesi"] = {s: sigmoid(pesi_scores[s]) for s in SPLIT_NAMES}

    needs_deep_clin = _needs(models, "deep_clinical", "deep_multimodal", "deep_pesi_fused")
    needs_deep_img = _needs(models, "deep_imaging", "deep_multimodal", "deep_pesi_fused")

    deep_scores: dict[str, dict[str, np.ndarray]] = {}
    if needs_deep_clin:
        hp = cfg.deep_clinical
        net = deep_survival.init_mlp(clin_all.shape[1], hp.hidden_dims,
                                     _derived_seed(cfg.seed, _STAGE["deep_clinical"]), "clin")
        net, _ = deep_survival.train(
            net, clin["train"], labels["train"], val=(clin["val"], labels["val"]),
            options=deep_survival.TrainOptions(
                learning_rate=hp.learning_rate, epochs=hp.epochs,
                weight_decay=hp.weight_decay, patience=hp.patience),
        )
        arts.deep_clinical = net
        deep_scores["clin"] = {s: deep_survival.forward(net, clin[s]) for s in SPLIT_NAMES}
    if needs_deep_img:
        hp = cfg.deep_imaging
        net = deep_survival.init_mlp(img["train"].shape[1], hp.hidden_dims,
                                     _derived_seed(cfg.seed, _STAGE["deep_imaging"]), "img")
        net, _ = deep_survival.train(
            net, img["train"], labels["train"], val=(img["val"], labels["val"]),
            options=deep_survival.TrainOptions(
                learning_rate=hp.learning_rate, epochs=hp.epochs,
                weight_decay=hp.weight_decay, patience=hp.patience),
        )
        arts.deep_imaging = net
        deep_scores["img"] = {s: deep_survival.forward(net, img[s]) for s in SPLIT_NAMES}

    if "deep_clinical" in models:
        raw["deep_clinical"] = deep_scores["clin"]
        prob["deep_clinical"] = deep_scores["clin"]
    if "deep_imaging" in models:
        raw["deep_imaging"] = deep_scores["img"]
        prob["deep_imaging"] = deep_scores["img"]

    fusion_opts = FitOptions(ridge_penalty=cfg.fusion_ridge)
    if "deep_multimodal" in models:
        fused = fit_fusion(
            {"clin": deep_scores["clin"]["train"], "img": deep_scores["img"]["train"]},
            labels["train"], fusion_opts)
        arts.fusion_multimodal = fused
        raw["deep_multimodal"] = {
            s: predict_fused(fused, {"clin": deep_scores["clin"][s], "img": deep_scores["img"][s]})
            for s in SPLIT_NAMES
        }
        prob["deep_multimodal"] = {s: sigmoid(raw["deep_multimodal"][s]) for s in SPLIT_NAMES}
    if "deep_pesi_fused" in models:
        fused = fit_fusion(
            {"clin": deep_scores["clin"]["train"], "img": deep_scores["img"]["train"],
             "pesi": pesi_scores["train"]},
            labels["train"], fusion_opts)
        arts.fusion_pesi = fused
        raw["deep_pesi_fused"] = {
            s: predict_fused(fused, {"clin": deep_scores["clin"][s],
                                     "img": deep_scores["img"][s],
                                     "pesi": pesi_scores[s]})
            for s in SPLIT_NAMES
        }
        prob["deep_pesi_fused"] = {s: sigmoid(raw["deep_pesi_fused"][s]) for s in SPLIT_NAMES}
    if "rsf_fused" in models:
        ropts = rsf.RsfOptions(n_trees=cfg.rsf.n_trees, mtry=cfg.rsf.mtry,
                               min_leaf_size=cfg.rsf.min_leaf_size,
                               seed=_derived_seed(cfg.seed, _STAGE["rsf_clin"]))
        forest_clin = rsf.fit_forest(clin["train"], labels["train"], ropts)
        ropts_img = dataclasses.replace(ropts, seed=_derived_seed(cfg.seed, _STAGE["rsf_img"]))
        forest_img = rsf.fit_forest(img["train"], labels["train"], ropts_img)
        arts.rsf_clin, arts.rsf_img = forest_clin, forest_img
        rsf_scores = {
            "rsf_clin": {s: rsf.predict_risk(forest_clin, clin[s]) for s in SPLIT_NAMES},
            "rsf_img": {s: rsf.predict_risk(forest_img, img[s]) for s in SPLIT_NAMES},
        }
        fused = fit_fusion(
            {"rsf_clin": rsf_scores["rsf_clin"]["train"], "rsf_img": rsf_scores["rsf_img"]["train"]},
            labels["train"], fusion_opts)
        arts.fusion_rsf = fused
        raw["rsf_fused"] = {
            s: predict_fused(fused, {"rsf_clin": rsf_scores["rsf_clin"][s],
                                     "rsf_img": rsf_scores["rsf_img"][s]})
            for s in SPLIT_NAMES
        }
        prob["rsf_fused"] = {s: sigmoid(raw["rsf_fused"][s]) for s in SPLIT_NAMES}

    # --- evaluation ---------------------------------------------------------
    overall = {s: {} for s in SPLIT_NAMES}
    for si, s in enumerate(SPLIT_NAMES):
        for mi, kind in enumerate(MODEL_KINDS):
            if kind not in models:
                continue
            scores = raw[kind][s]
            ci_seed = _derived_seed(cfg.seed, _STAGE["ci"], si, mi)
            lo, hi = bootstrap_ci(c_index, scores, labels[s], cfg.bootstrap_resamples, ci_seed)
            overall[s][kind] = {
                "c_index": c_index(scores, labels[s]), "ci_low": lo, "ci_high": hi,
            }

    short_term = {s: {} for s in SPLIT_NAMES}
    for si, s in enumerate(SPLIT_NAMES):
        labels30 = truncate_30day(labels[s])
        for mi, kind in enumerate(SHORT_TERM_KINDS):
            if kind not in models:
                continue
            scores = raw[kind][s]
            ci_seed = _derived_seed(cfg.seed, _STAGE["ci_short"], si, mi)
            try:
                value = c_index(scores, labels30)
                lo, hi = bootstrap_ci(c_index, scores, labels30, cfg.bootstrap_resamples, ci_seed)
            except NoComparablePairsError:
                value, lo, hi = None, None, None  # no deaths inside 30 days in this split
            short_term[s][kind] = {"c_index": value, "ci_low": lo, "ci_high": hi}

    nri_pairs = (
        ("plus_clinical", "deep_imaging", "deep_multimodal"),
        ("plus_imaging", "deep_clinical", "deep_multimodal"),
        ("plus_pesi", "deep_multimodal", "deep_pesi_fused"),
    )
    nri_table = {s: {} for s in SPLIT_NAMES}
    for s in SPLIT_NAMES:
        for name, old_kind, new_kind in nri_pairs:
            if old_kind not in prob or new_kind not in prob:
                continue
            result = nri(prob[old_kind][s], prob[new_kind][s], labels[s], cfg.nri_threshold)
            nri_table[s][name] = dataclasses.asdict(result)

    km_section = {}
    strata_by_model = {}
    for kind in MODEL_KINDS:
        if kind not in models:
            continue
        strata = stratify(prob[kind]["test"], ids["test"],
                          cfg.stratification_method, cfg.stratification_threshold)
        strata_by_model[kind] = strata
        by_id = {i: lab for i, lab in zip(ids["test"], labels["test"])}
        high = [by_id[i] for i in strata.high_ids]
        low = [by_id[i] for i in strata.low_ids]
        entry = {"cut_value": strata.cut_value, "method": strata.method,
                 "n_high": len(high), "n_low": len(low)}
        if high and low:
            test = logrank_test(high, low)
            entry["logrank_statistic"] = test.statistic
            entry["logrank_p"] = test.p_value
        else:  # a constant score puts everyone in one stratum
            entry["logrank_statistic"] = None
            entry["logrank_p"] = None
        for name, group in (("high", high), ("low", low)):
            curve = km_curve(group, name) if group else None
            entry[name] = {
                "n": len(group),
                "points": [dataclasses.asdict(p) for p in curve.points] if curve else [],
            }
        km_section[kind] = entry

    comparisons = {}
    for mi, kind in enumerate(MODEL_KINDS):
        if kind == "pesi" or kind not in models:
            continue
        cmp_seed = _derived_seed(cfg.seed, _STAGE["compare"], mi)
        result = compare_to_pesi(raw[kind]["test"], pesi_scores["test"], labels["test"],
                                 cfg.bootstrap_resamples, cmp_seed)
        comparisons[kind] = {
            "statistic": result.test.statistic,
            "p_value": result.test.p_value,
            "method": result.test.method,
            "mean_c_index_diff": result.mean_diff,
            "n_resamples": result.n_resamples,
        }

    rv_section = None
    test_records = [ds.records[i] for i in rows["test"]]
    rv_known = all(r.rv_dysfunction is not None for r in test_records)
    if rv_known and "deep_multimodal" in strata_by_model:
        strata = strata_by_model["deep_multimodal"]
        rv_flags = {r.patient_id: bool(r.rv_dysfunction) for r in test_records}
        death_flags = {r.patient_id: r.label.event for r in test_records}
        factor = rv_factor_analysis(strata, rv_flags, death_flags)
        lin = raw["deep_multimodal"]["test"]
        sig = prob["deep_multimodal"]["test"]
        high = set(strata.high_ids)
        rv_section = {
            **dataclasses.asdict(factor),
            "cut_linear": float(np.median(lin)) if strata.method == "median" else None,
            "cut_sigmoid": strata.cut_value,
            "patients": [
                {
                    "patient_id": r.patient_id,
                    "risk_linear": float(lv),
                    "risk_sigmoid": float(pv),
                    "high_risk": r.patient_id in high,
                    "rv_dysfunction": bool(r.rv_dysfunction),
                    "event": r.label.event,
                }
                for r, lv, pv in zip(test_records, lin, sig)
            ],
        }

    report = StudyReport(
        overall=overall,
        short_term=short_term,
        nri=nri_table,
        km=km_section,
        rv_analysis=rv_section,
        comparisons=comparisons,
    )
    return report, arts
