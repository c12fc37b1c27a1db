import numpy as np
import pytest

from survfuse.analysis import (
    MODEL_KINDS,
    SHORT_TERM_KINDS,
    DeepHyper,
    RsfHyper,
    RiskStrata,
    StudyConfig,
    compare_to_pesi,
    format_pct,
    run_study,
    run_study_full,
    rv_factor_analysis,
    stratify,
)
from survfuse.dataset import SurvivalLabel, attach_imaging, ingest_clinical
from survfuse.errors import (
    EmptyInputError,
    MismatchedLengthsError,
    MissingModalityError,
    TooFewResamplesError,
)
from survfuse.synthetic import CohortPlan, write_study_csvs


def labs(times, events):
    return [SurvivalLabel(event=bool(e), time_days=float(t)) for t, e in zip(times, events)]


class TestFormatPct:
    def test_one_decimal(self):
        assert format_pct(100.0 * 11.0 / 16.0) == "68.8"
        assert format_pct(100.0 * 11.0 / 13.0) == "84.6"
        assert format_pct(50.0) == "50.0"
        assert format_pct(100.0) == "100.0"


class TestStratify:
    def test_median_cut(self):
        strata = stratify([0.1, 0.2, 0.8, 0.9], ["a", "b", "c", "d"])
        assert strata.cut_value == 0.5
        assert strata.high_ids == ("c", "d")
        assert strata.low_ids == ("a", "b")
        assert strata.method == "median"

    def test_tie_at_cut_goes_high(self):
        strata = stratify([1.0, 2.0, 2.0, 3.0], ["a", "b", "c", "d"])
        assert strata.cut_value == 2.0
        assert strata.high_ids == ("b", "c", "d")

    def test_all_equal_scores_all_high(self):
        strata = stratify([0.4, 0.4, 0.4], ["a", "b", "c"])
        assert strata.high_ids == ("a", "b", "c")
        assert strata.low_ids == ()

    def test_fixed_threshold(self):
        strata = stratify([0.1, 0.6, 0.9], ["a", "b", "c"], method="fixed", threshold=0.6)
        assert strata.cut_value == 0.6
        assert strata.high_ids == ("b", "c")

    def test_fixed_needs_threshold(self):
        with pytest.raises(ValueError, match="threshold"):
            stratify([0.1], ["a"], method="fixed")

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="method"):
            stratify([0.1], ["a"], method="quartile")

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            stratify([], [])

    def test_length_mismatch(self):
        with pytest.raises(MismatchedLengthsError):
            stratify([0.1, 0.2], ["a"])


class TestRvFactorAnalysis:
    def build(self, n_high, n_low, rv_high, rv_low, dead_high, dead_low):
        high = [f"h{i}" for i in range(n_high)]
        low = [f"l{i}" for i in range(n_low)]
        strata = RiskStrata(tuple(high), tuple(low), 0.5, "median")
        rv = {i: k < rv_high for k, i in enumerate(high)}
        rv.update({i: k < rv_low for k, i in enumerate(low)})
        dead = {i: k < dead_high for k, i in enumerate(high)}
        dead.update({i: k < dead_low for k, i in enumerate(low)})
        return strata, rv, dead

    def test_counts_and_percentages(self):
        # 11 of 16 RV patients stratified high, 11 of 13 deaths captured
        strata, rv, dead = self.build(20, 20, rv_high=11, rv_low=5,
                                      dead_high=11, dead_low=2)
        report = rv_factor_analysis(strata, rv, dead)
        assert (report.n_rv, report.rv_high_count) == (16, 11)
        assert (report.n_deaths, report.deaths_high_count) == (13, 11)
        assert format_pct(report.rv_high_pct) == "68.8"
        assert format_pct(report.death_capture_pct) == "84.6"

    def test_no_rv_patients_gives_none(self):
        strata, rv, dead = self.build(5, 5, 0, 0, 2, 1)
        report = rv_factor_analysis(strata, rv, dead)
        assert report.n_rv == 0
        assert report.rv_high_pct is None
        assert report.death_capture_pct is not None

    def test_no_deaths_gives_none(self):
        strata, rv, dead = self.build(5, 5, 3, 1, 0, 0)
        report = rv_factor_analysis(strata, rv, dead)
        assert report.n_deaths == 0
        assert report.death_capture_pct is None

    def test_missing_flags(self):
        strata, rv, dead = self.build(3, 3, 1, 1, 1, 1)
        del rv["h0"]
        with pytest.raises(MismatchedLengthsError, match="h0"):
            rv_factor_analysis(strata, rv, dead)


class TestCompareToPesi:
    def cohort(self, rng, n=150):
        risk = rng.standard_normal(n)
        times = rng.exponential(np.exp(-risk))
        events = rng.random(n) < 0.9
        labels = labs(times, events)
        good = risk + 0.3 * rng.standard_normal(n)
        weak = risk + 2.5 * rng.standard_normal(n)
        return good, weak, labels

    def test_identical_scores_report_no_difference(self):
        rng = np.random.default_rng(120)
        good, _, labels = self.cohort(rng)
        result = compare_to_pesi(good, good, labels, n_resamples=100, seed=1)
        assert result.test.p_value == 1.0
        assert "degenerate" in result.test.method
        assert result.mean_diff == 0.0
        assert result.n_resamples == 100

    def test_stronger_model_wins(self):
        rng = np.random.default_rng(121)
        good, weak, labels = self.cohort(rng)
        result = compare_to_pesi(good, weak, labels, n_resamples=200, seed=2)
        assert result.mean_diff > 0.05
        assert result.test.p_value < 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(122)
        good, weak, labels = self.cohort(rng, n=60)
        a = compare_to_pesi(good, weak, labels, n_resamples=100, seed=5)
        b = compare_to_pesi(good, weak, labels, n_resamples=100, seed=5)
        assert a == b
        c = compare_to_pesi(good, weak, labels, n_resamples=100, seed=6)
        assert a.mean_diff != c.mean_diff

    def test_too_few_resamples(self):
        rng = np.random.default_rng(123)
        good, weak, labels = self.cohort(rng, n=30)
        with pytest.raises(TooFewResamplesError):
            compare_to_pesi(good, weak, labels, n_resamples=99)

    def test_length_mismatch(self):
        with pytest.raises(MismatchedLengthsError):
            compare_to_pesi([0.1], [0.2, 0.3], labs([1, 2], [1, 1]))


class TestStudyConfig:
    def test_unknown_model(self):
        with pytest.raises(ValueError, match="unknown model"):
            StudyConfig(models=("pesi", "gradient_boost"))

    def test_defaults(self):
        cfg = StudyConfig()
        assert cfg.models == MODEL_KINDS
        assert cfg.deep_imaging.hidden_dims == (64,)


SMALL_HYPERS = dict(
    bootstrap_resamples=100,
    deep_clinical=DeepHyper(hidden_dims=(4,), epochs=30, learning_rate=0.05),
    deep_imaging=DeepHyper(hidden_dims=(4,), epochs=30, learning_rate=0.05),
    rsf=RsfHyper(n_trees=10, min_leaf_size=10),
)


@pytest.fixture(scope="module")
def study_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("study")
    clin, feat = root / "clinical.csv", root / "features.csv"
    write_study_csvs(
        CohortPlan(n=120, seed=17, img_dim=8, baseline_rate=0.02, missing_rate=0.05),
        clin, feat,
    )
    return attach_imaging(ingest_clinical(clin), feat)


@pytest.fixture(scope="module")
def full_study(study_dataset):
    cfg = StudyConfig(seed=3, **SMALL_HYPERS)
    return run_study_full(study_dataset, cfg), cfg


class TestRunStudy:
    def test_overall_table_structure(self, full_study):
        (report, _), _ = full_study
        assert set(report.overall.keys()) == {"train", "val", "test"}
        for split in report.overall.values():
            assert set(split.keys()) == set(MODEL_KINDS)
            for cell in split.values():
                assert cell["ci_low"] <= cell["c_index"] <= cell["ci_high"]
                assert 0.0 <= cell["ci_low"] and cell["ci_high"] <= 1.0

    def test_short_term_drops_forest(self, full_study):
        (report, _), _ = full_study
        for split in report.short_term.values():
            assert set(split.keys()) == set(SHORT_TERM_KINDS)
            assert "rsf_fused" not in split
            for cell in split.values():
                if cell["c_index"] is not None:
                    assert cell["ci_low"] <= cell["c_index"] <= cell["ci_high"]

    def test_nri_pairs(self, full_study):
        (report, _), _ = full_study
        for split in report.nri.values():
            assert set(split.keys()) == {"plus_clinical", "plus_imaging", "plus_pesi"}
            for cell in split.values():
                assert cell["n_events"] + cell["n_nonevents"] > 0
                assert -2.0 <= cell["nri"] <= 2.0

    def test_km_section(self, full_study):
        (report, _), _ = full_study
        assert set(report.km.keys()) == set(MODEL_KINDS)
        for entry in report.km.values():
            assert entry["n_high"] + entry["n_low"] == 24  # test split of 120
            for side in ("high", "low"):
                for point in entry[side]["points"]:
                    assert 0.0 <= point["survival"] <= 1.0

    def test_comparisons_cover_non_index_models(self, full_study):
        (report, _), _ = full_study
        assert set(report.comparisons.keys()) == set(MODEL_KINDS) - {"pesi"}
        for cell in report.comparisons.values():
            assert 0.0 <= cell["p_value"] <= 1.0
            assert cell["n_resamples"] == 100

    def test_rv_analysis_present_and_aligned(self, full_study):
        (report, _), _ = full_study
        rv = report.rv_analysis
        assert rv is not None
        assert len(rv["patients"]) == 24
        assert rv["cut_sigmoid"] == report.km["deep_multimodal"]["cut_value"]
        high_count = sum(1 for p in rv["patients"] if p["high_risk"])
        assert high_count == report.km["deep_multimodal"]["n_high"]
        for p in rv["patients"]:
            assert set(p.keys()) == {"patient_id", "risk_linear", "risk_sigmoid",
                                     "high_risk", "rv_dysfunction", "event"}

    def test_artifacts_expose_fitted_models(self, full_study):
        (_, arts), _ = full_study
        assert arts.deep_clinical is not None
        assert arts.deep_imaging is not None
        assert arts.rsf_clin is not None and arts.rsf_img is not None
        assert arts.fusion_multimodal is not None
        assert arts.fusion_pesi is not None
        assert arts.fusion_rsf is not None
        assert arts.fusion_pesi.sources == ("clin", "img", "pesi")

    def test_deterministic_repeat(self, study_dataset, full_study):
        (report, _), cfg = full_study
        again = run_study(study_dataset, cfg)
        assert again.overall == report.overall
        assert again.comparisons == report.comparisons
        assert again.nri == report.nri

    def test_clinical_only_subset_runs_without_imaging(self, tmp_path):
        clin = tmp_path / "clinical.csv"
        feat = tmp_path / "features.csv"
        write_study_csvs(CohortPlan(n=100, seed=23, baseline_rate=0.02), clin, feat)
        ds = ingest_clinical(clin)  # imaging never attached
        cfg = StudyConfig(seed=1, models=("pesi", "deep_clinical"), **SMALL_HYPERS)
        report = run_study(ds, cfg)
        assert set(report.overall["test"].keys()) == {"pesi", "deep_clinical"}
        assert set(report.comparisons.keys()) == {"deep_clinical"}
        assert report.nri == {"train": {}, "val": {}, "test": {}}
        assert report.rv_analysis is None  # needs the multimodal model

    def test_imaging_model_without_features_fails(self, tmp_path):
        clin = tmp_path / "clinical.csv"
        feat = tmp_path / "features.csv"
        write_study_csvs(CohortPlan(n=100, seed=29), clin, feat)
        ds = ingest_clinical(clin)
        cfg = StudyConfig(seed=1, models=("deep_imaging",), **SMALL_HYPERS)
        with pytest.raises(MissingModalityError, match="imaging"):
            run_study(ds, cfg)

    def test_fixed_stratification_flows_through(self, study_dataset):
        cfg = StudyConfig(seed=3, models=("pesi",), stratification_method="fixed",
                          stratification_threshold=0.5, **SMALL_HYPERS)
        report = run_study(study_dataset, cfg)
        assert report.km["pesi"]["method"] == "fixed"
        assert report.km["pesi"]["cut_value"] == 0.5
