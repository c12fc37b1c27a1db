import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from survfuse.cox_linear import FitOptions, predict_linear
from survfuse.dataset import SurvivalLabel
from survfuse.errors import (
    ExtraModalityError,
    MismatchedLengthsError,
    MissingModalityError,
)
from survfuse.fusion import (
    CANONICAL_ORDER,
    FusionModel,
    fit_fusion,
    predict_fused,
)
from survfuse.metrics import c_index


def labs(times, events):
    return [SurvivalLabel(event=bool(e), time_days=float(t)) for t, e in zip(times, events)]


def two_source_cohort(rng, n=150):
    a = rng.standard_normal(n)
    b = rng.standard_normal(n)
    risk = a + 0.7 * b
    times = rng.exponential(np.exp(-risk))
    events = rng.random(n) < 0.85
    if not events.any():
        events[0] = True
    return a, b, labs(times, events)


class TestFitFusion:
    def test_sources_claim_canonical_order(self):
        rng = np.random.default_rng(80)
        a, b, labels = two_source_cohort(rng)
        model = fit_fusion({"img": b, "clin": a}, labels)
        assert model.sources == ("clin", "img")

    def test_insertion_order_is_irrelevant(self):
        rng = np.random.default_rng(81)
        a, b, labels = two_source_cohort(rng)
        m1 = fit_fusion({"clin": a, "img": b}, labels)
        m2 = fit_fusion({"img": b, "clin": a}, labels)
        assert_array_equal(m1.cox.beta, m2.cox.beta)
        assert_array_equal(m1.means, m2.means)
        q = {"clin": 0.3, "img": -0.2}
        assert predict_fused(m1, q) == predict_fused(m2, q)

    def test_unknown_tag(self):
        rng = np.random.default_rng(82)
        a, _, labels = two_source_cohort(rng)
        with pytest.raises(ValueError, match="unknown modality"):
            fit_fusion({"audio": a}, labels)

    def test_modality_count_bounds(self):
        rng = np.random.default_rng(83)
        a, b, labels = two_source_cohort(rng)
        with pytest.raises(ValueError, match="1-3"):
            fit_fusion({}, labels)
        four = dict(zip(CANONICAL_ORDER[:4], [a, b, a, b]))
        with pytest.raises(ValueError, match="1-3"):
            fit_fusion(four, labels)

    def test_length_mismatch(self):
        rng = np.random.default_rng(84)
        a, b, labels = two_source_cohort(rng)
        with pytest.raises(MismatchedLengthsError, match="img"):
            fit_fusion({"clin": a, "img": b[:-3]}, labels)

    def test_constant_modality_degrades_gracefully(self):
        rng = np.random.default_rng(85)
        a, _, labels = two_source_cohort(rng)
        model = fit_fusion({"clin": a, "pesi": np.full(len(labels), 42.0)}, labels)
        assert model.stds[model.sources.index("pesi")] == 1.0
        k = model.sources.index("pesi")
        assert abs(model.cox.beta[k]) < 1e-6
        # and the informative column still carries the signal
        assert model.cox.beta[model.sources.index("clin")] > 0.1

    def test_deterministic(self):
        rng = np.random.default_rng(86)
        a, b, labels = two_source_cohort(rng)
        m1 = fit_fusion({"clin": a, "img": b}, labels)
        m2 = fit_fusion({"clin": a.copy(), "img": b.copy()}, labels)
        assert_array_equal(m1.cox.beta, m2.cox.beta)


class TestPredictFused:
    def test_scalar_and_vector_agree(self):
        rng = np.random.default_rng(87)
        a, b, labels = two_source_cohort(rng)
        model = fit_fusion({"clin": a, "img": b}, labels)
        out = predict_fused(model, {"clin": a[:5], "img": b[:5]})
        assert out.shape == (5,)
        for k in range(5):
            single = predict_fused(model, {"clin": float(a[k]), "img": float(b[k])})
            assert isinstance(single, float)
            # batch and single-row matmul may round differently in the last ulp
            assert_allclose(single, out[k], rtol=1e-14)

    def test_equals_cox_on_standardized_columns(self):
        rng = np.random.default_rng(88)
        a, b, labels = two_source_cohort(rng)
        model = fit_fusion({"clin": a, "img": b}, labels)
        z = np.column_stack([a, b])
        z = (z - model.means) / model.stds
        assert_allclose(predict_fused(model, {"clin": a, "img": b}),
                        predict_linear(model.cox, z), rtol=1e-12)

    def test_missing_modality(self):
        rng = np.random.default_rng(89)
        a, b, labels = two_source_cohort(rng)
        model = fit_fusion({"clin": a, "img": b}, labels)
        with pytest.raises(MissingModalityError, match="img"):
            predict_fused(model, {"clin": 0.1})

    def test_extra_modality(self):
        rng = np.random.default_rng(90)
        a, b, labels = two_source_cohort(rng)
        model = fit_fusion({"clin": a}, labels)
        with pytest.raises(ExtraModalityError, match="img"):
            predict_fused(model, {"clin": 0.1, "img": 0.2})

    def test_vector_length_mismatch(self):
        rng = np.random.default_rng(91)
        a, b, labels = two_source_cohort(rng)
        model = fit_fusion({"clin": a, "img": b}, labels)
        with pytest.raises(MismatchedLengthsError):
            predict_fused(model, {"clin": a[:4], "img": b[:5]})

    def test_monotone_in_positive_coefficient_source(self):
        rng = np.random.default_rng(92)
        a, b, labels = two_source_cohort(rng)
        model = fit_fusion({"clin": a, "img": b}, labels)
        assert model.cox.beta[0] > 0
        lo = predict_fused(model, {"clin": -1.0, "img": 0.0})
        hi = predict_fused(model, {"clin": 1.0, "img": 0.0})
        assert hi > lo


class TestFusionImproves:
    def test_combining_complementary_scores_beats_either(self):
        # two noisy views of disjoint risk components: the fused predictor
        # should rank held-out subjects better than either view alone
        rng = np.random.default_rng(93)
        n = 600
        z1 = rng.standard_normal(n)
        z2 = rng.standard_normal(n)
        risk = z1 + z2
        times = rng.exponential(np.exp(-risk))
        events = rng.random(n) < 0.9
        labels = labs(times, events)
        view_a = z1 + 0.4 * rng.standard_normal(n)
        view_b = z2 + 0.4 * rng.standard_normal(n)
        fit, hold = slice(0, 400), slice(400, None)
        model = fit_fusion({"clin": view_a[fit], "img": view_b[fit]}, labels[:400])
        fused = predict_fused(model, {"clin": view_a[hold], "img": view_b[hold]})
        c_fused = c_index(fused, labels[400:])
        c_a = c_index(view_a[hold], labels[400:])
        c_b = c_index(view_b[hold], labels[400:])
        assert c_fused > max(c_a, c_b) + 0.02
