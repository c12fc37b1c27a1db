import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from survfuse.cox_linear import partial_loglik_eta
from survfuse.dataset import (
    ClinicalVariables,
    Dataset,
    PatientRecord,
    SurvivalLabel,
    impute_missing,
    label_arrays,
)
from survfuse.deep_survival import (
    MlpSurvModel,
    TrainOptions,
    cox_loss,
    feature_importance,
    forward,
    init_mlp,
    linear_scores,
    loss_and_gradients,
    predictive_ability,
    train,
)
from survfuse.errors import (
    ConstantVariableError,
    DimensionMismatchError,
    DivergedLossError,
    InvalidDimensionError,
    MismatchedLengthsError,
    NoEventsError,
)
from survfuse.metrics import sigmoid


def labs(times, events):
    return [SurvivalLabel(event=bool(e), time_days=float(t)) for t, e in zip(times, events)]


def surv_data(rng, n, d, beta):
    X = rng.standard_normal((n, d))
    risk = X @ np.asarray(beta)
    times = rng.exponential(np.exp(-risk))
    events = rng.random(n) < 0.8
    if not events.any():
        events[0] = True
    return X, labs(times, events)


class TestInit:
    def test_layer_dims_and_shapes(self):
        m = init_mlp(5, (8, 4), seed=0)
        assert m.layer_dims == (5, 8, 4, 1)
        assert [w.shape for w in m.weights] == [(5, 8), (8, 4), (4, 1)]
        assert [b.shape for b in m.biases] == [(8,), (4,), (1,)]

    def test_fan_in_bounds_and_zero_biases(self):
        m = init_mlp(16, (9,), seed=3)
        assert np.abs(m.weights[0]).max() <= 1.0 / 4.0
        assert np.abs(m.weights[1]).max() <= 1.0 / 3.0
        for b in m.biases:
            assert_array_equal(b, np.zeros_like(b))

    def test_deterministic_by_seed(self):
        a = init_mlp(4, (6,), seed=11)
        b = init_mlp(4, (6,), seed=11)
        c = init_mlp(4, (6,), seed=12)
        for wa, wb in zip(a.weights, b.weights):
            assert_array_equal(wa, wb)
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_invalid_dimensions(self):
        with pytest.raises(InvalidDimensionError):
            init_mlp(0, (4,), seed=0)
        with pytest.raises(InvalidDimensionError):
            init_mlp(3, (4, 0), seed=0)

    def test_modality_tag(self):
        assert init_mlp(2, (), seed=0, modality_tag="img").modality_tag == "img"
        with pytest.raises(ValueError):
            init_mlp(2, (), seed=0, modality_tag="audio")


class TestForward:
    def test_scores_in_unit_interval(self):
        m = init_mlp(3, (5,), seed=1)
        X = np.random.default_rng(0).standard_normal((20, 3))
        s = forward(m, X)
        assert s.shape == (20,)
        assert np.all((s > 0) & (s < 1))

    def test_matches_hand_relu_arithmetic(self):
        # 2 -> 2 -> 1 net evaluated longhand for one row
        m = MlpSurvModel(
            layer_dims=(2, 2, 1),
            weights=[np.array([[1.0, -1.0], [0.5, 2.0]]), np.array([[2.0], [-1.0]])],
            biases=[np.array([0.1, -0.2]), np.array([0.3])],
            seed=0,
        )
        x = np.array([[1.0, 2.0]])
        h1 = max(1.0 * 1.0 + 2.0 * 0.5 + 0.1, 0.0)          # 2.1
        h2 = max(1.0 * -1.0 + 2.0 * 2.0 - 0.2, 0.0)         # 2.8
        z = h1 * 2.0 + h2 * -1.0 + 0.3                      # 1.7
        assert_allclose(linear_scores(m, x), [z], rtol=1e-15)
        assert_allclose(forward(m, x), [sigmoid(z)], rtol=1e-15)

    def test_relu_clamps_negative_preactivations(self):
        m = MlpSurvModel(
            layer_dims=(1, 1, 1),
            weights=[np.array([[-5.0]]), np.array([[3.0]])],
            biases=[np.array([0.0]), np.array([0.25])],
            seed=0,
        )
        # hidden preactivation is -5, clamped to 0, so the output is the bias
        assert_allclose(linear_scores(m, np.array([[1.0]])), [0.25])

    def test_dimension_mismatch(self):
        m = init_mlp(3, (4,), seed=0)
        with pytest.raises(DimensionMismatchError):
            forward(m, np.zeros((5, 2)))
        with pytest.raises(DimensionMismatchError):
            forward(m, np.zeros(3))


class TestCoxLoss:
    def test_equals_per_event_negative_loglik(self):
        rng = np.random.default_rng(21)
        X, labels = surv_data(rng, 25, 2, (1.0, -0.5))
        scores = sigmoid(X[:, 0])
        times, events = label_arrays(labels)
        ll, _ = partial_loglik_eta(scores, times, events, "efron")
        want = -ll / events.sum()
        assert_allclose(cox_loss(scores, labels), want, rtol=1e-14)

    def test_no_events(self):
        with pytest.raises(NoEventsError):
            cox_loss([0.5, 0.5], labs([1, 2], [0, 0]))

    def test_length_mismatch(self):
        with pytest.raises(MismatchedLengthsError):
            cox_loss([0.5], labs([1, 2], [1, 1]))


class TestGradients:
    def numeric_grads(self, model, X, labels, wd):
        h = 1e-4
        wgs, bgs = [], []
        for k in range(len(model.weights)):
            g = np.zeros_like(model.weights[k])
            for idx in np.ndindex(*model.weights[k].shape):
                orig = model.weights[k][idx]
                model.weights[k][idx] = orig + h
                up = loss_and_gradients(model, X, labels, wd)[0]
                model.weights[k][idx] = orig - h
                dn = loss_and_gradients(model, X, labels, wd)[0]
                model.weights[k][idx] = orig
                g[idx] = (up - dn) / (2 * h)
            wgs.append(g)
            g = np.zeros_like(model.biases[k])
            for idx in np.ndindex(*model.biases[k].shape):
                orig = model.biases[k][idx]
                model.biases[k][idx] = orig + h
                up = loss_and_gradients(model, X, labels, wd)[0]
                model.biases[k][idx] = orig - h
                dn = loss_and_gradients(model, X, labels, wd)[0]
                model.biases[k][idx] = orig
                g[idx] = (up - dn) / (2 * h)
            bgs.append(g)
        return wgs, bgs

    @pytest.mark.parametrize("wd", [0.0, 0.01])
    def test_backprop_matches_central_differences(self, wd):
        rng = np.random.default_rng(33)
        X, labels = surv_data(rng, 12, 4, (1.0, -0.5, 0.0, 0.3))
        model = init_mlp(4, (3,), seed=5)
        # move off the zero-bias init so ReLU boundaries are not at kinks
        for k in range(len(model.biases)):
            model.biases[k] = model.biases[k] + 0.1 * rng.standard_normal(model.biases[k].shape)
        _, wg, bg = loss_and_gradients(model, X, labels, wd)
        nwg, nbg = self.numeric_grads(model, X, labels, wd)
        for a, n in zip(wg, nwg):
            assert_allclose(a, n, rtol=1e-5, atol=1e-8)
        for a, n in zip(bg, nbg):
            assert_allclose(a, n, rtol=1e-5, atol=1e-8)

    def test_weight_decay_moves_weight_grads_only(self):
        rng = np.random.default_rng(34)
        X, labels = surv_data(rng, 15, 3, (1.0, 0.0, -1.0))
        model = init_mlp(3, (4,), seed=6)
        _, wg0, bg0 = loss_and_gradients(model, X, labels, 0.0)
        _, wg1, bg1 = loss_and_gradients(model, X, labels, 0.5)
        for a, b, W in zip(wg0, wg1, model.weights):
            assert_allclose(b - a, 0.5 * W, rtol=1e-10, atol=1e-12)
        for a, b in zip(bg0, bg1):
            assert_array_equal(a, b)

    def test_loss_includes_penalty_term(self):
        rng = np.random.default_rng(35)
        X, labels = surv_data(rng, 10, 2, (1.0, 1.0))
        model = init_mlp(2, (3,), seed=7)
        base = loss_and_gradients(model, X, labels, 0.0)[0]
        with_wd = loss_and_gradients(model, X, labels, 0.2)[0]
        penalty = 0.5 * 0.2 * sum(float((W ** 2).sum()) for W in model.weights)
        assert_allclose(with_wd, base + penalty, rtol=1e-12)


class TestTrain:
    def test_zero_learning_rate_constant_history(self):
        rng = np.random.default_rng(41)
        X, labels = surv_data(rng, 30, 3, (1.0, -0.5, 0.2))
        Xv, lv = surv_data(rng, 15, 3, (1.0, -0.5, 0.2))
        model = init_mlp(3, (4,), seed=8)
        opts = TrainOptions(learning_rate=0.0, epochs=40, patience=10, weight_decay=0.0)
        trained, history = train(model, X, labels, val=(Xv, lv), options=opts)
        # no update ever improves, so early stopping fires after patience
        assert len(history) == 11
        assert all(h == history[0] for h in history)
        for w0, w1 in zip(model.weights, trained.weights):
            assert_array_equal(w0, w1)

    def test_loss_decreases_on_signal(self):
        rng = np.random.default_rng(42)
        X, labels = surv_data(rng, 80, 3, (1.5, -1.0, 0.0))
        model = init_mlp(3, (6,), seed=9)
        opts = TrainOptions(learning_rate=0.05, epochs=150, weight_decay=0.0)
        _, history = train(model, X, labels, options=opts)
        assert len(history) == 150
        assert history[-1] < history[0] - 0.01

    def test_input_model_never_mutated(self):
        rng = np.random.default_rng(43)
        X, labels = surv_data(rng, 40, 2, (1.0, -1.0))
        model = init_mlp(2, (4,), seed=10)
        before = [w.copy() for w in model.weights]
        train(model, X, labels, options=TrainOptions(learning_rate=0.1, epochs=30))
        for w0, w1 in zip(before, model.weights):
            assert_array_equal(w0, w1)

    def test_best_validation_weights_returned(self):
        rng = np.random.default_rng(44)
        X, labels = surv_data(rng, 60, 3, (1.0, -0.5, 0.0))
        Xv, lv = surv_data(rng, 30, 3, (1.0, -0.5, 0.0))
        opts = TrainOptions(learning_rate=0.2, epochs=120, patience=120, weight_decay=0.0)
        model = init_mlp(3, (8,), seed=11)
        with_val, _ = train(model, X, labels, val=(Xv, lv), options=opts)
        final, _ = train(model, X, labels, options=opts)
        loss_snapshot = cox_loss(forward(with_val, Xv), lv)
        loss_final = cox_loss(forward(final, Xv), lv)
        assert loss_snapshot <= loss_final + 1e-12

    def test_early_stopping_shortens_history(self):
        rng = np.random.default_rng(45)
        X, labels = surv_data(rng, 50, 2, (0.0, 0.0))
        Xv, lv = surv_data(rng, 25, 2, (0.0, 0.0))
        opts = TrainOptions(learning_rate=0.0, epochs=500, patience=5)
        _, history = train(init_mlp(2, (3,), seed=12), X, labels, val=(Xv, lv), options=opts)
        assert len(history) == 6

    def test_diverged_loss_raises(self):
        # the sigmoid bounds the data term, so divergence has to come from
        # the penalty: a huge rate makes each decay step multiply the
        # weights, and their squared norm overflows within a few epochs
        rng = np.random.default_rng(46)
        X, labels = surv_data(rng, 40, 2, (2.0, -2.0))
        opts = TrainOptions(learning_rate=1e12, epochs=50, weight_decay=1.0)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DivergedLossError):
                train(init_mlp(2, (4,), seed=13), X, labels, options=opts)


class TestFeatureImportance:
    def test_shape_is_input_dim(self):
        m = init_mlp(7, (3,), seed=0)
        imp = feature_importance(m)
        assert imp.shape == (7,)
        assert np.all(imp >= 0)

    def test_is_row_norm_of_first_layer(self):
        m = init_mlp(4, (5,), seed=2)
        want = np.sqrt((m.weights[0] ** 2).sum(axis=1))
        assert_allclose(feature_importance(m), want, rtol=1e-15)

    def test_informative_feature_outranks_noise(self):
        rng = np.random.default_rng(47)
        X, labels = surv_data(rng, 150, 4, (2.0, 0.0, 0.0, 0.0))
        opts = TrainOptions(learning_rate=0.1, epochs=200, weight_decay=1e-3)
        trained, _ = train(init_mlp(4, (6,), seed=14), X, labels, options=opts)
        imp = feature_importance(trained)
        assert imp[0] > max(imp[1:])


def _complete_clinical(**over):
    base = dict(
        age_years=70.0, male=True, cancer=False, heart_failure=False,
        chronic_lung_disease=False, hr_ge_110=False, sbp_lt_100=False,
        rr_ge_30=False, temp_lt_36c=False, altered_mental_status=False,
        o2_sat_lt_90=False,
    )
    base.update(over)
    return ClinicalVariables(**base)


def _tiny_dataset(rows):
    records = tuple(
        PatientRecord(
            patient_id=f"P{i}",
            clinical=_complete_clinical(**over),
            label=SurvivalLabel(event=bool(ev), time_days=float(t)),
        )
        for i, (over, t, ev) in enumerate(rows)
    )
    ds = Dataset(records=records)
    return impute_missing(ds, [r.patient_id for r in records])


class TestPredictiveAbility:
    def test_discriminative_variable_scores_high(self):
        # cancer patients all die first: the cancer column separates perfectly
        rows = [
            (dict(cancer=True, age_years=60.0), 1, 1),
            (dict(cancer=True, age_years=70.0), 2, 1),
            (dict(cancer=False, age_years=65.0), 10, 1),
            (dict(cancer=False, age_years=75.0), 11, 1),
            (dict(cancer=False, age_years=80.0), 12, 0),
        ]
        ds = _tiny_dataset(rows)
        # columns: age 0, male 1, cancer 2. Ten comparable pairs; the four
        # within-group ties earn half credit each: (3.5 + 3 + 1 + 0.5)/10
        assert predictive_ability(ds, 2) == 0.8

    def test_sign_flip_invariance(self):
        # protective direction scores the same as harmful direction
        harmful = [
            (dict(heart_failure=True, age_years=60.0), 1, 1),
            (dict(heart_failure=True, age_years=62.0), 2, 1),
            (dict(heart_failure=False, age_years=64.0), 9, 1),
            (dict(heart_failure=False, age_years=66.0), 10, 1),
        ]
        protective = [(dict(heart_failure=not o["heart_failure"],
                            age_years=o["age_years"]), t, e) for o, t, e in harmful]
        col = 3  # heart_failure column
        assert predictive_ability(_tiny_dataset(harmful), col) == \
            predictive_ability(_tiny_dataset(protective), col)

    def test_constant_variable(self):
        rows = [(dict(age_years=60.0 + i), i + 1, 1) for i in range(4)]
        ds = _tiny_dataset(rows)
        with pytest.raises(ConstantVariableError):
            predictive_ability(ds, 2)  # cancer is False everywhere

    def test_out_of_range_index(self):
        ds = _tiny_dataset([(dict(age_years=60.0 + i), i + 1, 1) for i in range(3)])
        with pytest.raises(DimensionMismatchError):
            predictive_ability(ds, 11)
