"""Feed-forward survival networks trained on the Cox partial likelihood.

The architecture is deliberately small: ReLU hidden layers, one linear
output neuron, and a sigmoid squashing the risk score into (0, 1). The
training loss is the negative partial log-likelihood of the sigmoid scores
(treated as log-hazard ratios) divided by the number of events; gradients
are computed analytically by backpropagation, full batch, plain gradient
descent with weight decay on the weight matrices.

Score scale note: the sigmoid is a strictly increasing map, so ranking
metrics (c-index) are identical whether computed on the squashed score or
the pre-sigmoid logit.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .cox_linear import partial_loglik_eta
from .dataset import Dataset, SurvivalLabel, clinical_matrix, label_arrays
from .errors import (
    ConstantVariableError,
    DimensionMismatchError,
    DivergedLossError,
    InvalidDimensionError,
    MismatchedLengthsError,
    NoEventsError,
    NonFiniteInputError,
)
from .metrics import c_index, sigmoid


@dataclass
class MlpSurvModel:
    """Weights/biases per layer; treat instances as immutable after creation."""

    layer_dims: tuple[int, ...]          # input, hidden..., 1
    weights: list[np.ndarray]            # weights[k]: (layer_dims[k], layer_dims[k+1])
    biases: list[np.ndarray]
    seed: int
    modality_tag: str = "clin"


@dataclass(frozen=True)
class TrainOptions:
    learning_rate: float = 1e-3
    epochs: int = 500
    weight_decay: float = 1e-4
    patience: int = 50
    tie_method: str = "efron"


def init_mlp(input_dim: int, hidden_dims: tuple[int, ...], seed: int,
             modality_tag: str = "clin") -> MlpSurvModel:
    """Deterministic fan-in-scaled uniform init: W ~ U(+-1/sqrt(fan_in)), b = 0."""
    if input_dim < 1:
        raise InvalidDimensionError(f"input_dim must be >= 1, got {input_dim}")
    if any(h < 1 for h in hidden_dims):
        raise InvalidDimensionError(f"hidden dims must all be >= 1, got {hidden_dims}")
    if modality_tag not in ("clin", "img"):
        raise ValueError(f"modality_tag must be 'clin' or 'img', got {modality_tag!r}")
    dims = (input_dim, *hidden_dims, 1)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpSurvModel(layer_dims=dims, weights=weights, biases=biases,
                        seed=seed, modality_tag=modality_tag)


def _forward_pass(model: MlpSurvModel, X: np.ndarray):
    """Returns (hidden activations per layer incl. input, preactivations, logits)."""
    hs = [X]
    pre = []
    h = X
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        a = h @ W + b
        pre.append(a)
        h = np.maximum(a, 0.0)
        hs.append(h)
    z = (h @ model.weights[-1] + model.biases[-1]).ravel()
    return hs, pre, z


def _check_input(model: MlpSurvModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.layer_dims[0]:
        raise DimensionMismatchError(
            f"model expects {model.layer_dims[0]} inputs, X has shape {X.shape}"
        )
    return X


def linear_scores(model: MlpSurvModel, X: np.ndarray) -> np.ndarray:
    """Pre-sigmoid output logits."""
    return _forward_pass(model, _check_input(model, X))[2]


def forward(model: MlpSurvModel, X: np.ndarray) -> np.ndarray:
    """Risk scores in (0, 1), one per row of X."""
    return sigmoid(linear_scores(model, X))


def cox_loss(scores, labels: list[SurvivalLabel], tie_method: str = "efron") -> float:
    """Negative partial log-likelihood of the scores, per event."""
    return _cox_loss_grad(scores, labels, tie_method)[0]


def _cox_loss_grad(scores, labels, tie_method="efron"):
    s = np.asarray(scores, dtype=float)
    if s.size != len(labels):
        raise MismatchedLengthsError(f"{s.size} scores for {len(labels)} labels")
    times, events = label_arrays(labels)
    n_events = int(events.sum())
    if n_events == 0:
        raise NoEventsError("cox loss needs at least one event")
    ll, grad_eta = partial_loglik_eta(s, times, events, tie_method)
    return -ll / n_events, -grad_eta / n_events


def loss_and_gradients(model: MlpSurvModel, X: np.ndarray, labels: list[SurvivalLabel],
                       weight_decay: float = 0.0, tie_method: str = "efron"):
    """Training objective and analytic gradients for every parameter.

    The objective is the per-event negative partial log-likelihood of the
    sigmoid scores plus an L2 penalty on the weight matrices (biases are not
    penalized). Returns ``(loss, weight_grads, bias_grads)``.
    """
    X = _check_input(model, X)
    hs, pre, z = _forward_pass(model, X)
    s = sigmoid(z)
    loss, dloss_ds = _cox_loss_grad(s, labels, tie_method)
    if weight_decay > 0:
        loss += 0.5 * weight_decay * sum(float((W ** 2).sum()) for W in model.weights)

    dz = dloss_ds * s * (1.0 - s)
    weight_grads = [None] * len(model.weights)
    bias_grads = [None] * len(model.biases)

    delta = dz[:, None]
    weight_grads[-1] = hs[-1].T @ delta
    bias_grads[-1] = delta.sum(axis=0)
    dh = delta @ model.weights[-1].T
    for k in range(len(model.weights) - 2, -1, -1):
        da = dh * (pre[k] > 0.0)
        weight_grads[k] = hs[k].T @ da
        bias_grads[k] = da.sum(axis=0)
        if k > 0:
            dh = da @ model.weights[k].T
    if weight_decay > 0:
        for k, W in enumerate(model.weights):
            weight_grads[k] = weight_grads[k] + weight_decay * W
    return loss, weight_grads, bias_grads


def train(model: MlpSurvModel, X: np.ndarray, labels: list[SurvivalLabel],
          val: tuple[np.ndarray, list[SurvivalLabel]] | None = None,
          options: TrainOptions | None = None):
    """Full-batch gradient descent; returns ``(trained model, loss history)``.

    When validation data is supplied the validation loss is tracked after
    every update and the weights from the best validation epoch are
    returned; training stops early after ``patience`` epochs without
    improvement. Without validation the final weights are returned. The
    input model is not modified. history[k] is the training loss evaluated
    at the start of epoch k, so ``learning_rate=0`` yields a constant
    history and unchanged weights.
    """
    opts = options or TrainOptions()
    X = _check_input(model, X)
    work = MlpSurvModel(
        layer_dims=model.layer_dims,
        weights=[W.copy() for W in model.weights],
        biases=[b.copy() for b in model.biases],
        seed=model.seed,
        modality_tag=model.modality_tag,
    )
    best_val = np.inf
    best_weights = None
    stale = 0
    history: list[float] = []
    for _ in range(opts.epochs):
        # overflowed parameters surface as non-finite scores inside the
        # likelihood before the loss value itself can be inspected
        try:
            loss, wg, bg = loss_and_gradients(work, X, labels, opts.weight_decay,
                                              opts.tie_method)
        except NonFiniteInputError as exc:
            raise DivergedLossError(f"parameters overflowed during training: {exc}") from exc
        if not np.isfinite(loss):
            raise DivergedLossError(f"training loss became {loss}")
        history.append(float(loss))
        for k in range(len(work.weights)):
            work.weights[k] -= opts.learning_rate * wg[k]
            work.biases[k] -= opts.learning_rate * bg[k]
        if val is not None:
            try:
                val_loss = cox_loss(forward(work, val[0]), val[1], opts.tie_method)
            except NonFiniteInputError as exc:
                raise DivergedLossError(f"parameters overflowed during training: {exc}") from exc
            if not np.isfinite(val_loss):
                raise DivergedLossError(f"validation loss became {val_loss}")
            if val_loss < best_val:
                best_val = val_loss
                best_weights = ([W.copy() for W in work.weights],
                                [b.copy() for b in work.biases])
                stale = 0
            else:
                stale += 1
                if stale >= opts.patience:
                    break
    if val is not None and best_weights is not None:
        work.weights, work.biases = best_weights
    return work, history


def feature_importance(model: MlpSurvModel) -> np.ndarray:
    """Per-input importance: L2 norm of the input's first-layer weight vector."""
    return np.linalg.norm(model.weights[0], axis=1)


def predictive_ability(ds: Dataset, variable_index: int) -> float:
    """Discriminative strength of one clinical input on its own.

    Computes the c-index of the raw variable as a risk score and aligns the
    sign, ``max(c, 1 - c)``, so informative variables score near 1 whether
    they raise or lower hazard and uninformative ones sit near 0.5.
    """
    mat = clinical_matrix(ds)
    if not 0 <= variable_index < mat.shape[1]:
        raise DimensionMismatchError(
            f"variable_index {variable_index} out of range for {mat.shape[1]} inputs"
        )
    values = mat[:, variable_index]
    if np.all(values == values[0]):
        raise ConstantVariableError(f"variable {variable_index} has a single distinct value")
    c = c_index(values, ds.labels)
    return max(c, 1.0 - c)
