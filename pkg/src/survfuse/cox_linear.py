"""Linear Cox proportional hazards fitting.

Implements the partial log-likelihood with Efron and Breslow tie handling,
its analytic gradient and Hessian, a damped Newton-Raphson solver with
optional ridge penalty, and the Breslow baseline cumulative hazard for
absolute survival probabilities.

All likelihood code subtracts the max linear predictor before
exponentiating; the partial likelihood is invariant to that shift, so the
reported values are exact while the intermediate sums stay bounded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import SurvivalLabel, label_arrays
from .errors import (
    DimensionMismatchError,
    NoEventsError,
    NonFiniteInputError,
    SingularInformationError,
)


@dataclass(frozen=True)
class FitOptions:
    tie_method: str = "efron"
    max_iter: int = 100
    tolerance: float = 1e-9
    ridge_penalty: float = 0.0

    def __post_init__(self):
        if self.tie_method not in ("efron", "breslow"):
            raise ValueError(f"tie_method must be 'efron' or 'breslow', got {self.tie_method!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.ridge_penalty < 0:
            raise ValueError("ridge_penalty must be >= 0")


@dataclass(frozen=True, eq=False)
class CoxModel:
    beta: np.ndarray
    covariate_names: tuple[str, ...]
    baseline_times: np.ndarray
    baseline_cumhaz: np.ndarray
    log_likelihood: float
    converged: bool
    n_iterations: int
    tie_method: str


class _RiskStructure:
    """Sorted-by-time view of a cohort with tied-event groups precomputed.

    ``order`` sorts subjects by time ascending (stable). For each distinct
    event time g: ``risk_start[g]`` is the index in sorted order where the
    risk set begins (everyone with time >= that event time), and
    ``death_slices[g]`` lists sorted-order positions of the tied deaths.
    """

    def __init__(self, times: np.ndarray, events: np.ndarray):
        self.order = np.argsort(times, kind="stable")
        self.t = times[self.order]
        self.e = events[self.order]
        self.event_times = np.unique(self.t[self.e])
        if self.event_times.size == 0:
            raise NoEventsError("at least one observed event is required")
        self.risk_start = np.searchsorted(self.t, self.event_times, side="left")
        self.death_slices = []
        for v in self.event_times:
            lo = np.searchsorted(self.t, v, side="left")
            hi = np.searchsorted(self.t, v, side="right")
            members = np.arange(lo, hi)[self.e[lo:hi]]
            self.death_slices.append(members)


def _check_finite(arr: np.ndarray, name: str):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"{name} contains non-finite values")


def partial_loglik_eta(eta: np.ndarray, times: np.ndarray, events: np.ndarray,
                       tie_method: str = "efron") -> tuple[float, np.ndarray]:
    """Partial log-likelihood and its gradient w.r.t. the per-subject scores.

    This is the piece shared by the linear model (scores = X @ beta) and the
    network loss (scores = forward output). Returns ``(loglik, d loglik / d
    eta)`` with the gradient in the original subject order.
    """
    eta = np.asarray(eta, dtype=float)
    _check_finite(eta, "eta")
    struct = _RiskStructure(np.asarray(times, float), np.asarray(events, bool))
    return _loglik_and_eta_grad(eta, struct, tie_method)


def _loglik_and_eta_grad(eta: np.ndarray, struct: _RiskStructure, tie_method: str):
    eta_s = eta[struct.order]
    m = float(eta_s.max())
    w = np.exp(eta_s - m)
    s0_suffix = np.cumsum(w[::-1])[::-1]

    n_groups = struct.event_times.size
    ll = 0.0
    coef_a = np.zeros(n_groups)  # sum_l 1/psi_l per group
    coef_b = np.zeros(n_groups)  # sum_l (l/d)/psi_l per group (Efron correction)
    own_b = np.zeros(eta_s.size)
    for g in range(n_groups):
        deaths = struct.death_slices[g]
        d = deaths.size
        s0r = s0_suffix[struct.risk_start[g]]
        sum_eta = float((eta_s[deaths] - m).sum())
        if tie_method == "efron" and d > 1:
            frac = np.arange(d) / d
            psi = s0r - frac * w[deaths].sum()
            ll += sum_eta - float(np.log(psi).sum())
            coef_a[g] = float((1.0 / psi).sum())
            coef_b[g] = float((frac / psi).sum())
        else:
            ll += sum_eta - d * float(np.log(s0r))
            coef_a[g] = d / s0r
        own_b[deaths] = coef_b[g]

    cum_a = np.cumsum(coef_a)
    gidx = np.searchsorted(struct.event_times, struct.t, side="right") - 1
    coef = np.where(gidx >= 0, cum_a[np.maximum(gidx, 0)], 0.0)
    grad_s = struct.e.astype(float) - w * coef + w * own_b

    grad = np.empty_like(grad_s)
    grad[struct.order] = grad_s
    return ll, grad


def partial_loglik(beta: np.ndarray, X: np.ndarray, labels: list[SurvivalLabel],
                   tie_method: str = "efron") -> float:
    """Cox partial log-likelihood at ``beta``."""
    beta = np.asarray(beta, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or beta.shape != (X.shape[1],):
        raise DimensionMismatchError(f"X is {X.shape}, beta is {beta.shape}")
    if X.shape[0] != len(labels):
        raise DimensionMismatchError(f"{X.shape[0]} rows of X but {len(labels)} labels")
    _check_finite(X, "X")
    _check_finite(beta, "beta")
    times, events = label_arrays(labels)
    ll, _ = partial_loglik_eta(X @ beta, times, events, tie_method)
    return float(ll)


def partial_loglik_grad_hess(beta: np.ndarray, X: np.ndarray, labels: list[SurvivalLabel],
                             tie_method: str = "efron"):
    """Unpenalized ``(loglik, gradient, Hessian)`` at ``beta``.

    The Hessian is assembled from weighted covariate moments over each risk
    set (suffix sums in time order), which keeps the cost linear in n for
    fixed covariate count.
    """
    beta = np.asarray(beta, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or beta.shape != (X.shape[1],):
        raise DimensionMismatchError(f"X is {X.shape}, beta is {beta.shape}")
    if X.shape[0] != len(labels):
        raise DimensionMismatchError(f"{X.shape[0]} rows of X but {len(labels)} labels")
    _check_finite(X, "X")
    _check_finite(beta, "beta")
    times, events = label_arrays(labels)
    struct = _RiskStructure(times, events)
    return _beta_derivatives(beta, X, struct, tie_method)


def _beta_derivatives(beta, X, struct: _RiskStructure, tie_method: str):
    p = X.shape[1]
    Xs = X[struct.order]
    eta_s = Xs @ beta
    m = float(eta_s.max())
    w = np.exp(eta_s - m)

    wx = w[:, None] * Xs
    wxx = wx[:, :, None] * Xs[:, None, :]
    s0_suffix = np.cumsum(w[::-1])[::-1]
    s1_suffix = np.cumsum(wx[::-1], axis=0)[::-1]
    s2_suffix = np.cumsum(wxx[::-1], axis=0)[::-1]

    ll = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    for g in range(struct.event_times.size):
        deaths = struct.death_slices[g]
        d = deaths.size
        r = struct.risk_start[g]
        s0r, s1r, s2r = s0_suffix[r], s1_suffix[r], s2_suffix[r]
        ll += float((eta_s[deaths] - m).sum())
        grad += Xs[deaths].sum(axis=0)
        if tie_method == "efron" and d > 1:
            frac = np.arange(d) / d
            s0d = w[deaths].sum()
            s1d = wx[deaths].sum(axis=0)
            s2d = wxx[deaths].sum(axis=0)
            psi = s0r - frac * s0d                              # (d,)
            mu = (s1r[None, :] - frac[:, None] * s1d) / psi[:, None]   # (d, p)
            ll -= float(np.log(psi).sum())
            grad -= mu.sum(axis=0)
            inv = (1.0 / psi).sum()
            finv = (frac / psi).sum()
            hess -= s2r * inv - s2d * finv - np.einsum("lp,lq->pq", mu, mu)
        else:
            mu = s1r / s0r
            ll -= d * float(np.log(s0r))
            grad -= d * mu
            hess -= d * (s2r / s0r - np.outer(mu, mu))
    return float(ll), grad, hess


def fit_cox(X: np.ndarray, labels: list[SurvivalLabel], options: FitOptions | None = None,
            covariate_names: tuple[str, ...] | None = None) -> CoxModel:
    """Maximize the partial likelihood by damped Newton-Raphson.

    Each iteration solves the Newton system and halves the step until the
    (ridge-penalized) objective does not decrease. Convergence is declared
    when the max-norm of the penalized gradient drops below the tolerance;
    hitting ``max_iter`` first returns the best iterate with
    ``converged=False`` rather than raising.
    """
    opts = options or FitOptions()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatchError(f"X must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if n != len(labels):
        raise DimensionMismatchError(f"{n} rows of X but {len(labels)} labels")
    if n < p + 1:
        raise DimensionMismatchError(f"need at least p+1={p + 1} subjects, got {n}")
    _check_finite(X, "X")
    times, events = label_arrays(labels)
    struct = _RiskStructure(times, events)
    if covariate_names is None:
        covariate_names = tuple(f"x{j}" for j in range(p))
    if len(covariate_names) != p:
        raise DimensionMismatchError("covariate_names length must match X columns")

    ridge = opts.ridge_penalty
    eye = np.eye(p)
    beta = np.zeros(p)
    converged = False
    iterations = 0
    ll, grad, hess = _beta_derivatives(beta, X, struct, opts.tie_method)
    for iterations in range(1, opts.max_iter + 1):
        grad_pen = grad - ridge * beta
        if float(np.max(np.abs(grad_pen))) < opts.tolerance:
            converged = True
            iterations -= 1
            break
        hess_pen = hess - ridge * eye
        try:
            delta = np.linalg.solve(-hess_pen, grad_pen)
        except np.linalg.LinAlgError:
            raise SingularInformationError(
                "information matrix is singular (constant or collinear covariate?); "
                "a small ridge_penalty makes the fit well-posed"
            ) from None
        if not np.all(np.isfinite(delta)):
            raise SingularInformationError("Newton step is non-finite; try a ridge_penalty")

        pen_ll = ll - 0.5 * ridge * float(beta @ beta)
        step = 1.0
        accepted = False
        while step >= 2.0 ** -30:
            cand = beta + step * delta
            cand_ll, cand_grad, cand_hess = _beta_derivatives(cand, X, struct, opts.tie_method)
            cand_pen = cand_ll - 0.5 * ridge * float(cand @ cand)
            if np.isfinite(cand_pen) and cand_pen >= pen_ll - 1e-12 * (1.0 + abs(pen_ll)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # flat to machine precision in every direction tried
        beta, ll, grad, hess = cand, cand_ll, cand_grad, cand_hess
    else:
        iterations = opts.max_iter
    if not converged:
        grad_pen = grad - ridge * beta
        converged = float(np.max(np.abs(grad_pen))) < opts.tolerance

    base_t, base_h = _breslow_baseline(beta, X, struct)
    return CoxModel(
        beta=beta,
        covariate_names=tuple(covariate_names),
        baseline_times=base_t,
        baseline_cumhaz=base_h,
        log_likelihood=float(ll),
        converged=converged,
        n_iterations=iterations,
        tie_method=opts.tie_method,
    )


def _breslow_baseline(beta, X, struct: _RiskStructure):
    """Breslow estimate of the cumulative baseline hazard at event times."""
    eta_s = (X @ beta)[struct.order]
    m = float(eta_s.max())
    w = np.exp(eta_s - m)
    s0_suffix = np.cumsum(w[::-1])[::-1]
    increments = np.array(
        [struct.death_slices[g].size / s0_suffix[struct.risk_start[g]]
         for g in range(struct.event_times.size)]
    ) * np.exp(-m)
    return struct.event_times.copy(), np.cumsum(increments)


def predict_linear(model: CoxModel, X: np.ndarray) -> np.ndarray:
    """Linear risk scores ``X @ beta`` (higher = shorter expected survival)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.beta.size:
        raise DimensionMismatchError(
            f"model has {model.beta.size} covariates, X has {X.shape[1]} columns"
        )
    _check_finite(X, "X")
    return X @ model.beta


def survival_at(model: CoxModel, x: np.ndarray, t: float) -> float:
    """Absolute survival probability S(t | x) = exp(-H0(t) * exp(beta @ x)).

    The stored baseline is a step function jumping at event times; queries
    before the first event return exactly 1.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.beta.size:
        raise DimensionMismatchError(
            f"model has {model.beta.size} covariates, x has {x.size}"
        )
    idx = int(np.searchsorted(model.baseline_times, t, side="right")) - 1
    h0 = 0.0 if idx < 0 else float(model.baseline_cumhaz[idx])
    return float(np.exp(-h0 * np.exp(float(x @ model.beta))))
