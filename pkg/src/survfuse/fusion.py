"""Late fusion of per-modality risk scores.

A proportional-hazards model over standardized modality scores: each input
vector is z-scored with constants frozen at fit time, then a linear Cox fit
(small ridge for stability) produces the fused linear predictor. Covariate
order is canonical (clinical, imaging, severity index, then the forest
variants), independent of dict insertion order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cox_linear import CoxModel, FitOptions, fit_cox
from .dataset import SurvivalLabel
from .errors import ExtraModalityError, MismatchedLengthsError, MissingModalityError

CANONICAL_ORDER = ("clin", "img", "pesi", "rsf_clin", "rsf_img")

# fusion sits on top of already-regularized learners; the tiny default ridge
# only guards against degenerate (constant) score columns
DEFAULT_FUSION_OPTIONS = FitOptions(ridge_penalty=1e-8)


@dataclass(frozen=True, eq=False)
class FusionModel:
    cox: CoxModel
    sources: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray


def _ordered_sources(keys) -> tuple[str, ...]:
    unknown = set(keys) - set(CANONICAL_ORDER)
    if unknown:
        raise ValueError(f"unknown modality tags: {sorted(unknown)}; "
                         f"expected a subset of {CANONICAL_ORDER}")
    if not 1 <= len(keys) <= 3:
        raise ValueError(f"fusion takes 1-3 modalities, got {len(keys)}")
    return tuple(tag for tag in CANONICAL_ORDER if tag in keys)


def fit_fusion(scores_by_modality: dict[str, np.ndarray], labels: list[SurvivalLabel],
               options: FitOptions | None = None) -> FusionModel:
    """Fit the fusion Cox model on per-modality score vectors.

    A zero-variance column is centered but not scaled (std treated as 1),
    and the ridge keeps the information matrix invertible, so a constant
    modality degrades gracefully to coefficient ~0 instead of failing.
    """
    sources = _ordered_sources(scores_by_modality.keys())
    n = len(labels)
    columns = []
    for tag in sources:
        v = np.asarray(scores_by_modality[tag], dtype=float).ravel()
        if v.size != n:
            raise MismatchedLengthsError(f"modality {tag!r} has {v.size} scores for {n} labels")
        columns.append(v)
    raw = np.column_stack(columns)
    means = raw.mean(axis=0)
    stds = raw.std(axis=0)
    stds = np.where(stds == 0.0, 1.0, stds)
    z = (raw - means) / stds
    cox = fit_cox(z, labels, options or DEFAULT_FUSION_OPTIONS, covariate_names=sources)
    return FusionModel(cox=cox, sources=sources, means=means, stds=stds)


def _standardized(model: FusionModel, scores: dict[str, np.ndarray]) -> np.ndarray:
    given = set(scores.keys())
    expected = set(model.sources)
    missing = expected - given
    if missing:
        raise MissingModalityError(f"missing modality inputs: {sorted(missing)}")
    extra = given - expected
    if extra:
        raise ExtraModalityError(f"unexpected modality inputs: {sorted(extra)}")
    cols = [np.asarray(scores[tag], dtype=float).ravel() for tag in model.sources]
    sizes = {c.size for c in cols}
    if len(sizes) != 1:
        raise MismatchedLengthsError(f"modality score lengths disagree: {sorted(sizes)}")
    raw = np.column_stack(cols)
    return (raw - model.means) / model.stds


def predict_fused(model: FusionModel, scores: dict[str, float | np.ndarray]):
    """Fused linear predictor; scalar inputs give a float, vectors an array."""
    scalar = all(np.ndim(v) == 0 for v in scores.values())
    vectors = {tag: np.atleast_1d(np.asarray(v, dtype=float)) for tag, v in scores.items()}
    z = _standardized(model, vectors)
    out = z @ model.cox.beta
    return float(out[0]) if scalar else out
