"""Model persistence.

Every fitted model serializes to a single JSON document with a fixed
schema version, the model kind, and reproducibility metadata (the config
seed and a sha256 fingerprint of the input data). Fusion artifacts embed
their component models and the imputation constants so a saved model is
sufficient to score raw CSV exports on its own. Floats survive the round
trip bit for bit: ``json`` emits the shortest repr that parses back to
the identical double. Non-finite thresholds (leaf markers) are stored as
null.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .cox_linear import CoxModel
from .dataset import ImputationStats
from .deep_survival import MlpSurvModel
from .errors import IoError, SchemaMismatchError, UnknownModelKindError
from .fusion import FusionModel
from .rsf import ForestModel, RsfOptions, SurvivalTree

SCHEMA_VERSION = 1

MODEL_KINDS = (
    "deep_clinical",
    "deep_imaging",
    "rsf_clinical",
    "rsf_imaging",
    "fusion_multimodal",
    "fusion_pesi_fused",
    "fusion_rsf",
)

_FUSION_KINDS = ("fusion_multimodal", "fusion_pesi_fused", "fusion_rsf")


@dataclass(eq=False)
class FusionBundle:
    """A fusion head together with the component models it consumes."""

    fusion: FusionModel
    components: dict[str, object]  # modality tag -> MlpSurvModel | ForestModel


@dataclass(eq=False)
class ModelArtifact:
    kind: str
    model: object
    imputation: ImputationStats | None
    metadata: dict


def file_fingerprint(*paths) -> str:
    """sha256 over the given files' bytes, in argument order."""
    h = hashlib.sha256()
    for p in paths:
        try:
            with open(p, "rb") as fh:
                h.update(fh.read())
        except OSError as exc:
            raise IoError(f"cannot read {p}: {exc}") from exc
    return h.hexdigest()


# --- encoders ---------------------------------------------------------------


def _enc_floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _enc_mlp(m: MlpSurvModel) -> dict:
    return {
        "layer_dims": list(m.layer_dims),
        "weights": [w.tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
        "seed": m.seed,
        "modality_tag": m.modality_tag,
    }


def _dec_mlp(doc: dict) -> MlpSurvModel:
    return MlpSurvModel(
        layer_dims=tuple(int(d) for d in doc["layer_dims"]),
        weights=[np.asarray(w, dtype=float) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=float) for b in doc["biases"]],
        seed=int(doc["seed"]),
        modality_tag=doc["modality_tag"],
    )


def _enc_tree(t: SurvivalTree) -> dict:
    return {
        "feature": t.feature.tolist(),
        "threshold": [None if not math.isfinite(v) else float(v) for v in t.threshold],
        "left": t.left.tolist(),
        "right": t.right.tolist(),
        "leaf_slot": t.leaf_slot.tolist(),
        "leaf_times": [g.tolist() for g in t.leaf_times],
        "leaf_chf": [h.tolist() for h in t.leaf_chf],
        "leaf_mortality": _enc_floats(t.leaf_mortality),
    }


def _dec_tree(doc: dict) -> SurvivalTree:
    return SurvivalTree(
        feature=np.asarray(doc["feature"], dtype=np.int64),
        threshold=np.asarray([math.nan if v is None else v for v in doc["threshold"]], dtype=float),
        left=np.asarray(doc["left"], dtype=np.int64),
        right=np.asarray(doc["right"], dtype=np.int64),
        leaf_slot=np.asarray(doc["leaf_slot"], dtype=np.int64),
        leaf_times=[np.asarray(g, dtype=float) for g in doc["leaf_times"]],
        leaf_chf=[np.asarray(h, dtype=float) for h in doc["leaf_chf"]],
        leaf_mortality=np.asarray(doc["leaf_mortality"], dtype=float),
    )


def _enc_forest(f: ForestModel) -> dict:
    return {
        "event_time_grid": _enc_floats(f.event_time_grid),
        "n_features": f.n_features,
        "options": {
            "n_trees": f.options.n_trees,
            "mtry": f.options.mtry,
            "min_leaf_size": f.options.min_leaf_size,
            "seed": f.options.seed,
        },
        "trees": [_enc_tree(t) for t in f.trees],
    }


def _dec_forest(doc: dict) -> ForestModel:
    opts = doc["options"]
    return ForestModel(
        trees=[_dec_tree(t) for t in doc["trees"]],
        event_time_grid=np.asarray(doc["event_time_grid"], dtype=float),
        n_features=int(doc["n_features"]),
        options=RsfOptions(
            n_trees=int(opts["n_trees"]),
            mtry=None if opts["mtry"] is None else int(opts["mtry"]),
            min_leaf_size=int(opts["min_leaf_size"]),
            seed=int(opts["seed"]),
        ),
    )


def _enc_cox(c: CoxModel) -> dict:
    return {
        "beta": _enc_floats(c.beta),
        "covariate_names": list(c.covariate_names),
        "baseline_times": _enc_floats(c.baseline_times),
        "baseline_cumhaz": _enc_floats(c.baseline_cumhaz),
        "log_likelihood": c.log_likelihood,
        "converged": c.converged,
        "n_iterations": c.n_iterations,
        "tie_method": c.tie_method,
    }


def _dec_cox(doc: dict) -> CoxModel:
    return CoxModel(
        beta=np.asarray(doc["beta"], dtype=float),
        covariate_names=tuple(doc["covariate_names"]),
        baseline_times=np.asarray(doc["baseline_times"], dtype=float),
        baseline_cumhaz=np.asarray(doc["baseline_cumhaz"], dtype=float),
        log_likelihood=float(doc["log_likelihood"]),
        converged=bool(doc["converged"]),
        n_iterations=int(doc["n_iterations"]),
        tie_method=doc["tie_method"],
    )


_COMPONENT_CODECS = {
    "mlp": (_enc_mlp, _dec_mlp),
    "forest": (_enc_forest, _dec_forest),
}


def _component_type(model) -> str:
    if isinstance(model, MlpSurvModel):
        return "mlp"
    if isinstance(model, ForestModel):
        return "forest"
    raise UnknownModelKindError(f"cannot serialize component of type {type(model).__name__}")


def _enc_fusion(b: FusionBundle) -> dict:
    components = {}
    for tag, model in b.components.items():
        ctype = _component_type(model)
        components[tag] = {"type": ctype, "model": _COMPONENT_CODECS[ctype][0](model)}
    return {
        "cox": _enc_cox(b.fusion.cox),
        "sources": list(b.fusion.sources),
        "means": _enc_floats(b.fusion.means),
        "stds": _enc_floats(b.fusion.stds),
        "components": components,
    }


def _dec_fusion(doc: dict) -> FusionBundle:
    components = {}
    for tag, entry in doc["components"].items():
        ctype = entry["type"]
        if ctype not in _COMPONENT_CODECS:
            raise SchemaMismatchError(f"unknown component type {ctype!r}")
        components[tag] = _COMPONENT_CODECS[ctype][1](entry["model"])
    fusion = FusionModel(
        cox=_dec_cox(doc["cox"]),
        sources=tuple(doc["sources"]),
        means=np.asarray(doc["means"], dtype=float),
        stds=np.asarray(doc["stds"], dtype=float),
    )
    return FusionBundle(fusion=fusion, components=components)


def _enc_imputation(s: ImputationStats) -> dict:
    return {
        "binary_medians": {k: bool(v) for k, v in s.binary_medians.items()},
        "age_median": s.age_median,
        "age_mean": s.age_mean,
        "age_std": s.age_std,
    }


def _dec_imputation(doc: dict) -> ImputationStats:
    return ImputationStats(
        binary_medians={k: bool(v) for k, v in doc["binary_medians"].items()},
        age_median=float(doc["age_median"]),
        age_mean=float(doc["age_mean"]),
        age_std=float(doc["age_std"]),
    )


# --- public API -------------------------------------------------------------


def save_model(path, kind: str, model, *, imputation: ImputationStats | None = None,
               seed: int | None = None, data_fingerprint: str | None = None) -> None:
    """Write one fitted model (with metadata) as a JSON artifact."""
    if kind not in MODEL_KINDS:
        raise UnknownModelKindError(f"unknown model kind {kind!r}")
    if kind in _FUSION_KINDS:
        if not isinstance(model, FusionBundle):
            raise SchemaMismatchError(f"{kind} artifacts require a FusionBundle")
        body = _enc_fusion(model)
    elif kind.startswith("deep_"):
        if not isinstance(model, MlpSurvModel):
            raise SchemaMismatchError(f"{kind} artifacts require an MlpSurvModel")
        body = _enc_mlp(model)
    else:
        if not isinstance(model, ForestModel):
            raise SchemaMismatchError(f"{kind} artifacts require a ForestModel")
        body = _enc_forest(model)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "metadata": {"seed": seed, "data_fingerprint": data_fingerprint},
        "imputation": None if imputation is None else _enc_imputation(imputation),
        "model": body,
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_model(path) -> ModelArtifact:
    """Read an artifact back; the inverse of :func:`save_model`."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaMismatchError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise SchemaMismatchError(f"{path} lacks a schema_version field")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"unsupported schema_version {doc['schema_version']!r} (expected {SCHEMA_VERSION})"
        )
    missing = [k for k in ("kind", "model", "metadata") if k not in doc]
    if missing:
        raise SchemaMismatchError(f"{path} lacks required field(s) {missing}")
    kind = doc["kind"]
    if kind not in MODEL_KINDS:
        raise UnknownModelKindError(f"unknown model kind {kind!r} in {path}")
    body = doc["model"]
    try:
        if kind in _FUSION_KINDS:
            model = _dec_fusion(body)
        elif kind.startswith("deep_"):
            model = _dec_mlp(body)
        else:
            model = _dec_forest(body)
        imputation = None if doc.get("imputation") is None else _dec_imputation(doc["imputation"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatchError(f"{path} has a malformed {kind} body: {exc}") from exc
    return ModelArtifact(kind=kind, model=model, imputation=imputation, metadata=doc["metadata"])
