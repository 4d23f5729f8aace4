"""Multiple-treatment uplift: treatment comparison and combined treatment schemes.

treatment_comparison fits one causal forest per arm against the shared control;
combined_treatment collapses all arms into a single treated indicator and fits
one forest. Each arm is centered within its own subset.
"""
import json
import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from causal_forest import CausalForest, ItePrediction, center, fit_causal_forest, predict_ite
from dataset import (
    Dataset,
    OutcomeKind,
    binarize_treatments,
    select_outcome,
    setting_label,
    subset_by_arm,
)
from errors import CompatibilityError, CompositionError, FitError
from trees import ForestConfig, derive_seed, nuisance_config

logger = logging.getLogger(__name__)

MODEL_FORMAT = "uplift-forest-model"
MODEL_VERSION = 1


class Scheme(str, Enum):
    TREATMENT_COMPARISON = "treatment_comparison"
    COMBINED_TREATMENT = "combined_treatment"


class ArmDiagnostics(BaseModel):
    """What centering reported for one arm's training subset."""
    n: int
    treated: int
    clamped: int
    oob_fallbacks: int
    mean_propensity: float


@dataclass
class MultiForestModel:
    scheme: Scheme
    mode: OutcomeKind
    forests: Dict[int, CausalForest]
    diagnostics: Dict[int, ArmDiagnostics]
    arm_names: Dict[int, str]
    covariate_names: Tuple[str, ...]
    config: ForestConfig
    nuisance: ForestConfig

    @property
    def setting(self) -> str:
        return setting_label(len(self.arm_names) - 1, self.mode)


def fit_multi(
    ds: Dataset,
    scheme: Scheme,
    mode: OutcomeKind,
    cfg: ForestConfig,
    nuisance_cfg: Optional[ForestConfig] = None,
    n_jobs: int = 1,
) -> MultiForestModel:
    """Fit the forests of one scheme on `ds` using the outcome of `mode`.

    Seeds are derived per arm from (seed, arm code), so an arm's forest does
    not depend on which other arms exist.
    """
    scheme = Scheme(scheme)
    mode = OutcomeKind(mode)
    nuisance_cfg = nuisance_cfg or nuisance_config(seed=cfg.seed)
    data = select_outcome(ds, mode)
    if data.num_arms < 1:
        raise FitError(f"{ds.name}: no treatment arms to model")

    if scheme == Scheme.TREATMENT_COMPARISON:
        subsets = {}
        for arm in range(1, data.num_arms + 1):
            try:
                subsets[arm] = subset_by_arm(data, arm)
            except CompositionError as e:
                raise FitError(f"arm '{data.arm_names.get(arm, arm)}': {e}") from e
    else:
        subsets = {1: binarize_treatments(data)}

    forests, diagnostics, arm_names = {}, {}, {0: data.control_label}
    for arm, subset in subsets.items():
        label = subset.arm_names[1]
        arm_cfg = cfg.model_copy(update={"seed": derive_seed(cfg.seed, arm)})
        arm_nuisance = nuisance_cfg.model_copy(update={"seed": derive_seed(nuisance_cfg.seed, arm)})
        cd = center(subset, arm_nuisance, n_jobs)
        forests[arm] = fit_causal_forest(cd, arm_cfg, n_jobs, outcome_kind=mode, arm_label=label)
        diagnostics[arm] = ArmDiagnostics(
            n=subset.n,
            treated=int(subset.treatment.sum()),
            clamped=cd.clamped,
            oob_fallbacks=cd.oob_fallbacks,
            mean_propensity=float(cd.e_hat.mean()),
        )
        arm_names[arm] = label

    model = MultiForestModel(
        scheme=scheme,
        mode=mode,
        forests=forests,
        diagnostics=diagnostics,
        arm_names=arm_names,
        covariate_names=ds.covariate_names,
        config=cfg,
        nuisance=nuisance_cfg,
    )
    logger.info(f"✅ Fitted {model.setting} ({scheme.value}) with {len(forests)} forest(s) on {ds.name}")
    return model


def predict_all(m: MultiForestModel, Xnew) -> Dict[int, ItePrediction]:
    """One ITE vector per modelled arm; combined_treatment answers under code 1."""
    Xnew = np.asarray(Xnew, dtype=np.float64)
    if Xnew.ndim != 2 or Xnew.shape[1] != len(m.covariate_names):
        raise CompatibilityError(
            f"expected a matrix with {len(m.covariate_names)} columns, got shape {Xnew.shape}"
        )
    return {
        arm: replace(predict_ite(forest, None, Xnew), arm=arm)
        for arm, forest in sorted(m.forests.items())
    }


def recommend_treatment(ites: Mapping[int, np.ndarray]) -> np.ndarray:
    """Per unit, the arm with the largest positive ITE, else 0 (control).

    Ties between arms go to the lowest arm code.
    """
    arms = sorted(ites)
    if not arms:
        raise ValueError("need at least one arm")
    stacked = np.column_stack([np.atleast_1d(np.asarray(ites[a], dtype=np.float64)) for a in arms])
    best = np.argmax(stacked, axis=1)
    top = stacked[np.arange(stacked.shape[0]), best]
    return np.where(top > 0, np.asarray(arms)[best], 0).astype(np.int64)


def save_model(m: MultiForestModel, path) -> Path:
    """Write the model as a versioned JSON document."""
    document = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "scheme": m.scheme.value,
        "mode": m.mode.value,
        "arm_names": {str(k): v for k, v in m.arm_names.items()},
        "covariate_names": list(m.covariate_names),
        "config": m.config.model_dump(),
        "nuisance": m.nuisance.model_dump(),
        "diagnostics": {str(k): v.model_dump() for k, v in m.diagnostics.items()},
        "forests": {str(k): f.to_dict() for k, f in m.forests.items()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, separators=(",", ":"))
    logger.info(f"Model written to {path}")
    return path


def load_model(path) -> MultiForestModel:
    try:
        with open(path, encoding="utf-8") as fh:
            document = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise CompatibilityError(f"cannot read model file {path}: {e}") from e
    if document.get("format") != MODEL_FORMAT or document.get("version") != MODEL_VERSION:
        raise CompatibilityError(f"{path} is not an {MODEL_FORMAT} v{MODEL_VERSION} document")
    return MultiForestModel(
        scheme=Scheme(document["scheme"]),
        mode=OutcomeKind(document["mode"]),
        forests={int(k): CausalForest.from_dict(v) for k, v in document["forests"].items()},
        diagnostics={int(k): ArmDiagnostics(**v) for k, v in document["diagnostics"].items()},
        arm_names={int(k): v for k, v in document["arm_names"].items()},
        covariate_names=tuple(document["covariate_names"]),
        config=ForestConfig(**document["config"]),
        nuisance=ForestConfig(**document["nuisance"]),
    )
