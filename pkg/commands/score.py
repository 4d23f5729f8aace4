"""score: per-unit ITEs and the recommended arm for new data."""
import logging
from pathlib import Path

import pandas as pd

from config import load_schema_file
from dataset import load_features
from errors import InputError
from multi_treatment import load_model, predict_all, recommend_treatment
from report import slug

logger = logging.getLogger(__name__)


def cmd_score(args) -> int:
    """Write unit_id, one tau column per arm and the recommended arm code."""
    model = load_model(args.model)
    if args.schema is None:
        raise InputError("score needs --schema describing the covariate columns")
    schema = load_schema_file(args.schema)
    unit_ids, X, _ = load_features(args.data, schema, expected_names=model.covariate_names)

    predictions = predict_all(model, X)
    frame = pd.DataFrame({"unit_id": unit_ids})
    for arm, pred in predictions.items():
        frame[f"tau_{slug(model.arm_names[arm])}"] = pred.tau_hat
    frame["recommended"] = recommend_treatment({arm: pred.tau_hat for arm, pred in predictions.items()})

    out = Path(args.out) if args.out else Path("scores.csv")
    if out.resolve() == Path(args.data).resolve():
        raise InputError("refusing to overwrite the input file with scores")
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, lineterminator="\n")
    logger.info(f"✅ Scored {len(frame)} units with {model.setting}")
    print(f"💾 Scores written to {out}")
    return 0
