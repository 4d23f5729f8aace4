"""train: fit one scheme on a full dataset and save the model."""
import logging
from pathlib import Path

from config import VERSION, config_from_args, load_source
from multi_treatment import fit_multi, save_model
from report import write_manifest

logger = logging.getLogger(__name__)


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    ds = load_source(cfg.data)
    mode = cfg.modes[0]
    if len(cfg.modes) > 1:
        logger.warning(f"⚠️ train fits one mode; using {mode.value}")
    model = fit_multi(ds, cfg.scheme, mode, cfg.forest, cfg.resolved_nuisance(), cfg.n_jobs())

    path = Path(args.model) if args.model else cfg.output_dir / "model.json"
    save_model(model, path)
    write_manifest(path.parent, cfg.config_hash(), cfg.seed, [path], VERSION)
    for arm, diag in model.diagnostics.items():
        print(f"✅ {model.arm_names[arm]}: n={diag.n}, treated={diag.treated}, clamped={diag.clamped}")
    print(f"💾 Model written to {path}")
    return 0
