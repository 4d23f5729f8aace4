"""prepare: load a data source, print its audit and cache it as canonical CSV."""
import json
import logging

from config import VERSION, config_from_args, load_source
from dataset import balance_check, dataset_to_csv, describe
from report import write_manifest

logger = logging.getLogger(__name__)


def print_summary(summary) -> None:
    print(f"📊 {summary.name}: n={summary.n}, p={summary.p}, outcome={summary.outcome_kind.value}")
    for label, count in summary.arm_counts.items():
        print(
            f"  {label}: {count} records, {summary.arm_purchasers[label]} purchasers, "
            f"revenue {summary.arm_revenue[label]:.2f}"
        )
    print(f"  treated: {summary.treated_purchasers} purchasers, revenue {summary.treated_revenue:.2f}")
    print(f"  control: {summary.control_purchasers} purchasers, revenue {summary.control_revenue:.2f}")


def cmd_prepare(args) -> int:
    """Print the descriptive audit and write dataset.csv, schema.json and manifest.json to the output directory."""
    cfg = config_from_args(args)
    ds = load_source(cfg.data)
    summary = describe(ds)
    balance = balance_check(ds)

    if args.json:
        document = summary.model_dump(mode="json")
        document["balance"] = balance
        print(json.dumps(document, indent=2))
    else:
        print_summary(summary)

    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, schema_path = out_dir / "dataset.csv", out_dir / "schema.json"
    schema = dataset_to_csv(ds, csv_path)
    schema_path.write_text(schema.model_dump_json(indent=2) + "\n", encoding="utf-8")
    write_manifest(out_dir, cfg.config_hash(), cfg.seed, [csv_path, schema_path], VERSION)
    logger.info(f"✅ Cached {ds.name} to {out_dir / 'dataset.csv'}")
    return 0
