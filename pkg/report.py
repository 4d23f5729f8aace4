"""Render an UpliftReport to report.json, CSV tables and a run manifest.

JSON keeps full precision. CSV tables round currency to 2 decimals and the
mode comparison to 1 decimal, matching the printed evaluation tables.
"""
import json
import logging
import platform
import re
from pathlib import Path
from typing import Dict, List, Optional

import joblib
import numpy as np
import pandas as pd
import pydantic

from dataset import OutcomeKind
from evaluation import ArmModeResult, EvaluationBoard, IcrCurve, IteHistogram, UpliftReport

logger = logging.getLogger(__name__)

UNDEFINED = "n/a"


def slug(label: str) -> str:
    """File-name friendly form of an arm label ("Mens E-Mail" -> "mens_e_mail")."""
    return re.sub(r"[^0-9a-zA-Z]+", "_", label).strip("_").lower() or "arm"


def _suffix(mode: OutcomeKind) -> str:
    return "" if OutcomeKind(mode) == OutcomeKind.REVENUE else "_conv"


def _money(value: Optional[float]) -> str:
    return UNDEFINED if value is None else f"{value:.2f}"


def _percent(value: Optional[float]) -> str:
    return UNDEFINED if value is None else f"{value:+.1f}"


def decile_frame(board: EvaluationBoard, curve: Optional[IcrCurve], arm_label: str) -> pd.DataFrame:
    """Evaluation board of one arm and partition, one row per decile."""
    records = []
    for i, row in enumerate(board.rows):
        records.append({
            "Dec.": row.decile,
            f"Records {arm_label}": row.records_t,
            "Records Ctrl": row.records_c,
            f"Purchasers {arm_label}": row.purchasers_t,
            "Purchasers Ctrl": row.purchasers_c,
            f"Revenue Sum {arm_label}": _money(row.revenue_sum_t),
            "Revenue Sum Ctrl": _money(row.revenue_sum_c),
            f"Revenue Per Person {arm_label}": _money(row.revenue_pp_t),
            "Revenue Per Person Ctrl": _money(row.revenue_pp_c),
            "Delta Revenue Per Person": _money(row.delta_pp),
            "Delta Revenue Sum": _money(row.delta_sum),
            "ICR": _money(curve.values[i] if curve is not None else None),
        })
    return pd.DataFrame(records)


def comparison_frame(report: UpliftReport) -> pd.DataFrame:
    """Median ICR per mode, their % difference and the top-decile ICR means per arm."""
    settings = report.metadata.settings
    rev_key, conv_key = OutcomeKind.REVENUE.value, OutcomeKind.CONVERSION.value
    top_key = rev_key if rev_key in settings else next(iter(settings))
    records = []
    for arm in report.arms:
        record = {"Treatment": arm.label}
        for key in (rev_key, conv_key):
            if key in arm.results:
                record[settings[key]] = _money(arm.results[key].median_icr)
        if arm.comparison is not None:
            record["% Diff."] = _percent(arm.comparison.pct_diff)
        top = arm.results[top_key]
        for d, value in enumerate(top.top_deciles, start=1):
            record[f"Dec. {d}"] = _money(value)
        record["Mean"] = _money(top.top3_mean)
        records.append(record)
    return pd.DataFrame(records)


def histogram_frame(hist: IteHistogram) -> pd.DataFrame:
    return pd.DataFrame({
        "bin_left": hist.edges[:-1],
        "bin_right": hist.edges[1:],
        "count": hist.counts,
    })


def importance_frame(names: List[str], result: ArmModeResult) -> pd.DataFrame:
    """Variables ordered by scaled importance, most important first."""
    frame = pd.DataFrame({
        "variable": names,
        "raw": result.raw_importance,
        "scaled": result.scaled_importance,
    })
    return frame.sort_values(["scaled", "variable"], ascending=[False, True], kind="mergesort").reset_index(drop=True)


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def package_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "joblib": joblib.__version__,
        "pydantic": pydantic.VERSION,
    }


def write_manifest(out_dir, config_hash: str, seed: int, files: List[Path], tool_version: str) -> Path:
    """Record what produced the outputs so a rerun can be checked byte for byte."""
    out_dir = Path(out_dir)
    manifest = {
        "tool_version": tool_version,
        "config_hash": config_hash,
        "seed": seed,
        "versions": package_versions(),
        "files": sorted(Path(f).name for f in files),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_report(report: UpliftReport, out_dir) -> List[Path]:
    """Write report.json and every CSV table; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "report.json"
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    written.append(path)

    names = report.metadata.covariate_names
    for arm in report.arms:
        arm_slug = slug(arm.label)
        for key, result in arm.results.items():
            suffix = _suffix(key)
            for board, curve in zip(result.boards, result.curves):
                frame = decile_frame(board, curve, arm.label)
                written.append(_write_csv(frame, out_dir / f"table1_{arm_slug}_{board.partition}{suffix}.csv"))
            written.append(_write_csv(histogram_frame(result.ite_histogram), out_dir / f"ite_hist_{arm_slug}{suffix}.csv"))
            written.append(_write_csv(importance_frame(names, result), out_dir / f"importance_{arm_slug}{suffix}.csv"))

    written.append(_write_csv(comparison_frame(report), out_dir / "table2.csv"))
    logger.info(f"📄 Wrote {len(written)} report files to {out_dir}")
    return written
