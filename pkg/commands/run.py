"""run: the partitioned experiment and its report files."""
import logging

from config import VERSION, config_from_args, load_source
from evaluation import run_experiment
from report import write_manifest, write_report

logger = logging.getLogger(__name__)


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    ds = load_source(cfg.data)
    report = run_experiment(
        ds,
        cfg.scheme,
        cfg.modes,
        cfg.forest,
        cfg.partition,
        nuisance_cfg=cfg.resolved_nuisance(),
        n_jobs=cfg.n_jobs(),
    )
    files = write_report(report, cfg.output_dir)
    write_manifest(cfg.output_dir, cfg.config_hash(), cfg.seed, files, VERSION)

    for arm in report.arms:
        medians = ", ".join(
            f"{result.setting} {result.median_icr:.2f}" for result in arm.results.values()
        )
        print(f"📈 {arm.label}: median ICR {medians}")
    for mode, best in report.best_arm.items():
        if best is not None:
            label = next(a.label for a in report.arms if a.arm == best)
            print(f"🏆 best arm ({mode}): {label}")
    print(f"📄 Report written to {cfg.output_dir}")
    return 0
