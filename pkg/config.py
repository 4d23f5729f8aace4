"""Run configuration.

Precedence, lowest to highest: model defaults < TOML file < environment
(UPLIFT_SEED, UPLIFT_THREADS) < command-line flags. Everything is validated
before any data is touched; unknown keys are rejected.
"""
import hashlib
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from joblib import cpu_count
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dataset import (
    CsvSchema,
    Dataset,
    OutcomeKind,
    PartitionScheme,
    fetch_hillstrom,
    load_csv,
    load_hillstrom,
)
from errors import ConfigError, InputError
from multi_treatment import Scheme
from synthetic import SyntheticSpec, generate
from trees import ForestConfig, nuisance_config

logger = logging.getLogger(__name__)

VERSION = "1.0.0"

DEFAULT_HILLSTROM_CSV = "data/hillstrom.csv"

MODE_ALIASES = {
    "rev": OutcomeKind.REVENUE,
    "revenue": OutcomeKind.REVENUE,
    "conv": OutcomeKind.CONVERSION,
    "conversion": OutcomeKind.CONVERSION,
}
SCHEME_ALIASES = {
    "comparison": Scheme.TREATMENT_COMPARISON,
    "treatment_comparison": Scheme.TREATMENT_COMPARISON,
    "combined": Scheme.COMBINED_TREATMENT,
    "combined_treatment": Scheme.COMBINED_TREATMENT,
}


class DataSource(BaseModel):
    """Exactly one of: a CSV with its column roles, the Hillstrom file, or a synthetic spec."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    path: Optional[Path] = None
    columns: Optional[CsvSchema] = None
    schema_file: Optional[Path] = None
    hillstrom: bool = False
    hillstrom_path: Optional[Path] = None
    download: bool = False
    synthetic: Optional[SyntheticSpec] = None
    outcome_kind: OutcomeKind = OutcomeKind.REVENUE

    @model_validator(mode="after")
    def _one_source(self) -> "DataSource":
        chosen = [self.path is not None, self.hillstrom, self.synthetic is not None]
        if sum(chosen) != 1:
            raise ValueError("choose exactly one data source: path, hillstrom or synthetic")
        if self.path is not None and (self.columns is None) == (self.schema_file is None):
            raise ValueError("a CSV source needs either [data.columns] or schema_file")
        return self

    def resolved_hillstrom_path(self) -> Path:
        return Path(self.hillstrom_path or os.getenv("HILLSTROM_CSV", DEFAULT_HILLSTROM_CSV))

    def csv_schema(self) -> CsvSchema:
        if self.columns is not None:
            return self.columns
        return load_schema_file(self.schema_file)


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    data: DataSource
    scheme: Scheme = Scheme.TREATMENT_COMPARISON
    modes: List[OutcomeKind] = Field(default_factory=lambda: [OutcomeKind.REVENUE], min_length=1)
    forest: ForestConfig = Field(default_factory=ForestConfig)
    nuisance: Optional[ForestConfig] = None
    partition: PartitionScheme = Field(default_factory=PartitionScheme)
    output_dir: Path = Path("out")
    threads: Optional[int] = Field(default=None, gt=0)

    @property
    def seed(self) -> int:
        return self.forest.seed

    def resolved_nuisance(self) -> ForestConfig:
        return self.nuisance or nuisance_config(seed=self.forest.seed)

    def n_jobs(self) -> int:
        """Worker count: --threads/UPLIFT_THREADS, else every available core."""
        return self.threads or cpu_count()

    def config_hash(self) -> str:
        """SHA-256 of the canonical resolved config; thread count and output location excluded."""
        document = self.model_dump(mode="json", exclude={"threads", "output_dir"})
        document["nuisance"] = self.resolved_nuisance().model_dump(mode="json")
        canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def parse_modes(value) -> List[OutcomeKind]:
    """Accept "rev,conv" style strings or lists of mode names."""
    items = value.split(",") if isinstance(value, str) else list(value)
    names = [item.value if isinstance(item, OutcomeKind) else str(item).strip().lower() for item in items]
    try:
        return [MODE_ALIASES[name] for name in names if name]
    except KeyError as e:
        raise ConfigError(f"unknown outcome mode {e.args[0]!r}; use rev or conv") from e


def parse_scheme(value: str) -> Scheme:
    try:
        return SCHEME_ALIASES[value.strip().lower()]
    except KeyError as e:
        raise ConfigError(f"unknown scheme {value!r}; use comparison or combined") from e


def load_schema_file(path) -> CsvSchema:
    """Column roles from a JSON file such as the schema.json written by prepare."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"schema file not found: {path}")
    try:
        return CsvSchema.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigError(f"invalid schema file {path}: {e}") from e


def _deep_merge(base: Dict[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _env_int(env: Mapping[str, str], name: str) -> Optional[int]:
    raw = env.get(name)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from e


def seed_overrides(seed: int, raw: Mapping[str, Any]) -> Dict[str, Any]:
    """One seed drives forest, nuisance and partition randomness."""
    update: Dict[str, Any] = {"forest": {"seed": seed}, "partition": {"seed": seed}}
    if raw.get("nuisance") is not None:
        update["nuisance"] = {"seed": seed}
    return update


def env_overrides(env: Mapping[str, str], raw: Mapping[str, Any]) -> Dict[str, Any]:
    update: Dict[str, Any] = {}
    seed = _env_int(env, "UPLIFT_SEED")
    if seed is not None:
        update = _deep_merge(update, seed_overrides(seed, raw))
    threads = _env_int(env, "UPLIFT_THREADS")
    if threads is not None:
        update["threads"] = threads
    return update


def load_config(
    path=None,
    flags: Optional[Mapping[str, Any]] = None,
    env: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Resolve a RunConfig from a TOML file, the environment and flag overrides.

    Args:
        path: TOML file, or None for defaults only
        flags: Nested overrides from the command line
        env: Environment mapping, os.environ by default

    Returns:
        Validated RunConfig
    """
    env = os.environ if env is None else env
    raw: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e

    raw = _deep_merge(raw, env_overrides(env, raw))
    flags = dict(flags or {})
    seed = flags.pop("seed", None)
    data = flags.pop("data", None)
    if seed is not None:
        raw = _deep_merge(raw, seed_overrides(seed, raw))
    raw = _deep_merge(raw, flags)
    if data is not None:
        # a source given on the command line replaces the file's source
        raw["data"] = data

    if "modes" in raw:
        raw["modes"] = parse_modes(raw["modes"])
    if isinstance(raw.get("scheme"), str):
        raw["scheme"] = parse_scheme(raw["scheme"])
    if "data" not in raw:
        raise ConfigError("no data source given; use --data, --hillstrom, --synthetic or a [data] section")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_source(source: DataSource) -> Dataset:
    """Materialize the configured data source."""
    if source.synthetic is not None:
        ds, _ = generate(source.synthetic)
        return ds
    if source.hillstrom:
        path = source.resolved_hillstrom_path()
        if not path.is_file() and source.download:
            fetch_hillstrom(path)
        return load_hillstrom(path, source.outcome_kind)
    return load_csv(source.path, source.csv_schema())


def config_from_args(args) -> RunConfig:
    """RunConfig for a parsed command line; flags absent from a subcommand are skipped."""
    flags: Dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        flags["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        flags["threads"] = args.threads
    if getattr(args, "out", None) is not None:
        flags["output_dir"] = args.out
    if getattr(args, "scheme", None) is not None:
        flags["scheme"] = args.scheme
    if getattr(args, "modes", None) is not None:
        flags["modes"] = args.modes
    if getattr(args, "trees", None) is not None:
        flags["forest"] = {"num_trees": args.trees}
    if getattr(args, "partitions", None) is not None:
        flags["partition"] = {"num_partitions": args.partitions}

    if getattr(args, "data", None) is not None:
        flags["data"] = {"path": args.data, "schema_file": args.schema}
    elif getattr(args, "hillstrom", False):
        flags["data"] = {"hillstrom": True, "download": getattr(args, "download", False)}
    elif getattr(args, "synthetic", False):
        flags["data"] = {"synthetic": {}}
    return load_config(getattr(args, "config", None), flags)
