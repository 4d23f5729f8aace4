"""Campaign datasets: representation, CSV ingestion, Hillstrom loader and partitions.

Input data is assumed to come from a randomized campaign: treatment assignment
independent of the potential outcomes, every unit with a strictly positive
chance of each arm, and no interference between units. `balance_check` is the
cheap sanity check on the first assumption; the rest cannot be tested from data.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import httpx
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import (
    CompatibilityError,
    CompositionError,
    InputError,
    LabelingError,
    ParseError,
    PreconditionError,
    SchemaError,
    SizingError,
)

logger = logging.getLogger(__name__)

HILLSTROM_ROWS = 64000
HILLSTROM_URL = (
    "http://www.minethatdata.com/Kevin_Hillstrom_MineThatData_E-MailAnalytics_DataMiningChallenge_2008.03.20.csv"
)
HILLSTROM_COLUMNS = [
    "recency", "history_segment", "history", "mens", "womens", "zip_code",
    "newbie", "channel", "segment", "visit", "conversion", "spend",
]

ANY_TREATMENT_LABEL = "any-treatment"


class OutcomeKind(str, Enum):
    """Outcome axis of the treatment/outcome matrix."""
    REVENUE = "revenue"
    CONVERSION = "conversion"


def setting_label(num_arms: int, kind: OutcomeKind) -> str:
    """Name the run setting: ST-Conv, ST-Rev, MT-Conv or MT-Rev."""
    prefix = "MT" if num_arms > 1 else "ST"
    suffix = "Rev" if OutcomeKind(kind) == OutcomeKind.REVENUE else "Conv"
    return f"{prefix}-{suffix}"


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_conversion(values: np.ndarray, what: str) -> None:
    bad = np.flatnonzero((values != 0.0) & (values != 1.0))
    if bad.size:
        raise PreconditionError(
            f"{what}: conversion outcomes must be 0 or 1 (row {int(bad[0])} is {values[bad[0]]!r})"
        )


@dataclass(frozen=True)
class Dataset:
    """Covariates, treatment codes and outcomes of one campaign.

    Treatment code 0 is the control; codes 1..K are the arms. `extra_outcomes`
    holds the other outcome kinds when the source provides them (Hillstrom has
    both spend and conversion).
    """
    unit_ids: np.ndarray
    covariates: np.ndarray
    covariate_names: Tuple[str, ...]
    treatment: np.ndarray
    outcome: np.ndarray
    outcome_kind: OutcomeKind
    arm_names: Mapping[int, str]
    extra_outcomes: Mapping[OutcomeKind, np.ndarray] = field(default_factory=dict)
    name: str = "dataset"

    def __post_init__(self):
        covariates = _frozen(self.covariates, np.float64)
        if covariates.ndim != 2:
            raise SchemaError("covariates must be a 2-d matrix")
        n = covariates.shape[0]
        # frozen dataclass: normalize fields in place
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "unit_ids", _frozen(self.unit_ids, np.int64))
        object.__setattr__(self, "treatment", _frozen(self.treatment, np.int64))
        object.__setattr__(self, "outcome", _frozen(self.outcome, np.float64))
        object.__setattr__(self, "outcome_kind", OutcomeKind(self.outcome_kind))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "arm_names", {int(k): str(v) for k, v in sorted(self.arm_names.items())})
        object.__setattr__(self, "extra_outcomes", {
            OutcomeKind(k): _frozen(v, np.float64) for k, v in self.extra_outcomes.items()
        })

        if len(self.covariate_names) != covariates.shape[1]:
            raise SchemaError("covariate_names length does not match covariate columns")
        for label, arr in [("unit_ids", self.unit_ids), ("treatment", self.treatment), ("outcome", self.outcome)]:
            if arr.shape != (n,):
                raise SchemaError(f"{label} length {arr.shape[0]} does not match {n} covariate rows")
        for kind, arr in self.extra_outcomes.items():
            if arr.shape != (n,):
                raise SchemaError(f"{kind.value} outcome length does not match {n} rows")
        if 0 not in self.arm_names:
            raise LabelingError("arm_names must contain the control code 0")
        unknown = set(np.unique(self.treatment).tolist()) - set(self.arm_names)
        if unknown:
            raise LabelingError(f"treatment codes without arm names: {sorted(unknown)}")
        if not np.all(np.isfinite(covariates)) or not np.all(np.isfinite(self.outcome)):
            raise ParseError("dataset contains missing or non-finite values")
        if self.outcome_kind == OutcomeKind.CONVERSION:
            _check_conversion(self.outcome, self.name)
        if OutcomeKind.CONVERSION in self.extra_outcomes:
            _check_conversion(self.extra_outcomes[OutcomeKind.CONVERSION], self.name)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def num_arms(self) -> int:
        """K, the number of non-control arms."""
        return max(self.arm_names)

    @property
    def control_label(self) -> str:
        return self.arm_names[0]

    def arm_counts(self) -> Dict[int, int]:
        return {code: int(np.sum(self.treatment == code)) for code in self.arm_names}

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset, keeping the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            unit_ids=self.unit_ids[rows],
            covariates=self.covariates[rows],
            covariate_names=self.covariate_names,
            treatment=self.treatment[rows],
            outcome=self.outcome[rows],
            outcome_kind=self.outcome_kind,
            arm_names=self.arm_names,
            extra_outcomes={k: v[rows] for k, v in self.extra_outcomes.items()},
            name=self.name,
        )

    def replace(self, **changes) -> "Dataset":
        fields = {
            "unit_ids": self.unit_ids,
            "covariates": self.covariates,
            "covariate_names": self.covariate_names,
            "treatment": self.treatment,
            "outcome": self.outcome,
            "outcome_kind": self.outcome_kind,
            "arm_names": self.arm_names,
            "extra_outcomes": self.extra_outcomes,
            "name": self.name,
        }
        fields.update(changes)
        return Dataset(**fields)

    def outcome_of(self, kind: OutcomeKind) -> Optional[np.ndarray]:
        """Outcome column of the given kind, if the dataset carries it."""
        kind = OutcomeKind(kind)
        if kind == self.outcome_kind:
            return self.outcome
        return self.extra_outcomes.get(kind)

    def evaluation_outcome(self) -> np.ndarray:
        """Revenue when available, otherwise the primary outcome."""
        revenue = self.outcome_of(OutcomeKind.REVENUE)
        return revenue if revenue is not None else self.outcome


def select_outcome(ds: Dataset, kind: OutcomeKind) -> Dataset:
    """Return `ds` with the outcome of the given kind as its primary outcome."""
    kind = OutcomeKind(kind)
    if ds.outcome_kind == kind:
        return ds
    if kind in ds.extra_outcomes:
        extras = dict(ds.extra_outcomes)
        new_outcome = extras.pop(kind)
        extras[ds.outcome_kind] = ds.outcome
        return ds.replace(outcome=new_outcome, outcome_kind=kind, extra_outcomes=extras)
    if kind == OutcomeKind.CONVERSION:
        if np.all((ds.outcome == 0.0) | (ds.outcome == 1.0)):
            return ds.replace(outcome_kind=kind)
        raise PreconditionError(
            f"{ds.name}: conversion mode requires 0/1 outcomes but the {ds.outcome_kind.value} outcome is not binary"
        )
    raise PreconditionError(f"{ds.name}: no {kind.value} outcome column available")


# --- CSV ingestion -----------------------------------------------------------

class CsvSchema(BaseModel):
    """Column roles of a campaign CSV."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    treatment_column: str
    control_label: str
    outcome_column: str
    outcome_kind: OutcomeKind = OutcomeKind.REVENUE
    covariates: List[str] = Field(min_length=1)
    categorical: List[str] = Field(default_factory=list)
    unit_id_column: Optional[str] = None
    arms: Optional[List[str]] = None
    extra_outcomes: Dict[OutcomeKind, str] = Field(default_factory=dict)
    drop_constant_columns: bool = False

    @model_validator(mode="after")
    def _check_roles(self) -> "CsvSchema":
        not_covariates = {self.treatment_column, self.outcome_column, *self.extra_outcomes.values()}
        if self.unit_id_column:
            not_covariates.add(self.unit_id_column)
        clash = not_covariates & set(self.covariates)
        if clash:
            raise ValueError(f"columns used as covariates and as roles: {sorted(clash)}")
        stray = set(self.categorical) - set(self.covariates)
        if stray:
            raise ValueError(f"categorical columns not listed as covariates: {sorted(stray)}")
        if self.outcome_kind in self.extra_outcomes:
            raise ValueError("extra_outcomes must not repeat the primary outcome kind")
        if self.arms is not None and self.control_label in self.arms:
            raise ValueError("control label must not be listed among arms")
        return self


def _numeric_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce")
    bad = np.flatnonzero(values.isna().to_numpy())
    if bad.size:
        row = int(bad[0])
        cell = str(raw.iloc[row])
        if cell.strip() == "":
            raise ParseError(f"empty value in column '{column}' at row {row}", row=row, column=column)
        raise ParseError(f"non-numeric value '{cell}' in column '{column}' at row {row}", row=row, column=column)
    return values.to_numpy(dtype=np.float64)


def _label_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    values = frame[column].to_numpy(dtype=object)
    empty = np.flatnonzero([str(v).strip() == "" for v in values])
    if empty.size:
        row = int(empty[0])
        raise ParseError(f"empty value in column '{column}' at row {row}", row=row, column=column)
    return values


def _unit_ids(frame: pd.DataFrame, schema: CsvSchema, name: str) -> np.ndarray:
    n = len(frame)
    if not schema.unit_id_column:
        return np.arange(n, dtype=np.int64)
    if schema.unit_id_column not in frame.columns:
        raise SchemaError(f"{name}: missing unit id column '{schema.unit_id_column}'")
    unit_ids = _numeric_column(frame, schema.unit_id_column)
    if np.any(unit_ids != np.round(unit_ids)):
        raise ParseError(f"{name}: unit ids must be integers", column=schema.unit_id_column)
    unit_ids = unit_ids.astype(np.int64)
    if len(np.unique(unit_ids)) != n:
        raise SchemaError(f"{name}: duplicate unit ids")
    return unit_ids


def _encode_covariates(
    frame: pd.DataFrame, schema: CsvSchema, name: str, drop_constant: bool
) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Numeric covariates as-is, categorical ones as "column=level" indicators, sorted by name."""
    missing = [c for c in schema.covariates if c not in frame.columns]
    if missing:
        raise SchemaError(f"{name}: missing columns {missing}")
    # (source column, level, values); numeric columns use level ""
    columns: List[Tuple[str, str, np.ndarray]] = []
    categorical = set(schema.categorical)
    for column in schema.covariates:
        if column in categorical:
            values = _label_column(frame, column).astype(str)
            for level in sorted(set(values.tolist())):
                columns.append((column, level, (values == level).astype(np.float64)))
        else:
            columns.append((column, "", _numeric_column(frame, column)))
    columns.sort(key=lambda item: (item[0], item[1]))

    if drop_constant and len(frame):
        constant = [f"{c}={lvl}" if lvl else c for c, lvl, v in columns if np.ptp(v) == 0]
        if constant:
            logger.info(f"{name}: dropping constant columns {constant}")
        columns = [item for item in columns if np.ptp(item[2]) != 0]
    if not columns:
        raise SchemaError(f"{name}: no covariate columns left")

    names = tuple(f"{c}={lvl}" if lvl else c for c, lvl, _ in columns)
    matrix = np.column_stack([v for _, _, v in columns]) if len(frame) else np.empty((0, len(columns)))
    return names, matrix


def align_covariates(names, X: np.ndarray, expected) -> np.ndarray:
    """Reorder encoded covariates to `expected` column names.

    Category levels absent from `names` become all-zero indicators; any other
    missing column, or a level the model has never seen, is a mismatch.
    """
    index = {column: j for j, column in enumerate(names)}
    expected = list(expected)
    unknown = [column for column in names if column not in expected]
    if unknown:
        raise CompatibilityError(f"columns unknown to the model: {unknown}")
    missing = [column for column in expected if column not in index and "=" not in column]
    if missing:
        raise CompatibilityError(f"columns required by the model are missing: {missing}")
    out = np.zeros((X.shape[0], len(expected)))
    for j, column in enumerate(expected):
        if column in index:
            out[:, j] = X[:, index[column]]
    return out


def _frame_to_dataset(frame: pd.DataFrame, schema: CsvSchema, name: str) -> Dataset:
    needed = [schema.treatment_column, schema.outcome_column, *schema.covariates, *schema.extra_outcomes.values()]
    if schema.unit_id_column:
        needed.append(schema.unit_id_column)
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise SchemaError(f"{name}: missing columns {missing}")

    labels = _label_column(frame, schema.treatment_column)
    seen = sorted(set(labels.tolist()) - {schema.control_label})
    if schema.arms is not None:
        unseen = [label for label in seen if label not in schema.arms]
        if unseen:
            raise LabelingError(f"{name}: unknown treatment labels {unseen}")
        arm_order = list(schema.arms)
    else:
        arm_order = seen
    codes = {schema.control_label: 0}
    codes.update({label: i for i, label in enumerate(arm_order, start=1)})
    treatment = np.array([codes[label] for label in labels], dtype=np.int64)
    if not np.any(treatment == 0):
        raise LabelingError(
            f"{name}: no units carry the control label '{schema.control_label}'; labels found: {seen}"
        )

    outcome = _numeric_column(frame, schema.outcome_column)
    if schema.outcome_kind == OutcomeKind.CONVERSION:
        _check_conversion(outcome, name)
    extras = {kind: _numeric_column(frame, column) for kind, column in schema.extra_outcomes.items()}

    covariate_names, covariates = _encode_covariates(frame, schema, name, schema.drop_constant_columns)
    arm_names = {code: label for label, code in codes.items()}
    return Dataset(
        unit_ids=_unit_ids(frame, schema, name),
        covariates=covariates,
        covariate_names=covariate_names,
        treatment=treatment,
        outcome=outcome,
        outcome_kind=schema.outcome_kind,
        arm_names=arm_names,
        extra_outcomes=extras,
        name=name,
    )


def _read_frame(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Load a campaign CSV according to `schema`.

    Args:
        path: CSV file with a header row
        schema: Column roles; the control label must be given explicitly

    Returns:
        Dataset with arms coded 0..K and categorical covariates one-hot encoded
    """
    frame = _read_frame(path)
    ds = _frame_to_dataset(frame, schema, name=Path(path).stem)
    logger.info(f"✅ Loaded {ds.name}: n={ds.n}, p={ds.p}, K={ds.num_arms}")
    return ds


def _drop_untrained_sources(names, X: np.ndarray, expected) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Drop encoded columns whose source column the model never kept (constant at training)."""
    kept_sources = {column.split("=", 1)[0] for column in expected}
    keep = [j for j, column in enumerate(names) if column.split("=", 1)[0] in kept_sources]
    return tuple(names[j] for j in keep), X[:, keep]


def load_features(path, schema: CsvSchema, expected_names=None) -> Tuple[np.ndarray, np.ndarray, Tuple[str, ...]]:
    """Unit ids and encoded covariates of a file to score.

    Treatment and outcome columns are not needed. With `expected_names` the
    matrix is aligned to a fitted model's columns.
    """
    frame = _read_frame(path)
    name = Path(path).stem
    if expected_names is not None:
        absent = [c for c in schema.covariates if c not in frame.columns]
        if absent:
            raise CompatibilityError(f"{name}: columns required by the model are missing: {absent}")
    names, X = _encode_covariates(frame, schema, name, drop_constant=False)
    if expected_names is not None and schema.drop_constant_columns:
        names, X = _drop_untrained_sources(names, X, expected_names)
    if expected_names is not None:
        X = align_covariates(names, X, expected_names)
        names = tuple(expected_names)
    return _unit_ids(frame, schema, name), X, names


def hillstrom_schema(outcome_kind: OutcomeKind) -> CsvSchema:
    outcome_kind = OutcomeKind(outcome_kind)
    columns = {OutcomeKind.REVENUE: "spend", OutcomeKind.CONVERSION: "conversion"}
    other = OutcomeKind.CONVERSION if outcome_kind == OutcomeKind.REVENUE else OutcomeKind.REVENUE
    return CsvSchema(
        treatment_column="segment",
        control_label="No E-Mail",
        arms=["Mens E-Mail", "Womens E-Mail"],
        outcome_column=columns[outcome_kind],
        outcome_kind=outcome_kind,
        extra_outcomes={other: columns[other]},
        covariates=["recency", "history_segment", "history", "mens", "womens", "zip_code", "newbie", "channel"],
        categorical=["history_segment", "zip_code", "channel"],
    )


def load_hillstrom(path, outcome_kind: OutcomeKind = OutcomeKind.REVENUE) -> Dataset:
    """Load the public Hillstrom e-mail campaign file.

    visit, conversion and spend are never covariates. History segment labels
    lose their "1) " style ordering prefixes before encoding.
    """
    frame = _read_frame(path)
    missing = [c for c in HILLSTROM_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"not a Hillstrom file, missing columns {missing}")
    if len(frame) != HILLSTROM_ROWS:
        logger.warning(f"⚠️ Hillstrom file has {len(frame)} rows, expected {HILLSTROM_ROWS}")
    frame = frame.copy()
    frame["history_segment"] = frame["history_segment"].str.replace(r"^\s*\d+\)\s*", "", regex=True)
    ds = _frame_to_dataset(frame, hillstrom_schema(outcome_kind), name="hillstrom")
    logger.info(f"✅ Loaded hillstrom: n={ds.n}, p={ds.p}, arms={ds.arm_counts()}")
    return ds


def fetch_hillstrom(dest, url: Optional[str] = None, timeout: float = 60.0) -> Path:
    """Download the Hillstrom CSV to `dest` unless it is already there."""
    dest = Path(dest)
    if dest.is_file():
        return dest
    url = url or os.getenv("HILLSTROM_URL") or HILLSTROM_URL
    dest.parent.mkdir(parents=True, exist_ok=True)
    logger.info(f"Downloading Hillstrom data from {url}")
    try:
        with httpx.stream("GET", url, timeout=timeout, follow_redirects=True) as response:
            response.raise_for_status()
            tmp = dest.with_suffix(dest.suffix + ".part")
            with open(tmp, "wb") as fh:
                for chunk in response.iter_bytes():
                    fh.write(chunk)
        tmp.replace(dest)
    except httpx.HTTPError as e:
        raise InputError(f"failed to download Hillstrom data: {e}") from e
    return dest


def dataset_to_csv(ds: Dataset, path) -> CsvSchema:
    """Write `ds` in the canonical CSV layout and return the schema that reloads it."""
    data = {"unit_id": ds.unit_ids, "arm": [ds.arm_names[int(c)] for c in ds.treatment]}
    data[ds.outcome_kind.value] = ds.outcome
    for kind, values in sorted(ds.extra_outcomes.items(), key=lambda kv: kv[0].value):
        data[kind.value] = values
    for j, column in enumerate(ds.covariate_names):
        data[column] = ds.covariates[:, j]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(data).to_csv(path, index=False, lineterminator="\n")
    return CsvSchema(
        treatment_column="arm",
        control_label=ds.control_label,
        arms=[ds.arm_names[c] for c in sorted(ds.arm_names) if c != 0],
        outcome_column=ds.outcome_kind.value,
        outcome_kind=ds.outcome_kind,
        extra_outcomes={kind: kind.value for kind in ds.extra_outcomes},
        covariates=list(ds.covariate_names),
        unit_id_column="unit_id",
    )


# --- Audits --------------------------------------------------------------------

class DatasetSummary(BaseModel):
    """Descriptive audit of a campaign dataset."""
    name: str
    n: int
    p: int
    outcome_kind: OutcomeKind
    arm_counts: Dict[str, int]
    arm_purchasers: Dict[str, int]
    arm_revenue: Dict[str, float]
    treated_purchasers: int
    treated_revenue: float
    control_purchasers: int
    control_revenue: float


def describe(ds: Dataset) -> DatasetSummary:
    """Counts, purchasers and revenue sums per arm and for treated vs control."""
    revenue = ds.outcome_of(OutcomeKind.REVENUE)
    conversion = ds.outcome_of(OutcomeKind.CONVERSION)
    if revenue is not None:
        purchased = revenue > 0
    else:
        purchased = conversion > 0
    money = revenue if revenue is not None else np.zeros(ds.n)
    treated = ds.treatment > 0

    arm_counts, arm_purchasers, arm_revenue = {}, {}, {}
    for code, label in ds.arm_names.items():
        mask = ds.treatment == code
        arm_counts[label] = int(mask.sum())
        arm_purchasers[label] = int(purchased[mask].sum())
        arm_revenue[label] = float(money[mask].sum())
    return DatasetSummary(
        name=ds.name,
        n=ds.n,
        p=ds.p,
        outcome_kind=ds.outcome_kind,
        arm_counts=arm_counts,
        arm_purchasers=arm_purchasers,
        arm_revenue=arm_revenue,
        treated_purchasers=int(purchased[treated].sum()),
        treated_revenue=float(money[treated].sum()),
        control_purchasers=int(purchased[~treated].sum()),
        control_revenue=float(money[~treated].sum()),
    )


def balance_check(ds: Dataset, threshold: float = 0.1) -> Dict[str, Dict[str, float]]:
    """Standardized mean difference of each covariate, every arm against control.

    Under randomized assignment these stay small; values above `threshold`
    are logged as warnings.
    """
    control = ds.covariates[ds.treatment == 0]
    result: Dict[str, Dict[str, float]] = {}
    for code, label in ds.arm_names.items():
        if code == 0:
            continue
        arm = ds.covariates[ds.treatment == code]
        if len(arm) < 2 or len(control) < 2:
            continue
        pooled = np.sqrt((arm.var(axis=0, ddof=1) + control.var(axis=0, ddof=1)) / 2.0)
        diff = arm.mean(axis=0) - control.mean(axis=0)
        smd = np.divide(diff, pooled, out=np.zeros_like(diff), where=pooled > 0)
        result[label] = {name: float(v) for name, v in zip(ds.covariate_names, smd)}
        worst = int(np.argmax(np.abs(smd)))
        if abs(smd[worst]) > threshold:
            logger.warning(
                f"⚠️ {ds.name}: arm '{label}' imbalanced on {ds.covariate_names[worst]} (SMD={smd[worst]:.3f})"
            )
    return result


# --- Partitions and treatment views ----------------------------------------------

class PartitionScheme(BaseModel):
    """Disjoint partitions, each split into a train and a test fold."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    num_partitions: int = Field(default=5, gt=0)
    train_fraction: float = Field(default=0.7, gt=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0)


def partition(ds: Dataset, scheme: PartitionScheme) -> List[Tuple[Dataset, Dataset]]:
    """Shuffle units, cut them into near-equal partitions and split each into train/test.

    The first n mod num_partitions partitions receive one extra unit.
    """
    k = scheme.num_partitions
    if ds.n < k * 10:
        raise SizingError(f"{ds.name}: {ds.n} units are too few for {k} partitions (need {k * 10})")
    order = np.random.default_rng(scheme.seed).permutation(ds.n)
    folds = []
    for j, part in enumerate(np.array_split(order, k)):
        shuffled = np.random.default_rng([scheme.seed, j]).permutation(part)
        n_train = int(math.floor(scheme.train_fraction * len(part) + 0.5))
        train_rows = np.sort(shuffled[:n_train])
        test_rows = np.sort(shuffled[n_train:])
        folds.append((ds.take(train_rows), ds.take(test_rows)))
    return folds


def subset_by_arm(ds: Dataset, arm: int) -> Dataset:
    """Units of one arm plus the control, with the arm recoded to 1."""
    if arm not in ds.arm_names or arm == 0:
        raise CompositionError(f"{ds.name}: {arm} is not a treatment arm code")
    if ds.num_arms == 1 and set(ds.arm_names) == {0, 1}:
        if not (np.any(ds.treatment == 0) and np.any(ds.treatment == 1)):
            raise CompositionError(f"{ds.name}: arm {arm} subset lacks treated or control units")
        return ds
    rows = np.flatnonzero((ds.treatment == 0) | (ds.treatment == arm))
    sub = ds.take(rows)
    codes = (sub.treatment == arm).astype(np.int64)
    if not (np.any(codes == 0) and np.any(codes == 1)):
        raise CompositionError(f"{ds.name}: arm {arm} subset lacks treated or control units")
    return sub.replace(treatment=codes, arm_names={0: ds.control_label, 1: ds.arm_names[arm]})


def binarize_treatments(ds: Dataset) -> Dataset:
    """Collapse all arms into a single treated indicator."""
    if ds.num_arms < 1:
        raise CompositionError(f"{ds.name}: no treatment arms to combine")
    if set(ds.arm_names) == {0, 1}:
        return ds
    codes = (ds.treatment >= 1).astype(np.int64)
    return ds.replace(treatment=codes, arm_names={0: ds.control_label, 1: ANY_TREATMENT_LABEL})
