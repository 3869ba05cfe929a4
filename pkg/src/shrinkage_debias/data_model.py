"""Domain types, CSV ingestion and calibration-artifact serialization.

Tabular inputs are UTF-8 CSV with a header row. Unknown columns are ignored,
but every numeric cell must parse to a finite float: NaN/Inf is rejected at
ingestion so the numerical code downstream can assume finite inputs.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import ParseError, ValidationError

SCHEMA_VERSION = 1
ARTIFACT_FIELDS = ("schema_version", "k_hat", "m_hat", "sigma2_hat", "n_cal", "sigma_source")
SIGMA_SOURCES = ("calibration", "training")
METHODS = ("naive", "lcc", "tweedie", "ppi", "oracle")
ESTIMATORS = ("diff_in_means", "iptw", "ppi_mean_diff")

SigmaSource = Literal["calibration", "training"]


@dataclass(frozen=True)
class CalibrationPair:
    y_true: float
    y_pred: float

    def __post_init__(self):
        if not (math.isfinite(self.y_true) and math.isfinite(self.y_pred)):
            raise ValidationError("calibration pair must be finite")


@dataclass(frozen=True)
class CalibrationArtifact:
    """Upstream product handed to every downstream trial.

    ``k_hat`` and ``m_hat`` are the slope and intercept of predictions
    regressed on truth; ``sigma2_hat`` is the residual variance.
    """

    k_hat: float
    m_hat: float
    sigma2_hat: float
    n_cal: int
    sigma_source: SigmaSource = "calibration"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        for name in ("k_hat", "m_hat", "sigma2_hat"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValidationError(f"{name} must be a finite number, got {value!r}")
        if not self.k_hat > 0:
            raise ValidationError(f"k_hat must be > 0 (corrections divide by it), got {self.k_hat}")
        if self.sigma2_hat < 0:
            raise ValidationError(f"sigma2_hat must be >= 0, got {self.sigma2_hat}")
        if isinstance(self.n_cal, bool) or not isinstance(self.n_cal, int) or self.n_cal < 3:
            raise ValidationError(f"n_cal must be an integer >= 3, got {self.n_cal!r}")
        if self.sigma_source not in SIGMA_SOURCES:
            raise ValidationError(f"sigma_source must be one of {SIGMA_SOURCES}, got {self.sigma_source!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema_version {self.schema_version!r} (expected {SCHEMA_VERSION})")


@dataclass(frozen=True)
class TrialRecord:
    unit_id: str
    y_pred: float
    treatment: int
    confounder: float | None = None
    propensity: float | None = None

    def __post_init__(self):
        if self.treatment not in (0, 1):
            raise ValidationError(f"unit {self.unit_id!r}: treatment must be 0 or 1, got {self.treatment!r}")
        if not math.isfinite(self.y_pred):
            raise ValidationError(f"unit {self.unit_id!r}: y_pred must be finite")
        if self.confounder is not None and not math.isfinite(self.confounder):
            raise ValidationError(f"unit {self.unit_id!r}: confounder must be finite")
        if self.propensity is not None and not 0.0 < self.propensity < 1.0:
            raise ValidationError(f"unit {self.unit_id!r}: propensity must lie in (0, 1), got {self.propensity}")


@dataclass(frozen=True)
class TrialData:
    """One downstream trial. Arm sizes are checked by the ATE operations, not here."""

    records: tuple[TrialRecord, ...]
    trial_id: str = "trial"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        index = {}
        for i, rec in enumerate(self.records):
            if rec.unit_id in index:
                raise ValidationError(f"duplicate unit_id {rec.unit_id!r}")
            index[rec.unit_id] = i
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.records)

    @classmethod
    def from_arrays(cls, y_pred, treatment, unit_ids=None, confounder=None, propensity=None, trial_id="trial"):
        y_pred = np.asarray(y_pred, dtype=float)
        treatment = np.asarray(treatment)
        if unit_ids is None:
            unit_ids = [str(i) for i in range(len(y_pred))]
        records = []
        for i in range(len(y_pred)):
            records.append(
                TrialRecord(
                    unit_id=str(unit_ids[i]),
                    y_pred=float(y_pred[i]),
                    treatment=int(treatment[i]),
                    confounder=None if confounder is None else float(confounder[i]),
                    propensity=None if propensity is None else float(propensity[i]),
                )
            )
        return cls(tuple(records), trial_id)

    def position(self, unit_id: str) -> int:
        try:
            return self._index[unit_id]
        except KeyError:
            raise ValidationError(f"unknown unit_id {unit_id!r}") from None

    @property
    def unit_ids(self) -> list[str]:
        return [r.unit_id for r in self.records]

    @property
    def y_pred(self) -> np.ndarray:
        return np.array([r.y_pred for r in self.records], dtype=float)

    @property
    def treatment(self) -> np.ndarray:
        return np.array([r.treatment for r in self.records], dtype=int)

    def _optional(self, name: str) -> np.ndarray | None:
        values = [getattr(r, name) for r in self.records]
        if any(v is None for v in values):
            return None
        return np.array(values, dtype=float)

    @property
    def confounder(self) -> np.ndarray | None:
        return self._optional("confounder")

    @property
    def propensity(self) -> np.ndarray | None:
        return self._optional("propensity")


@dataclass(frozen=True)
class AteReport:
    method: str
    tau_hat: float
    n_treated: int
    n_control: int
    estimator: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        if self.estimator not in ESTIMATORS:
            raise ValidationError(f"unknown estimator {self.estimator!r}")
        if self.n_treated < 1 or self.n_control < 1:
            raise ValidationError("both arms need at least one unit")


# --- CSV ingestion --------------------------------------------------------


def _read_csv(path, required: Sequence[str]) -> tuple[list[str], list[dict[str, str]]]:
    if not os.path.isfile(path):
        raise ValidationError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        if not header:
            raise ParseError(f"{path}: empty file or missing header")
        reader.fieldnames = header
        for name in required:
            if name not in header:
                raise ParseError(f"{path}: missing required column", column=name)
        rows = []
        for row in reader:
            if None in row:
                raise ParseError(f"{path}: too many fields", row=len(rows) + 1)
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return header, rows


def _parse_float(cell, row: int, column: str) -> float:
    if cell is None:
        raise ParseError("missing value", row=row, column=column)
    try:
        value = float(cell.strip())
    except ValueError:
        raise ParseError(f"not a number: {cell!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value: {cell!r}", row=row, column=column)
    return value


def _optional_float(row: dict, column: str, rownum: int) -> float | None:
    cell = row.get(column)
    if cell is None or cell.strip() == "":
        return None
    return _parse_float(cell, rownum, column)


def load_calibration_pairs(path) -> list[CalibrationPair]:
    """Read ``y_true,y_pred`` pairs. Rows are numbered from 1 after the header."""
    _, rows = _read_csv(path, ("y_true", "y_pred"))
    return [
        CalibrationPair(_parse_float(r["y_true"], i, "y_true"), _parse_float(r["y_pred"], i, "y_pred"))
        for i, r in enumerate(rows, start=1)
    ]


def load_trial(path, trial_id: str | None = None) -> TrialData:
    """Read a downstream trial table (``unit_id,y_pred,treatment`` plus optional
    ``confounder`` and ``propensity``).

    A ``y_true`` column is refused: ground truth must not reach the downstream
    phase through the trial file.
    """
    header, rows = _read_csv(path, ("unit_id", "y_pred", "treatment"))
    if "y_true" in header:
        raise ValidationError(f"{path}: trial files must not carry a y_true column")
    records = []
    for i, r in enumerate(rows, start=1):
        treatment = _parse_float(r["treatment"], i, "treatment")
        if treatment not in (0.0, 1.0):
            raise ValidationError(f"row {i}: treatment must be 0 or 1, got {r['treatment']!r}")
        propensity = _optional_float(r, "propensity", i)
        if propensity is not None and not 0.0 < propensity < 1.0:
            raise ValidationError(f"row {i}: propensity must lie in (0, 1), got {propensity}")
        records.append(
            TrialRecord(
                unit_id=r["unit_id"].strip(),
                y_pred=_parse_float(r["y_pred"], i, "y_pred"),
                treatment=int(treatment),
                confounder=_optional_float(r, "confounder", i),
                propensity=propensity,
            )
        )
    if trial_id is None:
        trial_id = os.path.splitext(os.path.basename(str(path)))[0]
    return TrialData(tuple(records), trial_id)


def load_column(path, column: str) -> np.ndarray:
    """Read one numeric column, e.g. ``y_corrected`` from a corrected trial."""
    _, rows = _read_csv(path, (column,))
    return np.array([_parse_float(r[column], i, column) for i, r in enumerate(rows, start=1)])


def has_column(path, column: str) -> bool:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        header = next(csv.reader(fh), [])
    return column in [h.strip() for h in header]


def load_labels(path) -> dict[str, float]:
    """Read the PPI label file ``unit_id,y_true``."""
    _, rows = _read_csv(path, ("unit_id", "y_true"))
    labels = {}
    for i, r in enumerate(rows, start=1):
        uid = r["unit_id"].strip()
        if uid in labels:
            raise ParseError(f"duplicate unit_id {uid!r}", row=i, column="unit_id")
        labels[uid] = _parse_float(r["y_true"], i, "y_true")
    return labels


# --- artifact document ----------------------------------------------------


def save_artifact(artifact: CalibrationArtifact, path) -> None:
    doc = {name: getattr(artifact, name) for name in ARTIFACT_FIELDS}
    with open(path, "w", encoding="utf-8") as fh:
        # json writes floats with repr(), which round-trips exactly
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_artifact(path) -> CalibrationArtifact:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"no such artifact: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValidationError(f"corrupt artifact {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"corrupt artifact {path}: expected an object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(
            f"artifact {path} has schema_version {doc.get('schema_version')!r}, expected {SCHEMA_VERSION}"
        )
    if set(doc) != set(ARTIFACT_FIELDS):
        raise ValidationError(f"artifact {path} must have exactly the fields {ARTIFACT_FIELDS}")
    return CalibrationArtifact(**doc)


def artifact_as_dict(artifact: CalibrationArtifact) -> dict:
    return asdict(artifact)
