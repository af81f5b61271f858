"""Observational datasets, covariate roles, and design-matrix encoding."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MissingDataError, SchemaError, ValidationError

log = logging.getLogger(__name__)

INTERCEPT = "(Intercept)"
MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "N/A", "null"})
OUTCOME_KINDS = ("continuous", "binary")


def _frozen(values: np.ndarray) -> np.ndarray:
    out = np.array(values, copy=True)
    out.setflags(write=False)
    return out


class Dataset:
    """Immutable table with a designated outcome and binary treatment column.

    Numeric columns are float64 arrays (NaN marks a missing cell in columns
    no computation uses); categorical columns are object arrays of labels.
    ``row_ids`` holds the 0-based data-row index of each row in the file it
    was loaded from, so subsets can be traced back to their source.
    """

    def __init__(
        self,
        columns: Mapping[str, Sequence],
        outcome: str,
        treatment: str,
        outcome_kind: str = "continuous",
        higher_is_better: bool = True,
        categorical: Iterable[str] = (),
        weight_column: str | None = None,
        row_ids: Sequence[int] | None = None,
    ):
        categorical = tuple(categorical)
        cols = {}
        for name, values in columns.items():
            if name in categorical:
                arr = np.asarray([str(v) for v in values], dtype=object)
            else:
                arr = np.asarray(values, dtype=float)
            if arr.ndim != 1:
                raise ValidationError(f"column {name!r} is not one-dimensional")
            cols[name] = _frozen(arr)
        self._columns = cols
        self.outcome = outcome
        self.treatment = treatment
        self.outcome_kind = outcome_kind
        self.higher_is_better = bool(higher_is_better)
        self.categorical = frozenset(c for c in categorical if c in cols)
        self.weight_column = weight_column
        n = len(next(iter(cols.values()))) if cols else 0
        if row_ids is None:
            row_ids = np.arange(n)
        self.row_ids = _frozen(np.asarray(row_ids, dtype=np.int64))
        self._validate()

    def _validate(self):
        if self.outcome_kind not in OUTCOME_KINDS:
            raise ValidationError(f"outcome_kind must be one of {OUTCOME_KINDS}, got {self.outcome_kind!r}")
        for name in (self.outcome, self.treatment):
            if name not in self._columns:
                raise SchemaError(f"missing column: {name}")
            if name in self.categorical:
                raise SchemaError(f"column {name!r} cannot be categorical")
        n = self.n_rows
        if n < 1:
            raise ValidationError("dataset has no rows")
        for name, arr in self._columns.items():
            if len(arr) != n:
                raise ValidationError(f"column {name!r} has {len(arr)} entries, expected {n}")
        if len(self.row_ids) != n:
            raise ValidationError("row_ids length does not match row count")
        t = self._columns[self.treatment]
        bad = ~np.isin(t, (0.0, 1.0))
        if bad.any():
            i = int(np.argmax(bad))
            raise ValidationError(
                f"treatment column {self.treatment!r} must contain only 0/1; row {i} has {t[i]!r}"
            )
        y = self._columns[self.outcome]
        if not np.all(np.isfinite(y)):
            raise ValidationError(f"outcome column {self.outcome!r} has non-finite values")
        if self.outcome_kind == "binary" and not np.all(np.isin(y, (0.0, 1.0))):
            raise ValidationError(f"binary outcome column {self.outcome!r} must contain only 0/1")
        if self.weight_column is not None:
            if self.weight_column not in self._columns:
                raise SchemaError(f"missing column: {self.weight_column}")
            w = self._columns[self.weight_column]
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValidationError(f"weight column {self.weight_column!r} must be finite and >= 0")

    @property
    def n_rows(self) -> int:
        return len(self._columns[self.treatment])

    def __len__(self):
        return self.n_rows

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(self._columns)

    def __contains__(self, name):
        return name in self._columns

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise SchemaError(f"missing column: {name}") from None

    @property
    def y(self) -> np.ndarray:
        return self._columns[self.outcome]

    @property
    def t(self) -> np.ndarray:
        return self._columns[self.treatment]

    @property
    def extra_weights(self) -> np.ndarray | None:
        if self.weight_column is None:
            return None
        return self._columns[self.weight_column]

    def require(self, names: Iterable[str]):
        missing = [c for c in names if c not in self._columns]
        if missing:
            raise SchemaError("missing columns: " + ", ".join(missing))

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            {k: v[index] for k, v in self._columns.items()},
            outcome=self.outcome,
            treatment=self.treatment,
            outcome_kind=self.outcome_kind,
            higher_is_better=self.higher_is_better,
            categorical=self.categorical,
            weight_column=self.weight_column,
            row_ids=self.row_ids[index],
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if (self.outcome, self.treatment, self.outcome_kind, self.higher_is_better,
                self.categorical, self.weight_column) != (
                other.outcome, other.treatment, other.outcome_kind, other.higher_is_better,
                other.categorical, other.weight_column):
            return False
        if self.column_names != other.column_names:
            return False
        for name in self.column_names:
            a, b = self[name], other[name]
            if name in self.categorical:
                if not np.array_equal(a, b):
                    return False
            elif not np.array_equal(a, b, equal_nan=True):
                return False
        return True

    def __repr__(self):
        return f"Dataset(rows={self.n_rows}, columns={list(self.column_names)})"


@dataclass(frozen=True)
class RoleAssignment:
    """Clinically assigned covariate roles.

    ``c_ti``/``c_tn`` influence treatment in the current study (observable /
    not observable in future settings), ``c_ni``/``c_nn`` do not. Rule inputs
    must come from the future-observable sets.
    """

    c_ti: tuple[str, ...] = ()
    c_tn: tuple[str, ...] = ()
    c_ni: tuple[str, ...] = ()
    c_nn: tuple[str, ...] = ()
    rule_inputs: tuple[str, ...] = ()
    c_t_eval: tuple[str, ...] | None = None

    def __post_init__(self):
        for name in ("c_ti", "c_tn", "c_ni", "c_nn", "rule_inputs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.c_t_eval is None:
            object.__setattr__(self, "c_t_eval", self.c_t)
        else:
            object.__setattr__(self, "c_t_eval", tuple(self.c_t_eval))
        base = [self.c_ti, self.c_tn, self.c_ni, self.c_nn]
        seen = {}
        for label, group in zip(("c_ti", "c_tn", "c_ni", "c_nn"), base):
            for c in group:
                if c in seen:
                    raise ValidationError(f"column {c!r} assigned to both {seen[c]} and {label}")
                seen[c] = label
        if not self.rule_inputs:
            raise ValidationError("rule_inputs must be non-empty")
        outside = [c for c in self.rule_inputs if c not in self.c_i]
        if outside:
            raise ValidationError("rule inputs must be future-observable (C_TI or C_NI): " + ", ".join(outside))
        if len(set(self.rule_inputs)) != len(self.rule_inputs):
            raise ValidationError("duplicate rule inputs")

    @property
    def c_t(self) -> tuple[str, ...]:
        return self.c_ti + self.c_tn

    @property
    def c_i(self) -> tuple[str, ...]:
        return self.c_ti + self.c_ni

    @property
    def denominator_inputs(self) -> tuple[str, ...]:
        """Rule inputs followed by the treatment influencers not already among them."""
        return self.rule_inputs + tuple(c for c in self.c_t if c not in self.rule_inputs)

    @classmethod
    def from_names(cls, treatment_names, rule_names, eval_names=None, ignored=()):
        treatment_names, rule_names = tuple(treatment_names), tuple(rule_names)
        return cls(
            c_ti=tuple(c for c in treatment_names if c in rule_names),
            c_tn=tuple(c for c in treatment_names if c not in rule_names),
            c_ni=tuple(c for c in rule_names if c not in treatment_names),
            c_nn=tuple(ignored),
            rule_inputs=rule_names,
            c_t_eval=None if eval_names is None else tuple(eval_names),
        )

    def check_against(self, data: Dataset, evaluation: bool = False):
        reserved = {data.outcome, data.treatment}
        clash = [c for c in self.c_ti + self.c_tn + self.c_ni + self.c_nn + self.c_t_eval if c in reserved]
        if clash:
            raise ValidationError("outcome/treatment columns cannot carry a covariate role: " + ", ".join(clash))
        needed = self.rule_inputs + (self.c_t_eval if evaluation else self.c_t)
        data.require(dict.fromkeys(needed))


@dataclass(frozen=True)
class Schema:
    """Declarative description of a data file (the ``[schema]`` config section)."""

    outcome: str
    treatment: str
    outcome_kind: str
    higher_is_better: bool
    names_influencing_treatment: tuple[str, ...]
    names_influencing_rule: tuple[str, ...]
    names_influencing_treatment_eval: tuple[str, ...] | None = None
    missingness_weight_column: str | None = None
    categorical: tuple[str, ...] = ()
    names_ignored: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d: Mapping) -> "Schema":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError("unknown schema keys: " + ", ".join(sorted(unknown)))
        try:
            kw = dict(d)
            for key in ("names_influencing_treatment", "names_influencing_rule", "categorical", "names_ignored"):
                if key in kw:
                    kw[key] = tuple(kw[key])
            if kw.get("names_influencing_treatment_eval") is not None:
                kw["names_influencing_treatment_eval"] = tuple(kw["names_influencing_treatment_eval"])
            kw.setdefault("names_influencing_treatment", ())
            schema = cls(**kw)
        except TypeError as exc:
            raise ValidationError(f"invalid schema: {exc}") from None
        if schema.outcome_kind not in OUTCOME_KINDS:
            raise ValidationError(f"outcome_kind must be one of {OUTCOME_KINDS}")
        schema.roles()
        return schema

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "treatment": self.treatment,
            "outcome_kind": self.outcome_kind,
            "higher_is_better": self.higher_is_better,
            "names_influencing_treatment": list(self.names_influencing_treatment),
            "names_influencing_rule": list(self.names_influencing_rule),
            "names_influencing_treatment_eval": (
                None if self.names_influencing_treatment_eval is None
                else list(self.names_influencing_treatment_eval)),
            "missingness_weight_column": self.missingness_weight_column,
            "categorical": list(self.categorical),
            "names_ignored": list(self.names_ignored),
        }

    def roles(self) -> RoleAssignment:
        return RoleAssignment.from_names(
            self.names_influencing_treatment,
            self.names_influencing_rule,
            self.names_influencing_treatment_eval,
            self.names_ignored,
        )

    def used_columns(self, purpose: str = "development") -> list[str]:
        """Columns that must be present (and complete) for ``purpose``.

        ``purpose`` is one of ``development``, ``evaluation`` or ``full``.
        """
        roles = self.roles()
        cols = [self.outcome, self.treatment, *roles.rule_inputs]
        if purpose in ("development", "full"):
            cols += roles.c_t
        if purpose in ("evaluation", "full"):
            cols += roles.c_t_eval
        if purpose not in ("development", "evaluation", "full"):
            raise ValueError(f"unknown purpose {purpose!r}")
        if self.missingness_weight_column:
            cols.append(self.missingness_weight_column)
        return list(dict.fromkeys(cols))


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"row {row}, column {column!r}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"row {row}, column {column!r}: non-finite value {text!r}")
    return value


def load_csv(path, schema: Schema, purpose: str = "development") -> Dataset:
    """Read a header-row CSV into a validated :class:`Dataset`.

    Only categorical columns named in the schema are kept as labels. Columns
    the schema never uses are read as numbers when every cell parses and as
    labels otherwise, and may contain gaps. A missing cell in a used column
    is an error unless a missingness-weight column is declared, in which
    case the incomplete row is dropped (its weight is zero by construction
    of inverse-probability-of-missingness weights).
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file, header row required") from None
        rows = [r for r in reader if r]
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names in header")
    used = schema.used_columns(purpose)
    missing = [c for c in used if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns: " + ", ".join(missing))
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ValidationError(f"{path}: row {i + 1} has {len(r)} fields, expected {len(header)}")

    keep = []
    for i, r in enumerate(rows):
        gaps = [c for c in used if r[header.index(c)].strip() in MISSING_TOKENS]
        if not gaps:
            keep.append(i)
        elif schema.missingness_weight_column is None:
            raise MissingDataError(
                f"{path}: row {i + 1}, column {gaps[0]!r} is missing and no missingness_weight_column is declared",
                row=i + 1, column=gaps[0])
    if len(keep) < len(rows):
        log.warning("%s: dropped %d incomplete rows (missingness weights declared)", path, len(rows) - len(keep))
    if len(keep) < 2:
        raise ValidationError(f"{path}: need at least 2 complete rows, found {len(keep)}")

    categorical = set(schema.categorical)
    columns = {}
    labels = set()
    for j, name in enumerate(header):
        cells = [rows[i][j].strip() for i in keep]
        if name in categorical:
            columns[name] = cells
            labels.add(name)
        elif name in used:
            columns[name] = [_parse_float(c, keep[k] + 1, name) for k, c in enumerate(cells)]
        else:
            try:
                columns[name] = [math.nan if c in MISSING_TOKENS else float(c) for c in cells]
            except ValueError:
                columns[name] = cells
                labels.add(name)
    return Dataset(
        columns,
        outcome=schema.outcome,
        treatment=schema.treatment,
        outcome_kind=schema.outcome_kind,
        higher_is_better=schema.higher_is_better,
        categorical=[c for c in header if c in labels],
        weight_column=schema.missingness_weight_column,
        row_ids=keep,
    )


def _format(value) -> str:
    if isinstance(value, str):
        return value
    if math.isnan(value):
        return ""
    if value == int(value) and abs(value) < 2**53:
        return str(int(value))
    return repr(float(value))


def write_csv(data: Dataset, path):
    path = Path(path)
    names = data.column_names
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        cols = [data[n] for n in names]
        for i in range(data.n_rows):
            writer.writerow([_format(c[i]) for c in cols])


@dataclass(frozen=True)
class DesignMatrix:
    matrix: np.ndarray
    column_names: tuple[str, ...]
    encoding: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    constant_columns: tuple[str, ...] = ()

    @property
    def shape(self):
        return self.matrix.shape

    def decode(self, column: str, row: int) -> str:
        """Recover the category label of ``row`` from its one-hot block."""
        levels = self.encoding[column]
        for level in levels[1:]:
            j = self.column_names.index(f"{column}[{level}]")
            if self.matrix[row, j] == 1.0:
                return level
        return levels[0]


def category_levels(values: np.ndarray) -> tuple[str, ...]:
    """Distinct labels in first-observed order."""
    return tuple(dict.fromkeys(values.tolist()))


def encode(data: Dataset, cols: Sequence[str], encoding: Mapping[str, Sequence[str]] | None = None) -> DesignMatrix:
    """Build an intercept-first design matrix.

    Categorical columns get reference-cell indicators, the reference being
    the first level seen in the data unless ``encoding`` pins the levels
    (needed so evaluation data is coded like development data).
    """
    cols = list(cols)
    if not cols:
        # intercept-only models (e.g. an empty confounder set) are legitimate
        return DesignMatrix(_frozen(np.ones((data.n_rows, 1))), (INTERCEPT,), {}, ())
    data.require(cols)
    n = data.n_rows
    blocks = [np.ones((n, 1))]
    names = [INTERCEPT]
    levels_used = {}
    for c in cols:
        values = data[c]
        if c in data.categorical:
            levels = tuple(encoding[c]) if encoding and c in encoding else category_levels(values)
            unseen = sorted(set(values.tolist()) - set(levels))
            if unseen:
                raise ValidationError(f"column {c!r} has levels not seen at fit time: {unseen}")
            levels_used[c] = levels
            ind = np.column_stack([(values == lv).astype(float) for lv in levels[1:]]) if len(levels) > 1 \
                else np.empty((n, 0))
            blocks.append(ind)
            names += [f"{c}[{lv}]" for lv in levels[1:]]
        else:
            blocks.append(values.reshape(-1, 1).astype(float))
            names.append(c)
    matrix = np.hstack(blocks)
    if not np.all(np.isfinite(matrix)):
        raise ValidationError("design matrix has non-finite entries")
    constant = tuple(nm for j, nm in enumerate(names) if j > 0 and np.ptp(matrix[:, j]) == 0.0)
    return DesignMatrix(_frozen(matrix), tuple(names), levels_used, constant)
