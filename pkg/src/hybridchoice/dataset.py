"""In-memory data model, CSV ingestion, key-based fusion and dummy encoding.

An :class:`Observation` is one respondent after fusion: a choice, numeric
covariates (dummies stored as 0/1), Likert indicators (possibly absent) and
the raw categorical answers that the encoding rules turn into dummies.
"""
from __future__ import annotations

import csv
import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicationError,
    EncodingError,
    FusionConflictError,
    ParseError,
    SchemaError,
)

KINDS = ("binary", "continuous", "likert", "indicator", "categorical")
NUMERIC_KINDS = ("binary", "continuous")
# ``likert`` indicators are responses in [1, 5]; ``indicator`` holds unbounded
# continuous scores (used for synthetic data without rounding).
INDICATOR_KINDS = ("likert", "indicator")

PAPER_ALTERNATIVES: tuple[tuple[int, str], ...] = ((1, "FRT"), (2, "ODT"), (3, "Indifferent"))

LIKERT_MIN, LIKERT_MAX = 1.0, 5.0


def hash_key(raw_key: str) -> str:
    """Opaque, stable id for a personal key such as an email address."""
    normalized = raw_key.strip().lower().encode("utf-8")
    return hashlib.sha256(normalized).hexdigest()[:16]


@dataclass(frozen=True)
class Observation:
    id: str
    choice: int | None
    covariates: Mapping[str, float] = field(default_factory=dict)
    indicators: Mapping[str, float] = field(default_factory=dict)
    weight: float = 1.0
    raw: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("covariates", "indicators", "raw"):
            object.__setattr__(self, name, MappingProxyType(dict(getattr(self, name))))
        if not self.weight > 0:
            raise ValueError(f"observation {self.id}: weight must be positive")

    def value(self, name: str) -> float:
        """Numeric value of a covariate or indicator; KeyError when absent."""
        if name in self.covariates:
            return self.covariates[name]
        return self.indicators[name]

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return (
            self.id == other.id
            and self.choice == other.choice
            and dict(self.covariates) == dict(other.covariates)
            and dict(self.indicators) == dict(other.indicators)
            and self.weight == other.weight
            and dict(self.raw) == dict(other.raw)
        )

    def __hash__(self):
        return hash((self.id, self.choice))


@dataclass(frozen=True)
class Dataset:
    """Ordered, immutable collection of observations.

    ``variables`` maps each column to its kind (``binary``, ``continuous``,
    ``likert`` or ``categorical``). ``alternatives`` lists ``(index, label)``
    pairs; choices refer to the index.
    """

    observations: tuple[Observation, ...]
    variables: Mapping[str, str]
    alternatives: tuple[tuple[int, str], ...] = PAPER_ALTERNATIVES

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "variables", MappingProxyType(dict(self.variables)))
        object.__setattr__(self, "alternatives", tuple(tuple(a) for a in self.alternatives))
        if len(self.alternatives) < 2:
            raise SchemaError("a dataset needs at least two alternatives")
        for name, kind in self.variables.items():
            if kind not in KINDS:
                raise SchemaError(f"variable {name!r}: unknown kind {kind!r}")
        seen: dict[str, int] = {}
        valid = {a for a, _ in self.alternatives}
        for pos, obs in enumerate(self.observations):
            if obs.id in seen:
                raise DuplicationError(
                    f"duplicate id {obs.id!r} at positions {seen[obs.id] + 1} and {pos + 1}"
                )
            seen[obs.id] = pos
            for name, value in obs.indicators.items():
                if self.variables.get(name, "likert") == "likert" and not LIKERT_MIN <= value <= LIKERT_MAX:
                    raise SchemaError(f"observation {obs.id}: indicator {name}={value} outside [1, 5]")
            if obs.choice is not None and obs.choice not in valid:
                raise SchemaError(f"observation {obs.id}: choice {obs.choice} not an alternative")

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self) -> Iterator[Observation]:
        return iter(self.observations)

    @property
    def ids(self) -> list[str]:
        return [o.id for o in self.observations]

    @property
    def alternative_indices(self) -> list[int]:
        return [a for a, _ in self.alternatives]

    def columns_of_kind(self, *kinds: str) -> list[str]:
        return [n for n, k in self.variables.items() if k in kinds]

    def choice_positions(self) -> np.ndarray:
        """Zero-based position of each chosen alternative in ``alternatives``."""
        pos = {a: i for i, (a, _) in enumerate(self.alternatives)}
        try:
            return np.array([pos[o.choice] for o in self.observations], dtype=np.intp)
        except KeyError:
            raise SchemaError("every observation needs a choice for likelihood evaluation")

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Covariate columns as an ``(n, len(names))`` float array."""
        out = np.empty((len(self.observations), len(names)))
        for i, obs in enumerate(self.observations):
            for j, name in enumerate(names):
                try:
                    out[i, j] = obs.covariates[name]
                except KeyError:
                    raise SchemaError(f"observation {obs.id}: covariate {name!r} missing")
        return out

    def indicator_matrix(self, names: Sequence[str]) -> np.ndarray:
        """Indicator columns with NaN for absent responses."""
        out = np.full((len(self.observations), len(names)), np.nan)
        for i, obs in enumerate(self.observations):
            for j, name in enumerate(names):
                if name in obs.indicators:
                    out[i, j] = obs.indicators[name]
        return out

    def column(self, name: str) -> np.ndarray:
        kind = self.variables.get(name)
        if kind in INDICATOR_KINDS:
            return self.indicator_matrix([name])[:, 0]
        if kind == "categorical":
            return np.array([o.raw.get(name, "") for o in self.observations], dtype=object)
        return self.matrix([name])[:, 0]

    def with_observations(self, observations: Iterable[Observation], variables=None) -> "Dataset":
        return Dataset(
            tuple(observations),
            self.variables if variables is None else variables,
            self.alternatives,
        )

    def sorted_by_id(self) -> "Dataset":
        return self.with_observations(sorted(self.observations, key=lambda o: o.id))


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def _parse_float(text: str, column: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {column!r}: {text!r} is not numeric")
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column {column!r}: non-finite value {text!r}")
    return value


def load_csv(
    path: str | Path,
    schema: Mapping[str, str],
    *,
    id_column: str = "id",
    choice_column: str | None = "Choice",
    key_column: str | None = None,
    alternatives: Sequence[tuple[int, str]] = PAPER_ALTERNATIVES,
) -> Dataset:
    """Read a comma-separated file into a :class:`Dataset`.

    Parameters
    ----------
    schema : mapping
        Column name to kind. Every listed column must appear in the header;
        unlisted columns are ignored.
    id_column : str
        Column holding an already-opaque identifier. Ignored when
        ``key_column`` is given.
    choice_column : str or None
        Column holding the chosen alternative index. ``None`` for files
        without choices (e.g. operational records).
    key_column : str or None
        Personal key (e.g. email). It is hashed into the observation id and
        never stored.

    Row numbers in error messages count data rows from 1 (header excluded).
    """
    for name, kind in schema.items():
        if kind not in KINDS:
            raise SchemaError(f"column {name!r}: unknown kind {kind!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: missing header row")
        id_source = key_column if key_column is not None else id_column
        required = [id_source, *schema]
        if choice_column is not None:
            required.append(choice_column)
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        col = {name: header.index(name) for name in required}
        valid_choices = {a for a, _ in alternatives}

        observations = []
        first_row: dict[str, int] = {}
        for row_no, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise ParseError(f"row {row_no}: expected {len(header)} cells, got {len(cells)}")
            raw_id = cells[col[id_source]].strip()
            if not raw_id:
                raise ParseError(f"row {row_no}: empty {id_source!r}")
            obs_id = hash_key(raw_id) if key_column is not None else raw_id
            if obs_id in first_row:
                raise DuplicationError(
                    f"duplicate id in rows {first_row[obs_id]} and {row_no}"
                )
            first_row[obs_id] = row_no

            choice = None
            if choice_column is not None:
                text = cells[col[choice_column]].strip()
                value = _parse_float(text, choice_column, row_no)
                if value != int(value) or int(value) not in valid_choices:
                    raise ParseError(f"row {row_no}: choice {text!r} is not an alternative index")
                choice = int(value)

            covariates, indicators, raw = {}, {}, {}
            for name, kind in schema.items():
                text = cells[col[name]].strip()
                if kind == "categorical":
                    raw[name] = text
                elif kind in INDICATOR_KINDS:
                    if text == "":
                        continue
                    value = _parse_float(text, name, row_no)
                    if kind == "likert" and not LIKERT_MIN <= value <= LIKERT_MAX:
                        raise ParseError(f"row {row_no}, column {name!r}: {value} outside [1, 5]")
                    indicators[name] = value
                else:
                    value = _parse_float(text, name, row_no)
                    if kind == "binary" and value not in (0.0, 1.0):
                        raise ParseError(f"row {row_no}, column {name!r}: binary value {text!r}")
                    covariates[name] = value
            observations.append(Observation(obs_id, choice, covariates, indicators, 1.0, raw))
    return Dataset(tuple(observations), dict(schema), tuple(alternatives))


def _format_number(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def write_csv(dataset: Dataset, path: str | Path, *, choice_column: str = "Choice") -> None:
    """Write ``dataset`` in the format :func:`load_csv` reads back."""
    has_choice = any(o.choice is not None for o in dataset)
    columns = list(dataset.variables)
    header = ["id"] + ([choice_column] if has_choice else []) + columns
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for obs in dataset:
            row = [obs.id]
            if has_choice:
                row.append("" if obs.choice is None else str(obs.choice))
            for name in columns:
                kind = dataset.variables[name]
                if kind == "categorical":
                    row.append(obs.raw.get(name, ""))
                elif kind in INDICATOR_KINDS:
                    row.append(_format_number(obs.indicators[name]) if name in obs.indicators else "")
                else:
                    row.append(_format_number(obs.covariates[name]))
            writer.writerow(row)


def infer_schema(path: str | Path, indicators: Iterable[str] = (), *,
                 reserved: Iterable[str] = ("id", "Choice")) -> dict[str, str]:
    """Guess column kinds of a CSV.

    Listed indicators are ``likert`` when every answer is an integer in
    1..5 and ``indicator`` (unbounded score) otherwise; blanks are missing
    answers. Other 0/1 columns are binary, other numeric columns continuous,
    the rest categorical.
    """
    indicators = set(indicators)
    reserved = set(reserved)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        rows = [r for r in reader if r]
    schema = {}
    for j, name in enumerate(header):
        if name in reserved:
            continue
        values = [r[j].strip() for r in rows]
        if name in indicators:
            try:
                answers = {float(v) for v in values if v}
            except ValueError:
                raise ParseError(f"{path}: indicator {name!r} has non-numeric answers") from None
            likert = all(v.is_integer() and LIKERT_MIN <= v <= LIKERT_MAX for v in answers)
            schema[name] = "likert" if likert else "indicator"
            continue
        try:
            nums = {float(v) for v in values}
        except ValueError:
            schema[name] = "categorical"
            continue
        schema[name] = "binary" if nums <= {0.0, 1.0} else "continuous"
    return schema


# --------------------------------------------------------------------------
# Fusion
# --------------------------------------------------------------------------

def _key_value(obs: Observation, key: str):
    if key == "id":
        return obs.id
    if key in obs.raw:
        return obs.raw[key]
    if key in obs.covariates:
        return obs.covariates[key]
    return None


def fuse(survey: Dataset, operations: Dataset, key: str = "id") -> Dataset:
    """Inner join of two datasets on ``key`` (``"id"`` joins on observation ids).

    Columns are unioned. A column present on both sides must agree for every
    fused observation; otherwise :class:`FusionConflictError` lists the ids.
    Output order follows ``survey``.
    """
    if key != "id":
        for side, ds in (("survey", survey), ("operations", operations)):
            if key not in ds.variables:
                raise SchemaError(f"key column {key!r} missing from {side} data")
    variables = dict(survey.variables)
    for name, kind in operations.variables.items():
        if name in variables and variables[name] != kind:
            raise SchemaError(f"column {name!r} is {variables[name]} in survey, {kind} in operations")
        variables.setdefault(name, kind)

    index = {}
    for obs in operations:
        index.setdefault(_key_value(obs, key), obs)

    fused = []
    conflicts: dict[str, list[str]] = {}
    for left in survey:
        right = index.get(_key_value(left, key))
        if right is None:
            continue
        merged = {}
        for attr in ("covariates", "indicators", "raw"):
            combined = dict(getattr(left, attr))
            for name, value in getattr(right, attr).items():
                if name in combined and combined[name] != value:
                    conflicts.setdefault(name, []).append(left.id)
                combined[name] = combined.get(name, value)
            merged[attr] = combined
        choice = left.choice
        if right.choice is not None:
            if choice is not None and choice != right.choice:
                conflicts.setdefault("choice", []).append(left.id)
            choice = right.choice if choice is None else choice
        fused.append(Observation(left.id, choice, merged["covariates"], merged["indicators"],
                                 left.weight, merged["raw"]))
    if conflicts:
        detail = "; ".join(f"{name}: {', '.join(ids)}" for name, ids in sorted(conflicts.items()))
        raise FusionConflictError(f"conflicting values for fused ids ({detail})")
    return Dataset(tuple(fused), variables, survey.alternatives)


# --------------------------------------------------------------------------
# Dummy encoding
# --------------------------------------------------------------------------

_INTERVAL = re.compile(r"^\s*(-?[\d.]+)\s*\.\.\s*(-?[\d.]+)\s*$")
_COMPARE = re.compile(r"^\s*(<=|>=|<|>)\s*(-?[\d.]+)\s*$")


def _category_matcher(category: str):
    """Turn a rule key into a predicate over raw cell text.

    Keys of the form ``<3``, ``<=3``, ``>7``, ``>=4`` or ``3..7`` (inclusive)
    match numerically; anything else matches the text exactly (numeric text
    also matches numerically equal values, so ``5`` matches ``5.0``).
    """
    m = _INTERVAL.match(category)
    if m:
        lo, hi = float(m.group(1)), float(m.group(2))
        return lambda v: v is not None and lo <= v <= hi, True
    m = _COMPARE.match(category)
    if m:
        op, bound = m.group(1), float(m.group(2))
        ops = {"<": float.__lt__, "<=": float.__le__, ">": float.__gt__, ">=": float.__ge__}
        return lambda v: v is not None and ops[op](v, bound), True
    try:
        target = float(category)
    except ValueError:
        return None, False
    return lambda v: v is not None and v == target, True


@dataclass(frozen=True)
class EncodingRule:
    """Maps each category of ``source`` to at most one 0/1 target column.

    Categories mapped to no target form the reference level (all dummies 0).
    The targets of one rule are mutually exclusive by construction.
    """

    source: str
    categories: Mapping[str, str | None]

    def __post_init__(self):
        object.__setattr__(self, "categories", MappingProxyType(dict(self.categories)))

    @property
    def targets(self) -> list[str]:
        seen = []
        for t in self.categories.values():
            if t and t not in seen:
                seen.append(t)
        return seen

    def target_for(self, text: str) -> str | None:
        if text in self.categories:
            return self.categories[text]
        try:
            number = float(text)
        except (TypeError, ValueError):
            number = None
        for category, target in self.categories.items():
            matcher, numeric = _category_matcher(category)
            if numeric and matcher(number):
                return target
        raise EncodingError(f"{self.source}: value {text!r} outside declared categories")


def encode_dummies(raw: Dataset, rules: Sequence[EncodingRule]) -> Dataset:
    """Add the 0/1 dummy columns described by ``rules``.

    Source columns are kept, so encoding already-encoded data is a no-op.
    """
    owners: dict[str, str] = {}
    for rule in rules:
        if rule.source not in raw.variables:
            raise SchemaError(f"encoding source column {rule.source!r} missing")
        for target in rule.targets:
            if target in owners:
                raise EncodingError(f"dummy {target!r} produced by both {owners[target]!r} and {rule.source!r}")
            owners[target] = rule.source

    variables = dict(raw.variables)
    for target in owners:
        variables[target] = "binary"

    encoded = []
    for obs in raw:
        covariates = dict(obs.covariates)
        for rule in rules:
            if rule.source in obs.raw:
                text = obs.raw[rule.source]
            elif rule.source in obs.covariates:
                text = _format_number(obs.covariates[rule.source])
            else:
                raise EncodingError(f"observation {obs.id}: {rule.source!r} missing")
            try:
                hit = rule.target_for(text)
            except EncodingError as exc:
                raise EncodingError(f"observation {obs.id}: {exc}") from None
            for target in rule.targets:
                covariates[target] = 1.0 if target == hit else 0.0
        encoded.append(Observation(obs.id, obs.choice, covariates, obs.indicators, obs.weight, obs.raw))
    return raw.with_observations(encoded, variables)


def encode_choice(raw: Dataset, source: str, mapping: Mapping[str, int]) -> Dataset:
    """Derive the choice index from a raw answer column (e.g. agreement with
    a statement preferring one alternative)."""
    valid = set(raw.alternative_indices)
    out = []
    for obs in raw:
        text = obs.raw.get(source)
        if text is None:
            raise SchemaError(f"choice source column {source!r} missing")
        if text not in mapping:
            raise EncodingError(f"observation {obs.id}: choice answer {text!r} not mapped")
        choice = int(mapping[text])
        if choice not in valid:
            raise EncodingError(f"choice mapping gives {choice}, not an alternative")
        out.append(Observation(obs.id, choice, obs.covariates, obs.indicators, obs.weight, obs.raw))
    return raw.with_observations(out)


# Raw survey categories to the modelling dummies. Category labels follow the
# survey answer sets; unlisted dummies of a group are the reference level.
PAPER_ENCODING_RULES: tuple[EncodingRule, ...] = (
    EncodingRule("age", {"Young": "Young", "Adults": None, "Middle-aged": "MiddleAge", "Old": None}),
    EncodingRule("gender", {"Male": "Male", "Female": None, "Other": None}),
    EncodingRule("marital", {"Single": "Single", "Married": None, "Widowed": None,
                             "Divorced": None, "Other": None}),
    EncodingRule("education", {"No Formal Education": None, "Primary School": None,
                               "Secondary School": "Sec_school", "Diploma": None,
                               "Undergraduate": "HigherEdu", "Graduate": "HigherEdu"}),
    EncodingRule("income", {"Under 10": "LowIncome", "10 to 19.999": "LowIncome",
                            "20 to 29.999": None, "30 to 39.999": None, "40 to 49.999": None,
                            "50 to 59.999": "HighIncome", "60 and over": "HighIncome"}),
    EncodingRule("household_size", {"1..3": "Hhld_L", ">=4": "Hhld_H"}),
    EncodingRule("cars", {"0": None, ">=1": "Car"}),
    EncodingRule("trip_purpose", {"Work-Based": "WorkTrip", "Nonwork-Based": "NonworkTrip",
                                  "Mixed": "MixedTrip"}),
    EncodingRule("night_mode", {"Active Mode": "ActiveMode", "Car": None, "FRT": "FixedService",
                                "Mobility Bus Service": None, "Not Applicable": None}),
    EncodingRule("in_vehicle", {"Less than FRT": "InVeh_less", "Equal to FRT": None,
                                "More than FRT": "InVeh_more"}),
    EncodingRule("assigned_level", {"Low": "Assigned_L", "Medium": None, "High": "Assigned_H"}),
    EncodingRule("unassigned_level", {"Low": "Unassigned_L", "Medium": None,
                                      "High": "Unassigned_H", "Very High": "Unassigned_H"}),
    EncodingRule("waiting_level", {"Low": "Waiting_L", "Medium": None,
                                   "High": "Waiting_H", "Very High": "Waiting_H"}),
)

# Agreement with "I would prefer to have fixed route busses at night".
PAPER_CHOICE_MAPPING: Mapping[str, int] = MappingProxyType({
    "Strongly Agree": 1, "Agree": 1,
    "Strongly Disagree": 2, "Disagree": 2,
    "Neither agree nor disagree": 3,
})
