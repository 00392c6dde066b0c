"""Survey-style data ingestion, ISCED mapping, dummy encoding and subsetting."""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
import yaml

from .errors import ConfigError, EncodingError, LoadError, SchemaError, SubsetError, ValidationError

MISSING_LABEL = "missing"

# ISCED 2011 level -> years of schooling
ISCED_YEARS = {0: 7, 1: 7, 2: 10, 3: 13, 4: 15, 5: 18, 6: 18, 7: 18, 8: 18}


def isced_to_years(level) -> int:
    """Map an ISCED level (0-8) to years of education."""
    if isinstance(level, str) and re.fullmatch(r"\s*\d+\s*", level):
        code = int(level)
    elif isinstance(level, (int, np.integer)) and not isinstance(level, bool):
        code = int(level)
    else:
        raise ValidationError(f"ISCED level {level!r} is not an integer")
    if code not in ISCED_YEARS:
        raise ValidationError(f"ISCED level {code} outside 0-8")
    return ISCED_YEARS[code]


@dataclass
class Dataset:
    """Outcome, categorical circumstances and weights for one sample.

    ``x`` holds circumstance labels as strings, one column per circumstance.
    ``extra`` carries auxiliary columns (birth year, country, ...) that are
    not circumstances but can be used to subset.
    """

    y: np.ndarray
    x: pd.DataFrame
    w: np.ndarray | None = None
    ids: np.ndarray | None = None
    extra: pd.DataFrame | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        n = self.y.shape[0]
        if not isinstance(self.x, pd.DataFrame):
            self.x = pd.DataFrame(self.x)
        self.x = self.x.reset_index(drop=True).astype(str)
        self.x.columns = [str(c) for c in self.x.columns]
        self.w = np.ones(n) if self.w is None else np.asarray(self.w, dtype=float).ravel()
        self.ids = np.arange(n) if self.ids is None else np.asarray(self.ids)
        if self.extra is None:
            self.extra = pd.DataFrame(index=range(n))
        else:
            self.extra = self.extra.reset_index(drop=True)
        self.validate()

    def validate(self):
        n = self.y.shape[0]
        if n < 2:
            raise ValidationError(f"need at least 2 observations, got {n}")
        for name, arr in (("x", self.x), ("w", self.w), ("ids", self.ids), ("extra", self.extra)):
            if len(arr) != n:
                raise ValidationError(f"{name} has {len(arr)} rows, outcome has {n}")
        if not np.all(np.isfinite(self.y)):
            bad = int(np.flatnonzero(~np.isfinite(self.y))[0]) + 1
            raise ValidationError(f"non-finite outcome at row {bad}")
        if np.any(self.y <= 0):
            bad = int(np.flatnonzero(self.y <= 0)[0]) + 1
            raise ValidationError(f"nonpositive outcome {self.y[bad - 1]:g} at row {bad}")
        if not np.all(np.isfinite(self.w)) or np.any(self.w <= 0):
            bad = int(np.flatnonzero(~(self.w > 0) | ~np.isfinite(self.w))[0]) + 1
            raise ValidationError(f"nonpositive weight at row {bad}")
        if len(set(self.x.columns)) != self.x.shape[1]:
            raise ValidationError("duplicate circumstance names")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def circumstances(self) -> list[str]:
        return list(self.x.columns)

    def weighted_mean(self) -> float:
        return float(np.sum(self.w * self.y) / np.sum(self.w))

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            y=self.y[idx],
            x=self.x.iloc[idx],
            w=self.w[idx],
            ids=self.ids[idx],
            extra=self.extra.iloc[idx],
        )

    def drop(self, names: Iterable[str]) -> "Dataset":
        """Copy of the dataset without the named circumstances."""
        names = list(names)
        unknown = [m for m in names if m not in self.x.columns]
        if unknown:
            raise SchemaError(f"unknown circumstance(s): {unknown}")
        return Dataset(y=self.y, x=self.x.drop(columns=names), w=self.w, ids=self.ids, extra=self.extra)

    def column(self, name: str) -> pd.Series:
        if name in self.x.columns:
            return self.x[name]
        if name in self.extra.columns:
            return self.extra[name]
        raise SchemaError(f"no column named {name!r}")


@dataclass
class Schema:
    """Column roles for :func:`load_dataset`."""

    outcome: str
    circumstances: list[str]
    weight: str | None = None
    id: str | None = None
    isced: list[str] = field(default_factory=list)
    extra: list[str] = field(default_factory=list)
    delimiter: str = ","

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "Schema":
        allowed = {"outcome", "circumstances", "weight", "id", "isced", "extra", "delimiter"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ConfigError(f"unknown schema key(s): {sorted(unknown)}")
        if "outcome" not in cfg or "circumstances" not in cfg:
            raise ConfigError("schema needs 'outcome' and 'circumstances'")
        circs = cfg["circumstances"]
        if isinstance(circs, str) or not circs:
            raise ConfigError("'circumstances' must be a non-empty list")
        return cls(
            outcome=str(cfg["outcome"]),
            circumstances=[str(c) for c in circs],
            weight=cfg.get("weight"),
            id=cfg.get("id"),
            isced=[str(c) for c in cfg.get("isced") or []],
            extra=[str(c) for c in cfg.get("extra") or []],
            delimiter=cfg.get("delimiter", ","),
        )

    @classmethod
    def from_file(cls, path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
        if not isinstance(cfg, Mapping):
            raise ConfigError(f"schema file {path} is not a mapping")
        return cls.from_mapping(cfg)

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "circumstances": list(self.circumstances),
            "weight": self.weight,
            "id": self.id,
            "isced": list(self.isced),
            "extra": list(self.extra),
            "delimiter": self.delimiter,
        }


def _as_schema(schema) -> Schema:
    if isinstance(schema, Schema):
        return schema
    if isinstance(schema, Mapping):
        return Schema.from_mapping(schema)
    if isinstance(schema, (str, Path)):
        return Schema.from_file(schema)
    raise ConfigError(f"cannot interpret schema {schema!r}")


def _parse_numeric(col: pd.Series, name: str, what: str) -> np.ndarray:
    out = np.empty(len(col))
    for i, raw in enumerate(col):
        s = raw.strip()
        if s == "":
            raise LoadError(f"missing {what} ({name!r}) at row {i + 1}")
        try:
            out[i] = float(s)
        except ValueError:
            raise LoadError(f"non-numeric {what} {s!r} ({name!r}) at row {i + 1}") from None
    return out


def load_dataset(path, schema) -> Dataset:
    """Read a delimited text file with a header row into a :class:`Dataset`.

    Labels are kept verbatim as strings, row order is preserved and empty
    circumstance cells become the ``"missing"`` category.
    """
    schema = _as_schema(schema)
    try:
        df = pd.read_csv(
            path, sep=schema.delimiter, dtype=str, keep_default_na=False, encoding="utf-8"
        )
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc
    df.columns = [c.strip() for c in df.columns]

    needed = [schema.outcome, *schema.circumstances, *schema.isced, *schema.extra]
    needed += [c for c in (schema.weight, schema.id) if c]
    missing = [c for c in dict.fromkeys(needed) if c not in df.columns]
    if missing:
        raise ConfigError(f"schema column(s) not in {path}: {missing}")

    for c in schema.isced:
        mapped = []
        for i, raw in enumerate(df[c]):
            s = raw.strip()
            if s == "" and c != schema.outcome:
                mapped.append(MISSING_LABEL)
                continue
            if s == "":
                raise LoadError(f"missing outcome ({c!r}) at row {i + 1}")
            try:
                mapped.append(str(isced_to_years(s)))
            except ValidationError as exc:
                raise ValidationError(f"row {i + 1}, column {c!r}: {exc}") from None
        df[c] = mapped

    y = _parse_numeric(df[schema.outcome], schema.outcome, "outcome")
    bad = np.flatnonzero(y <= 0)
    if bad.size:
        raise ValidationError(f"nonpositive outcome {y[bad[0]]:g} at row {bad[0] + 1}")
    if schema.weight:
        w = _parse_numeric(df[schema.weight], schema.weight, "weight")
        bad = np.flatnonzero(w <= 0)
        if bad.size:
            raise ValidationError(f"nonpositive weight {w[bad[0]]:g} at row {bad[0] + 1}")
    else:
        w = np.ones(len(df))

    x = df[schema.circumstances].apply(lambda s: s.mask(s.str.strip() == "", MISSING_LABEL))
    ids = df[schema.id].to_numpy() if schema.id else np.arange(len(df))
    extra = df[schema.extra].copy() if schema.extra else None
    return Dataset(y=y, x=x, w=w, ids=ids, extra=extra)


# --------------------------------------------------------------------------
# design matrices

Term = tuple[tuple[str, str], ...]


@dataclass
class DesignMatrix:
    values: np.ndarray
    column_names: list[str]
    terms: list[Term]
    interaction_order: int

    @property
    def p(self) -> int:
        return self.values.shape[1]


def term_name(term: Term) -> str:
    return ":".join(f"{c}={lab}" for c, lab in term)


def encode_terms(x: pd.DataFrame, terms: Sequence[Term]) -> np.ndarray:
    """Evaluate product-of-indicator terms on circumstance rows."""
    n = len(x)
    out = np.ones((n, len(terms)))
    cache: dict[tuple[str, str], np.ndarray] = {}
    for j, term in enumerate(terms):
        col = np.ones(n, dtype=bool)
        for key in term:
            if key not in cache:
                c, lab = key
                if c not in x.columns:
                    raise SchemaError(f"circumstance {c!r} missing from rows")
                cache[key] = (x[c].astype(str) == lab).to_numpy()
            col &= cache[key]
        out[:, j] = col
    return out


def encode_design(d: Dataset | pd.DataFrame, order: int = 2, min_support: int = 5) -> DesignMatrix:
    """Dummy-encode circumstances and their interactions up to ``order``.

    Each circumstance drops its first label (sorted) as reference. Products
    only combine dummies from distinct circumstances, columns realised by
    fewer than ``min_support`` rows are dropped, and duplicated columns keep
    their first occurrence.
    """
    if int(order) != order or order < 1:
        raise ConfigError(f"interaction order must be an integer >= 1, got {order}")
    if int(min_support) != min_support or min_support < 1:
        raise ConfigError(f"min_support must be an integer >= 1, got {min_support}")
    x = d.x if isinstance(d, Dataset) else d.astype(str)
    circs = list(x.columns)

    mains: list[list[tuple[Term, np.ndarray]]] = []
    for c in circs:
        labels = sorted(pd.unique(x[c]))
        cols = []
        for lab in labels[1:]:
            col = (x[c] == lab).to_numpy()
            if col.sum() >= min_support:
                cols.append((((c, lab),), col))
        mains.append(cols)

    # level-wise growth; a product can only be supported if its factors are
    level = [(term, col, k) for k, cols in enumerate(mains) for term, col in cols]
    kept_terms: list[Term] = []
    kept_cols: list[np.ndarray] = []
    seen: set[bytes] = set()

    def keep(term, col):
        key = np.packbits(col).tobytes()
        if key in seen or not col.any():
            return
        seen.add(key)
        kept_terms.append(term)
        kept_cols.append(col)

    for term, col, _ in level:
        keep(term, col)
    for _ in range(2, int(order) + 1):
        nxt = []
        for term, col, last in level:
            for k in range(last + 1, len(circs)):
                for mterm, mcol in mains[k]:
                    prod = col & mcol
                    if prod.sum() >= min_support:
                        nxt.append((term + mterm, prod, k))
        for term, col, _ in nxt:
            keep(term, col)
        level = nxt
        if not level:
            break

    if not kept_terms:
        raise EncodingError("design has no columns after encoding and support pruning")
    values = np.column_stack(kept_cols).astype(float)
    return DesignMatrix(
        values=values,
        column_names=[term_name(t) for t in kept_terms],
        terms=kept_terms,
        interaction_order=int(order),
    )


# --------------------------------------------------------------------------
# subsetting

_OPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<=": operator.le,
    ">=": operator.ge,
    "<": operator.lt,
    ">": operator.gt,
}
_NEGATE = {"==": "!=", "!=": "==", "<=": ">", ">": "<=", ">=": "<", "<": ">=", "in": "not in", "not in": "in"}
_PRED_RE = re.compile(r"^\s*([^<>=!]+?)\s*(==|!=|<=|>=|<|>|=| not in | in )\s*(.+?)\s*$")


@dataclass(frozen=True)
class Predicate:
    """Row filter ``column op value``; ``in`` takes a comma-separated list."""

    column: str
    op: str
    value: str | tuple[str, ...]

    @classmethod
    def parse(cls, text: str) -> "Predicate":
        m = _PRED_RE.match(text)
        if not m:
            raise ConfigError(f"cannot parse subset predicate {text!r}")
        col, op, val = m.group(1).strip(), m.group(2).strip(), m.group(3).strip()
        if op == "=":
            op = "=="
        if op in ("in", "not in"):
            return cls(col, op, tuple(v.strip() for v in val.split(",")))
        return cls(col, op, val)

    def negate(self) -> "Predicate":
        return Predicate(self.column, _NEGATE[self.op], self.value)

    def mask(self, d: Dataset) -> np.ndarray:
        col = d.column(self.column).astype(str).str.strip()
        if self.op in ("in", "not in"):
            m = col.isin(self.value).to_numpy()
            return m if self.op == "in" else ~m
        fn = _OPS[self.op]
        num = pd.to_numeric(col, errors="coerce")
        try:
            target = float(self.value)
        except ValueError:
            target = None
        if target is not None and num.notna().all():
            return fn(num.to_numpy(dtype=float), target)
        if self.op not in ("==", "!="):
            raise ConfigError(f"ordered comparison on non-numeric column {self.column!r}")
        return fn(col.to_numpy(), self.value)

    def __str__(self):
        val = ",".join(self.value) if isinstance(self.value, tuple) else self.value
        return f"{self.column}{self.op if self.op in _OPS else ' ' + self.op + ' '}{val}"


def subset(d: Dataset, predicate: Predicate | str | Sequence[Predicate | str]) -> Dataset:
    """Rows of ``d`` satisfying every predicate; ``d`` itself is untouched."""
    preds = [predicate] if isinstance(predicate, (Predicate, str)) else list(predicate)
    preds = [Predicate.parse(p) if isinstance(p, str) else p for p in preds]
    keep = np.ones(d.n, dtype=bool)
    for p in preds:
        keep &= p.mask(d)
    idx = np.flatnonzero(keep)
    if idx.size < 2:
        desc = " & ".join(str(p) for p in preds)
        raise SubsetError(f"subset {desc!r} leaves {idx.size} row(s); need at least 2")
    return d.take(idx)


def partition_by(d: Dataset, column: str) -> dict[str, Dataset]:
    """Split a dataset by the labels of one column, in sorted label order."""
    col = d.column(column).astype(str)
    out = {}
    for lab in sorted(col.unique()):
        idx = np.flatnonzero((col == lab).to_numpy())
        if idx.size >= 2:
            out[lab] = d.take(idx)
    return out


def dataset_from_frame(
    df: pd.DataFrame, outcome: str, circumstances: Sequence[str], weight: str | None = None
) -> Dataset:
    """Build a dataset from an in-memory frame (no ISCED mapping)."""
    x = df[list(circumstances)].astype(str)
    w = df[weight].to_numpy(dtype=float) if weight else None
    rest = [c for c in df.columns if c not in set(circumstances) | {outcome, weight}]
    return Dataset(y=df[outcome].to_numpy(dtype=float), x=x, w=w, extra=df[rest] if rest else None)


__all__ = [
    "Dataset",
    "DesignMatrix",
    "ISCED_YEARS",
    "MISSING_LABEL",
    "Predicate",
    "Schema",
    "dataset_from_frame",
    "encode_design",
    "encode_terms",
    "isced_to_years",
    "load_dataset",
    "partition_by",
    "subset",
    "term_name",
]
