"""Data ingestion, validation, mediator standardization, and seeded reordering.

A :class:`Dataset` is an immutable columnar store of right-censored survival
records: follow-up time on the log scale, an event indicator, a binary
exposure, a matrix of candidate mediators, and optional confounders.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.special import ndtri
from scipy.stats import rankdata

from .errors import DomainError, ParseError, PositivityError, SchemaError, ValidationError

STANDARDIZATIONS = ("raw", "zscore", "normal_score")

# Column-block size used when transforming very wide mediator matrices.
_CHUNK = 4096


@dataclass(frozen=True)
class Observation:
    """One record: (x, delta, a, b, z) with x = min(event, censoring) on log scale."""

    x: float
    delta: int
    a: int
    b: np.ndarray
    z: np.ndarray | None = None


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray                      # (n,) float, log-scale follow-up times
    delta: np.ndarray                  # (n,) uint8, 1 = event observed
    a: np.ndarray                      # (n,) uint8, binary exposure
    b: np.ndarray                      # (n, p) float, mediators
    z: np.ndarray | None = None        # (n, q) float, confounders
    mediator_names: tuple[str, ...] = ()
    confounder_names: tuple[str, ...] = ()
    standardization: str = "raw"

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        delta_raw = np.asarray(self.delta)
        a_raw = np.asarray(self.a)
        b = np.ascontiguousarray(self.b, dtype=np.float64)
        z = None if self.z is None else np.ascontiguousarray(self.z, dtype=np.float64)
        if b.ndim != 2:
            raise ValidationError("mediator matrix must be 2-dimensional")
        n = x.shape[0]
        if not (delta_raw.shape == (n,) and a_raw.shape == (n,) and b.shape[0] == n):
            raise ValidationError("column lengths disagree")
        if z is not None and (z.ndim != 2 or z.shape[0] != n):
            raise ValidationError("confounder matrix shape disagrees with n")
        if n == 0:
            raise ValidationError("empty dataset")
        if not np.all(np.isfinite(x)):
            raise DomainError("non-finite follow-up time")
        if not np.all(np.isfinite(b)):
            raise DomainError("non-finite mediator value")
        if z is not None and not np.all(np.isfinite(z)):
            raise DomainError("non-finite confounder value")
        if not np.all(np.isin(delta_raw, (0, 1))):
            raise DomainError("event indicator must be 0 or 1")
        if not np.all(np.isin(a_raw, (0, 1))):
            raise DomainError("exposure must be 0 or 1")
        delta = np.ascontiguousarray(delta_raw, dtype=np.uint8)
        a = np.ascontiguousarray(a_raw, dtype=np.uint8)
        if not (np.any(a == 1) and np.any(a == 0)):
            raise PositivityError("need at least one exposed and one unexposed record")
        names = self.mediator_names or tuple(f"b{k + 1}" for k in range(b.shape[1]))
        if len(names) != b.shape[1]:
            raise ValidationError("mediator_names length disagrees with p")
        znames = self.confounder_names
        if z is not None and not znames:
            znames = tuple(f"z{k + 1}" for k in range(z.shape[1]))
        if self.standardization not in STANDARDIZATIONS:
            raise ValidationError(f"unknown standardization {self.standardization!r}")
        for arr in (x, delta, a, b) + (() if z is None else (z,)):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "mediator_names", tuple(names))
        object.__setattr__(self, "confounder_names", tuple(znames))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.b.shape[1]

    @property
    def q(self) -> int:
        return 0 if self.z is None else self.z.shape[1]

    def observation(self, i: int) -> Observation:
        return Observation(
            x=float(self.x[i]),
            delta=int(self.delta[i]),
            a=int(self.a[i]),
            b=self.b[i],
            z=None if self.z is None else self.z[i],
        )

    def take(self, index: np.ndarray) -> "Dataset":
        """Row subset/permutation; keeps names and standardization state."""
        return Dataset(
            x=self.x[index],
            delta=self.delta[index],
            a=self.a[index],
            b=self.b[index],
            z=None if self.z is None else self.z[index],
            mediator_names=self.mediator_names,
            confounder_names=self.confounder_names,
            standardization=self.standardization,
        )


@dataclass(frozen=True)
class CsvSchema:
    """Mapping from CSV column names to dataset roles.

    ``mediators`` may be an explicit list of column names or a name prefix
    (every column starting with the prefix, in file order). ``log_transform``
    declares that the time column holds raw (untransformed) times, which are
    log-transformed at ingestion; raw times must then be strictly positive.
    """

    time: str
    status: str
    exposure: str
    mediators: Sequence[str] | str | None = None
    confounders: Sequence[str] = ()
    log_transform: bool = False


def _binary_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    col = _numeric_column(frame, name)
    bad = ~np.isin(col, (0.0, 1.0))
    if np.any(bad):
        row = int(np.argmax(bad))
        raise DomainError(f"column {name!r} must contain only 0/1; row {row + 1} has {col[row]!r}")
    return col.astype(np.uint8)


def _numeric_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    raw = frame[name]
    col = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(col)
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ParseError(f"non-numeric or missing value in column {name!r}, row {row + 1}: {raw.iloc[row]!r}")
    return col


def resolve_mediator_columns(columns: Sequence[str], schema: CsvSchema) -> list[str]:
    reserved = {schema.time, schema.status, schema.exposure, *schema.confounders}
    spec = schema.mediators
    if spec is None:
        chosen = [c for c in columns if c not in reserved]
    elif isinstance(spec, str):
        listed = [s.strip() for s in spec.split(",") if s.strip()]
        if all(s in columns for s in listed) and listed:
            chosen = listed
        else:
            chosen = [c for c in columns if c.startswith(spec) and c not in reserved]
    else:
        chosen = list(spec)
    if not chosen:
        raise SchemaError("no mediator columns resolved")
    missing = [c for c in chosen if c not in columns]
    if missing:
        raise SchemaError(f"mediator columns not in file: {missing}")
    return chosen


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a header-ed, comma-delimited, UTF-8 CSV into a :class:`Dataset`."""
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        raise SchemaError(f"file not found: {path}") from None
    for name in (schema.time, schema.status, schema.exposure, *schema.confounders):
        if name not in frame.columns:
            raise SchemaError(f"missing column {name!r} in {path}")
    med_cols = resolve_mediator_columns(list(frame.columns), schema)

    time = _numeric_column(frame, schema.time)
    if schema.log_transform:
        bad = time <= 0.0
        if np.any(bad):
            row = int(np.argmax(bad))
            raise DomainError(
                f"raw time must be positive for log transform; row {row + 1} has {time[row]!r}"
            )
        time = np.log(time)
    status = _binary_column(frame, schema.status)
    exposure = _binary_column(frame, schema.exposure)
    b = np.column_stack([_numeric_column(frame, c) for c in med_cols])
    z = None
    if schema.confounders:
        z = np.column_stack([_numeric_column(frame, c) for c in schema.confounders])
    return Dataset(
        x=time,
        delta=status,
        a=exposure,
        b=b,
        z=z,
        mediator_names=tuple(med_cols),
        confounder_names=tuple(schema.confounders),
    )


def _zscore_block(block: np.ndarray, names: Sequence[str], offset: int) -> np.ndarray:
    mean = block.mean(axis=0)
    sd = block.std(axis=0, ddof=1)
    dead = sd <= 0.0
    if np.any(dead):
        k = int(np.argmax(dead))
        raise DomainError(f"mediator column {names[offset + k]!r} (k={offset + k + 1}) is constant")
    return (block - mean) / sd


def _normal_score_block(block: np.ndarray) -> np.ndarray:
    n = block.shape[0]
    ranks = rankdata(block, method="average", axis=0)
    scores = ndtri((ranks - 0.375) / (n + 0.25))
    # ties make the rank offsets asymmetric; recenter so columns stay mean zero
    return scores - scores.mean(axis=0)


def standardize_mediators(d: Dataset, method: str) -> Dataset:
    """Standardize every mediator column.

    ``zscore`` centers and scales to unit sample standard deviation.
    ``normal_score`` replaces each column by the inverse-normal transform of
    its within-column average ranks, using the (rank - 3/8)/(n + 1/4) offsets.
    """
    if method not in ("zscore", "normal_score"):
        raise ValidationError(f"unknown standardization method {method!r}")
    if d.n < 2:
        raise ValidationError("standardization needs at least 2 rows")
    out = np.empty_like(d.b)
    for lo in range(0, d.p, _CHUNK):
        hi = min(lo + _CHUNK, d.p)
        block = d.b[:, lo:hi]
        if method == "zscore":
            out[:, lo:hi] = _zscore_block(block, d.mediator_names, lo)
        else:
            out[:, lo:hi] = _normal_score_block(block)
    return replace(d, b=out, standardization=method)


def random_ordering(d: Dataset, seed: int) -> Dataset:
    """Return the dataset with rows shuffled by a seeded Fisher-Yates pass.

    The permutation is drawn from numpy's PCG64 generator, whose
    ``permutation`` method implements the Fisher-Yates shuffle; the same
    (dataset, seed) pair always produces the same row order.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    return d.take(rng.permutation(d.n))
