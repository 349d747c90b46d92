"""Dataset container, CSV ingestion and column standardization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

MIN_SAMPLES = 4


class DataError(ValueError):
    """Raised when input data cannot be turned into a valid Dataset."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    feature_names: tuple[str, ...]
    response: np.ndarray
    response_kind: str = "continuous"  # or "binary"
    dropped_rows: int = 0

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=float)
        y = np.asarray(self.response, dtype=float).ravel()
        if X.ndim != 2:
            raise DataError("features must be a 2-d array")
        if y.shape[0] != X.shape[0]:
            raise DataError(f"response has {y.shape[0]} entries but there are {X.shape[0]} rows")
        if X.shape[0] < MIN_SAMPLES:
            raise DataError(f"too few samples: need at least {MIN_SAMPLES} complete rows, got {X.shape[0]}")
        if np.isnan(X).any() or np.isnan(y).any():
            raise DataError("missing values present")
        if self.response_kind not in ("continuous", "binary"):
            raise DataError(f"unknown response kind {self.response_kind!r}")
        if self.response_kind == "binary" and not np.isin(y, (0.0, 1.0)).all():
            raise DataError("binary response must be coded 0/1")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != X.shape[1]:
            raise DataError("feature_names length does not match feature count")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def task(self) -> str:
        return "classification" if self.response_kind == "binary" else "regression"

    @classmethod
    def from_arrays(cls, X, y, feature_names=None, response_kind="auto") -> "Dataset":
        X = np.asarray(X, dtype=float)
        if feature_names is None:
            feature_names = [f"x{j + 1}" for j in range(X.shape[1])]
        y, kind = _encode_response(np.asarray(y, dtype=float).ravel(), response_kind)
        return cls(X, tuple(feature_names), y, kind)


@dataclass(frozen=True)
class StandardizationReport:
    means: np.ndarray
    sds: np.ndarray
    constant_columns: list[int] = field(default_factory=list)


def _encode_response(y, kind):
    values = np.unique(y)
    if kind == "auto":
        kind = "binary" if values.size == 2 else "continuous"
    if kind == "binary":
        if values.size != 2:
            raise DataError(f"binary response must have exactly 2 distinct values, found {values.size}")
        y = (y == values[1]).astype(float)
        return y, "binary"
    if kind != "continuous":
        raise DataError(f"unknown response kind {kind!r}")
    return y, "continuous"


def _cell_float(text):
    try:
        v = float(text)
    except (TypeError, ValueError):
        return np.nan
    return v if np.isfinite(v) else np.nan


def _parse_floats(col: pd.Series) -> pd.Series:
    # float() rounds correctly; pandas' fast parser can be off by an ulp
    return col.map(_cell_float).astype(float)


def load_csv(path, response=None, response_file=None, response_kind="auto") -> Dataset:
    """Read a samples-by-features CSV with a header row.

    The response is either the column named ``response`` or the single column
    of ``response_file``. Rows with an empty or non-numeric cell in any used
    column are dropped; the count is kept on ``Dataset.dropped_rows``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    if (response is None) == (response_file is None):
        raise DataError("give exactly one of a response column name or a response file")

    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    if response is not None:
        if response not in frame.columns:
            raise DataError(f"response column {response!r} not found in {path}")
        y_raw = frame.pop(response)
    else:
        rpath = Path(response_file)
        if not rpath.is_file():
            raise DataError(f"no such file: {rpath}")
        rframe = pd.read_csv(rpath, dtype=str, keep_default_na=False, skipinitialspace=True)
        if rframe.shape[1] != 1:
            raise DataError("response file must have exactly one column")
        if len(rframe) != len(frame):
            raise DataError(f"response file has {len(rframe)} rows, data has {len(frame)}")
        y_raw = rframe.iloc[:, 0]

    numeric = frame.apply(_parse_floats)
    y_num = _parse_floats(y_raw)
    complete = numeric.notna().all(axis=1).to_numpy() & y_num.notna().to_numpy()
    X = numeric.to_numpy(dtype=float)[complete]
    y = y_num.to_numpy(dtype=float)[complete]
    if X.shape[0] < MIN_SAMPLES:
        raise DataError(f"too few samples: need at least {MIN_SAMPLES} complete rows, got {X.shape[0]}")

    y, kind = _encode_response(y, response_kind)
    return Dataset(X, tuple(frame.columns), y, kind, dropped_rows=int((~complete).sum()))


def save_csv(d: Dataset, path, response_name="y") -> None:
    """Write features plus response as a CSV readable by ``load_csv``."""
    if response_name in d.feature_names:
        raise DataError(f"response name {response_name!r} collides with a feature name")
    frame = pd.DataFrame(d.features, columns=list(d.feature_names))
    frame[response_name] = d.response
    # repr-exact floats so a reload is bit-identical
    frame.to_csv(path, index=False, float_format="%.17g")


def standardize_matrix(X: np.ndarray) -> tuple[np.ndarray, StandardizationReport]:
    """Center columns and scale to unit population variance; zero out constant columns."""
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    centered = X - means
    sds = np.sqrt((centered ** 2).mean(axis=0))
    scale = np.abs(means) + 1.0
    constant = sds <= 1e-12 * scale
    safe = np.where(constant, 1.0, sds)
    Z = centered / safe
    Z[:, constant] = 0.0
    return Z, StandardizationReport(means, sds, [int(j) for j in np.flatnonzero(constant)])


def standardize_columns(d: Dataset) -> tuple[Dataset, StandardizationReport]:
    Z, report = standardize_matrix(d.features)
    return replace(d, features=Z), report
