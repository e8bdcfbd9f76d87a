"""Columnar analysis data: outcomes, binary treatments and a covariate matrix."""

from dataclasses import dataclass, field
import logging
import os

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MISSING_TOKENS = ["NA", ""]


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class ValidationReport:
    raw_rows: int
    dropped_rows: int
    drop_reasons: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    column_summaries: dict = field(default_factory=dict)

    @property
    def retained_rows(self):
        return self.raw_rows - self.dropped_rows


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable (Y, W, D) container.

    ``covariates`` is a dense float matrix with one row per unit; its column
    names are kept in ``covariate_names`` in schema order.
    """

    outcomes: np.ndarray
    treatments: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple = ()
    outcome_name: str = "y"
    treatment_name: str = "d"
    report: ValidationReport = None
    levels: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.array(self.outcomes, dtype=np.float64)
        d = np.array(self.treatments)
        x = np.array(self.covariates, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else np.zeros((y.shape[0], 0))
        if y.ndim != 1 or y.shape[0] == 0:
            raise DataError("outcomes must be a nonempty vector")
        if d.shape != y.shape or x.shape[0] != y.shape[0]:
            raise DataError(
                f"row count mismatch: outcomes {y.shape[0]}, treatments {d.shape[0]}, covariates {x.shape[0]}"
            )
        if not np.isin(d, (0, 1)).all():
            raise DataError("treatment values must be 0 or 1")
        if not (np.isfinite(y).all() and np.isfinite(x).all()):
            raise DataError("outcomes and covariates must be finite")
        names = tuple(self.covariate_names) or tuple(f"x{j}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError("covariate_names length does not match covariate columns")
        for arr in (y, x):
            arr.setflags(write=False)
        d = d.astype(np.int8)
        d.setflags(write=False)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "treatments", d)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "covariate_names", names)

    @property
    def unit_count(self):
        return self.outcomes.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.covariate_names == other.covariate_names
            and np.array_equal(self.outcomes, other.outcomes)
            and np.array_equal(self.treatments, other.treatments)
            and np.array_equal(self.covariates, other.covariates)
        )

    def to_frame(self):
        df = pd.DataFrame(self.covariates, columns=list(self.covariate_names))
        df.insert(0, self.treatment_name, self.treatments.astype(int))
        df.insert(0, self.outcome_name, self.outcomes)
        return df

    def to_csv(self, path):
        """Write with round-trip float formatting so reloading is lossless."""
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def _summaries(df):
    out = {}
    for col in df.columns:
        s = pd.to_numeric(df[col], errors="coerce")
        has = bool(s.notna().any())
        with np.errstate(over="ignore"):  # huge finite values may overflow the mean
            out[col] = {
                "min": float(s.min()) if has else float("nan"),
                "max": float(s.max()) if has else float("nan"),
                "mean": float(s.mean()) if has else float("nan"),
                "missing": int(s.isna().sum()),
            }
    return out


def load_csv(path, outcome, treatment, covariates=(), categorical=()):
    """Load a comma-separated file into a :class:`Dataset`.

    Rows with a missing or non-finite value in any mapped column are dropped
    and counted in the attached report. ``NA`` and empty fields are missing.
    Columns named in ``categorical`` are read as labels and stored as integer
    codes in sorted label order (see :func:`one_hot_expand`); they are
    appended to the covariates if not already listed.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    covariates = list(covariates) + [c for c in categorical if c not in covariates]
    raw = pd.read_csv(
        path, na_values=MISSING_TOKENS, keep_default_na=False, float_precision="round_trip"
    )
    wanted = [outcome, treatment] + covariates
    missing = [c for c in wanted if c not in raw.columns]
    if missing:
        raise DataError(f"column(s) not found in {path}: {', '.join(missing)}")
    if len(set(wanted)) != len(wanted):
        raise DataError("a column is mapped to more than one role")

    df = raw[wanted].copy()
    levels = {}
    for col in wanted:
        if col in categorical:
            labels = raw[col].astype("string")
            cats = sorted(labels.dropna().unique(), key=_sort_key)
            levels[col] = tuple(cats)
            codes = {c: float(k) for k, c in enumerate(cats)}
            df[col] = [codes.get(v, np.nan) if not pd.isna(v) else np.nan for v in labels]
        else:
            df[col] = pd.to_numeric(raw[col], errors="coerce")
    df = df.astype(np.float64)
    bad = ~np.isfinite(df.to_numpy(dtype=np.float64)).all(axis=1)
    reasons = {}
    for col in wanted:
        n_bad = int((~np.isfinite(df[col].to_numpy(dtype=np.float64))).sum())
        if n_bad:
            reasons[col] = n_bad
    kept = df.loc[~bad]
    warnings = []
    if bad.any():
        warnings.append(f"dropped {int(bad.sum())} row(s) with missing or non-finite values")
        logger.warning(warnings[-1])
    if kept.shape[0] == 0:
        raise DataError("no rows left after dropping missing values")
    d = kept[treatment].to_numpy()
    if not np.isin(d, (0, 1)).all():
        raise DataError(f"treatment column {treatment!r} has non-binary values (other than 0/1)")
    report = ValidationReport(
        raw_rows=int(raw.shape[0]),
        dropped_rows=int(bad.sum()),
        drop_reasons=reasons,
        warnings=warnings,
        column_summaries=_summaries(df),
    )
    return Dataset(
        outcomes=kept[outcome].to_numpy(dtype=np.float64),
        treatments=d.astype(np.int8),
        covariates=kept[covariates].to_numpy(dtype=np.float64).reshape(kept.shape[0], len(covariates)),
        covariate_names=tuple(covariates),
        outcome_name=outcome,
        treatment_name=treatment,
        report=report,
        levels=levels,
    )


def _sort_key(label):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def one_hot_expand(dataset, column):
    """Replace a categorical covariate by k-1 reference-coded indicator columns.

    The reference level is the smallest category. A column with a single
    category is dropped with a warning.
    """
    names = list(dataset.covariate_names)
    if column not in names:
        raise DataError(f"covariate {column!r} not found")
    j = names.index(column)
    codes = dataset.covariates[:, j]
    levels = np.unique(codes)
    x = np.delete(dataset.covariates, j, axis=1)
    del names[j]
    if levels.shape[0] == 1:
        logger.warning("column %r has a single category; dropped", column)
        indicators = np.zeros((codes.shape[0], 0))
        new_names = []
    else:
        indicators = (codes[:, None] == levels[None, 1:]).astype(np.float64)
        labels = dataset.levels.get(column)
        new_names = [
            f"{column}={labels[int(v)] if labels else _fmt(v)}" for v in levels[1:]
        ]
    x = np.hstack([x[:, :j], indicators, x[:, j:]])
    names = names[:j] + new_names + names[j:]
    return Dataset(
        outcomes=dataset.outcomes,
        treatments=dataset.treatments,
        covariates=x,
        covariate_names=tuple(names),
        outcome_name=dataset.outcome_name,
        treatment_name=dataset.treatment_name,
        report=dataset.report,
        levels={k: v for k, v in dataset.levels.items() if k != column},
    )


def _fmt(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))
