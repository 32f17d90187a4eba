"""
Readers for market inputs: survival-probability or hazard-rate quotes per date and name, and square
correlation matrices with a name header.
"""

import pathlib
import warnings

import numpy as np
import pandas as pd

from .errors import DomainError, ShapeError
from .model import MarketState, survival_from_hazard

QUOTE_COLUMNS = ["date", "name", "maturity_years", "survival_prob", "recovery"]


def _line(index):
    return int(index) + 2  # header is line 1


def ingest_quotes(path_or_frame) -> pd.DataFrame:
    """
    Read and validate a quote file with columns date, name, maturity_years, recovery and either
    survival_prob or hazard_rate (one convention per file). Hazard rates are converted with
    Q = exp(-h maturity_years). Errors name the offending line of the file.
    """
    if isinstance(path_or_frame, pd.DataFrame):
        df = path_or_frame.reset_index(drop=True)
    else:
        path = pathlib.Path(path_or_frame)
        if path.stat().st_size == 0:
            warnings.warn(f"Quote file {path} is empty")
            return pd.DataFrame(columns=QUOTE_COLUMNS)
        df = pd.read_csv(path)
    if df.empty:
        warnings.warn("Quote file has no rows")
        return pd.DataFrame(columns=QUOTE_COLUMNS)
    has_q, has_h = "survival_prob" in df.columns, "hazard_rate" in df.columns
    if not (has_q or has_h):
        raise ShapeError("Quote file needs a survival_prob or a hazard_rate column")
    set_q = df["survival_prob"].notna().to_numpy() if has_q else np.zeros(len(df), dtype=bool)
    set_h = df["hazard_rate"].notna().to_numpy() if has_h else np.zeros(len(df), dtype=bool)
    both, neither = set_q & set_h, ~(set_q | set_h)
    if both.any():
        raise DomainError(f"Line {_line(np.flatnonzero(both)[0])}: mixed survival_prob and hazard_rate in one row")
    if neither.any():
        raise DomainError(f"Line {_line(np.flatnonzero(neither)[0])}: needs a survival_prob or a hazard_rate")
    # one convention per file, set by the first row
    switched = set_h != set_h[0]
    if switched.any():
        line = _line(np.flatnonzero(switched)[0])
        raise DomainError(f"Line {line}: mixed survival_prob and hazard_rate conventions")
    has_h = bool(set_h[0])
    missing = [column for column in ("date", "name", "maturity_years", "recovery") if column not in df.columns]
    if missing:
        raise ShapeError(f"Quote file misses columns {missing}")

    df = df.assign(name=df["name"].astype(str), date=df["date"].astype(str))
    duplicated = df.duplicated(subset=["date", "name"], keep="first")
    if duplicated.any():
        row = duplicated.idxmax()
        raise DomainError(f"Line {_line(row)}: duplicate quote for {df.at[row, 'name']} on {df.at[row, 'date']}")
    rows = []
    for row in df.itertuples():
        maturity = float(row.maturity_years)
        if not maturity > 0:
            raise DomainError(f"Line {_line(row.Index)}: maturity must be positive, got {row.maturity_years}")
        if has_h:
            hazard = float(row.hazard_rate)
            if not (np.isfinite(hazard) and hazard >= 0):
                raise DomainError(f"Line {_line(row.Index)}: hazard rate must be non-negative, got {row.hazard_rate}")
            survival = float(survival_from_hazard(hazard, 0.0, maturity))
        else:
            survival = float(row.survival_prob)
        if not 0 < survival < 1:
            raise DomainError(f"Line {_line(row.Index)}: survival probability must be in (0, 1), got {survival}")
        recovery = float(row.recovery)
        if not 0 <= recovery < 1:
            raise DomainError(f"Line {_line(row.Index)}: recovery must be in [0, 1), got {row.recovery}")
        rows.append((row.date, row.name, maturity, survival, recovery))
    return pd.DataFrame(rows, columns=QUOTE_COLUMNS)


def market_states(quotes: pd.DataFrame) -> pd.Series:
    """MarketState per date (names in file order); all quotes of one date must share the maturity."""
    states = {}
    for date, group in quotes.groupby("date", sort=False):
        maturities = group["maturity_years"].unique()
        if maturities.size != 1:
            row = group.index[group["maturity_years"] != maturities[0]][0]
            raise DomainError(f"Line {_line(row)}: quotes on {date} have different maturities")
        states[date] = MarketState(
            tuple(group["name"]), float(maturities[0]), group["survival_prob"].to_numpy(), group["recovery"].to_numpy()
        )
    return pd.Series(states, dtype=object, name="market")


def read_matrix_csv(path, names=None) -> np.ndarray:
    """
    Square matrix from a CSV whose header row lists the names; with names given, rows and columns are
    reordered to that order.
    """
    df = pd.read_csv(path)
    header = [str(column) for column in df.columns]
    if df.shape[0] != df.shape[1]:
        raise ShapeError(f"Matrix file {path} is not square: {df.shape[0]} rows, {df.shape[1]} columns")
    matrix = df.to_numpy(dtype=float)
    if names is None:
        return matrix
    names = [str(name) for name in names]
    unknown = [name for name in names if name not in header]
    if unknown or len(names) != len(header):
        raise ShapeError(f"Matrix header {header} does not match the names {names}")
    order = [header.index(name) for name in names]
    return matrix[np.ix_(order, order)]
