"""Price panels, log returns, sliding windows and correlation-based coupling.

The coupling between two stocks is built from the equal-time Pearson
correlation of their normalized daily log returns inside one window,
``C_ij = sqrt(2 (1 + R_ij))``, which maps perfect anti-correlation to 0 and
perfect correlation to 2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError

logger = logging.getLogger(__name__)

LONG_COLUMNS = ("date", "ticker", "close")


@dataclass(frozen=True)
class PricePanel:
    """Rectangular ticker x date matrix of daily close prices."""

    tickers: tuple[str, ...]
    dates: np.ndarray  # datetime64[D], strictly increasing
    prices: np.ndarray  # shape (N, D)
    dropped: tuple[str, ...] = field(default=())

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=np.float64)
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "tickers", tuple(str(t) for t in self.tickers))
        if prices.ndim != 2 or prices.shape != (len(self.tickers), len(dates)):
            raise DataError(
                f"price matrix shape {prices.shape} does not match "
                f"{len(self.tickers)} tickers x {len(dates)} dates"
            )
        if len(set(self.tickers)) != len(self.tickers):
            raise DataError("tickers are not unique")
        if len(dates) > 1 and not np.all(dates[1:] > dates[:-1]):
            raise DataError("dates are not strictly increasing")
        if not np.all(np.isfinite(prices)):
            raise DataError("price panel has missing or non-finite cells")
        if np.any(prices <= 0):
            bad = sorted({self.tickers[i] for i in np.nonzero(prices <= 0)[0]})
            raise DataError(f"non-positive prices for tickers: {', '.join(bad)}")

    @property
    def n_stocks(self) -> int:
        return self.prices.shape[0]

    @property
    def n_dates(self) -> int:
        return self.prices.shape[1]


@dataclass(frozen=True)
class ReturnMatrix:
    """Daily log returns; column t is the return from date t to date t+1."""

    tickers: tuple[str, ...]
    returns: np.ndarray  # shape (N, D - 1)
    dates: np.ndarray  # end date of each return, length D - 1

    @property
    def n_columns(self) -> int:
        return self.returns.shape[1]


@dataclass(frozen=True)
class WindowSpec:
    width: int = 62
    step: int = 1

    def __post_init__(self):
        if int(self.width) != self.width or self.width < 2:
            raise DataError(f"window width must be an integer >= 2, got {self.width}")
        if int(self.step) != self.step or self.step < 1:
            raise DataError(f"window step must be an integer >= 1, got {self.step}")


@dataclass(frozen=True)
class CorrMatrix:
    values: np.ndarray
    window_index: int = 0
    zero_variance: tuple[int, ...] = ()


@dataclass(frozen=True)
class CouplingMatrix:
    values: np.ndarray
    window_index: int = 0

    @property
    def n(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# Ingestion


def _read_table(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    if frame.shape[1] < 2 or frame.empty:
        raise DataError(f"{path} has no price data")
    return frame


def _detect_format(frame: pd.DataFrame) -> str:
    lowered = {str(c).strip().lower() for c in frame.columns}
    return "long" if set(LONG_COLUMNS) <= lowered else "wide"


def _to_wide(frame: pd.DataFrame, fmt: str, path: Path) -> pd.DataFrame:
    if fmt == "long":
        frame = frame.rename(columns={c: str(c).strip().lower() for c in frame.columns})
        missing = [c for c in LONG_COLUMNS if c not in frame.columns]
        if missing:
            raise DataError(f"{path}: long format needs columns {LONG_COLUMNS}, missing {missing}")
        frame = frame[list(LONG_COLUMNS)]
        if frame.duplicated(["date", "ticker"]).any():
            raise DataError(f"{path}: duplicate (date, ticker) rows")
        wide = frame.pivot(index="date", columns="ticker", values="close")
    elif fmt == "wide":
        date_col = frame.columns[0]
        if frame[date_col].duplicated().any():
            raise DataError(f"{path}: duplicate dates")
        wide = frame.set_index(date_col)
    else:
        raise DataError(f"unknown panel format {fmt!r}; expected 'wide', 'long' or 'auto'")
    wide.columns = [str(c).strip() for c in wide.columns]
    try:
        wide.index = pd.to_datetime(wide.index, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: dates must be ISO-8601 ({exc})") from exc
    try:
        wide = wide.apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: non-numeric price cell ({exc})") from exc
    return wide.sort_index()


def load_prices(path, format: str = "auto", start=None, end=None) -> PricePanel:
    """Read a close-price CSV in wide (date + one column per ticker) or long
    (date, ticker, close) layout.

    Tickers without a complete history over ``[start, end]`` are dropped,
    logged, and listed in ``PricePanel.dropped``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"price file not found: {path}")
    frame = _read_table(path)
    fmt = _detect_format(frame) if format == "auto" else format
    wide = _to_wide(frame, fmt, path)

    if start is not None:
        wide = wide.loc[wide.index >= pd.Timestamp(start)]
    if end is not None:
        wide = wide.loc[wide.index <= pd.Timestamp(end)]
    if wide.empty:
        raise DataError(f"{path}: no dates in the requested range")

    incomplete = wide.columns[wide.isna().any(axis=0)]
    dropped = tuple(sorted(incomplete))
    if dropped:
        logger.warning("dropping %d tickers without full history: %s", len(dropped), ", ".join(dropped))
        wide = wide.drop(columns=list(incomplete))
    if wide.shape[1] == 0:
        raise DataError(f"{path}: empty panel after dropping incomplete tickers")

    return PricePanel(
        tickers=tuple(wide.columns),
        dates=wide.index.values.astype("datetime64[D]"),
        prices=wide.to_numpy(dtype=np.float64).T,
        dropped=dropped,
    )


def write_prices(panel: PricePanel, path) -> None:
    """Write the canonical wide CSV layout."""
    frame = pd.DataFrame(
        panel.prices.T,
        index=pd.Index(np.datetime_as_string(panel.dates, unit="D"), name="date"),
        columns=list(panel.tickers),
    )
    frame.to_csv(path)


# ---------------------------------------------------------------------------
# Returns and windows


def log_returns(panel: PricePanel) -> ReturnMatrix:
    if panel.n_dates < 2:
        raise DataError("need at least two dates to form returns")
    logp = np.log(panel.prices)
    return ReturnMatrix(
        tickers=panel.tickers,
        returns=logp[:, 1:] - logp[:, :-1],
        dates=panel.dates[1:],
    )


def window_count(n_columns: int, spec: WindowSpec) -> int:
    if spec.width > n_columns:
        return 0
    return (n_columns - spec.width) // spec.step + 1


def sliding_windows(returns, spec: WindowSpec = WindowSpec()) -> list[range]:
    """Column ranges of every full window; ``returns`` may also be a column count."""
    n_cols = returns if isinstance(returns, (int, np.integer)) else returns.n_columns
    if spec.width > n_cols:
        raise DataError(
            f"window width {spec.width} exceeds the {n_cols} available return columns"
        )
    return [
        range(start, start + spec.width)
        for start in range(0, n_cols - spec.width + 1, spec.step)
    ]


# ---------------------------------------------------------------------------
# Correlation and coupling


def normalized_returns(block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtract each row's mean and divide by its population std.

    Returns the normalized block and a mask of zero-variance rows (left as 0).
    """
    block = np.asarray(block, dtype=np.float64)
    centered = block - block.mean(axis=1, keepdims=True)
    std = np.sqrt((centered**2).mean(axis=1))
    flat = np.ptp(block, axis=1) == 0
    safe = np.where(flat, 1.0, std)
    g = centered / safe[:, None]
    g[flat] = 0.0
    return g, flat


def correlation_matrix(returns: ReturnMatrix, window: range, window_index: int = 0) -> CorrMatrix:
    if len(window) < 2:
        raise DataError("correlation window must span at least two returns")
    block = returns.returns[:, window.start : window.stop : window.step]
    g, flat = normalized_returns(block)
    R = (g @ g.T) / g.shape[1]
    R = 0.5 * (R + R.T)
    np.clip(R, -1.0, 1.0, out=R)
    np.fill_diagonal(R, 1.0)
    zero_var = tuple(int(i) for i in np.nonzero(flat)[0])
    if zero_var:
        names = ", ".join(returns.tickers[i] for i in zero_var)
        logger.warning("window %d: zero-variance returns for %s; treated as uncorrelated", window_index, names)
    return CorrMatrix(values=R, window_index=window_index, zero_variance=zero_var)


def coupling_matrix(corr: CorrMatrix) -> CouplingMatrix:
    C = np.sqrt(2.0 * (1.0 + corr.values))
    np.fill_diagonal(C, 2.0)
    return CouplingMatrix(values=C, window_index=corr.window_index)


def write_matrix(values: np.ndarray, tickers: Sequence[str], path) -> None:
    frame = pd.DataFrame(values, index=pd.Index(list(tickers), name="ticker"), columns=list(tickers))
    frame.to_csv(path)


def dump_window_matrices(corr: CorrMatrix, coupling: CouplingMatrix, tickers, directory) -> None:
    """Write ``corr_{i}.csv`` and ``coupling_{i}.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(corr.values, tickers, directory / f"corr_{corr.window_index}.csv")
    write_matrix(coupling.values, tickers, directory / f"coupling_{coupling.window_index}.csv")


# ---------------------------------------------------------------------------
# Synthetic markets


@dataclass(frozen=True)
class FactorGroup:
    """Stocks sharing one market factor with loading ``loading``.

    ``loading`` is a scalar or one value per return day; a zero loading gives
    pure idiosyncratic noise.
    """

    prefix: str
    size: int
    loading: float | Sequence[float] = 0.0


def factor_market(
    groups: Sequence[FactorGroup],
    days: int,
    seed: int,
    volatility: float = 0.01,
    start: str = "2000-01-03",
) -> PricePanel:
    """Seeded one-factor-per-group return model integrated to prices.

    Member returns are ``lam * f(t) + sqrt(1 - lam**2) * xi_i(t)`` with an
    independent standard normal factor ``f`` per group.
    """
    if days < 2:
        raise DataError("synthetic market needs at least two days")
    rng = np.random.default_rng(seed)
    n_ret = days - 1
    rows, tickers = [], []
    for group in groups:
        if group.size < 0:
            raise DataError(f"group {group.prefix!r} has negative size")
        lam = np.broadcast_to(np.asarray(group.loading, dtype=np.float64), (n_ret,))
        if np.any(lam < 0) or np.any(lam > 1):
            raise DataError(f"group {group.prefix!r}: loading must lie in [0, 1]")
        factor = rng.standard_normal(n_ret)
        noise = rng.standard_normal((group.size, n_ret))
        rows.append(lam * factor + np.sqrt(1.0 - lam**2) * noise)
        tickers.extend(f"{group.prefix}{i:03d}" for i in range(group.size))
    if not tickers:
        raise DataError("synthetic market has no stocks")
    returns = volatility * np.vstack(rows)
    logp = np.log(100.0) + np.concatenate([np.zeros((len(tickers), 1)), np.cumsum(returns, axis=1)], axis=1)
    dates = pd.bdate_range(start=start, periods=days).values.astype("datetime64[D]")
    return PricePanel(tickers=tuple(tickers), dates=dates, prices=np.exp(logp))


def synthetic_market(
    n_block: int,
    n_noise: int,
    block_loading: float,
    days: int,
    seed: int,
) -> PricePanel:
    """One factor block (tickers ``B000``...) plus pure-noise stocks (``N000``...)."""
    if not 0 <= block_loading <= 1:
        raise DataError("block_loading must lie in [0, 1]")
    return factor_market(
        [FactorGroup("B", n_block, block_loading), FactorGroup("N", n_noise, 0.0)],
        days=days,
        seed=seed,
    )
