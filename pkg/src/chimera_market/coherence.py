"""Coherent-group detection per window and the coherence time structures.

Oscillators are scanned in order of decreasing global coupling strength
``S_i = sum_j C_ij``. Each one whose velocity fluctuation is below ``epsilon``
joins the coherent set, and the scan stops at the first one that is not; every
remaining oscillator is incoherent, even if its own fluctuation is small.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .market_data import CouplingMatrix
from .oscillator_sim import SimulationSummary

DEFAULT_EPSILON = 0.1


@dataclass(frozen=True)
class StrengthRanking:
    strengths: np.ndarray
    order: np.ndarray  # indices by descending strength, ties by ascending index


@dataclass(frozen=True)
class CoherencePartition:
    window_index: int
    coherent: tuple[int, ...]
    incoherent: tuple[int, ...]
    epsilon: float

    @property
    def size(self) -> int:
        return len(self.coherent)

    @property
    def n(self) -> int:
        return len(self.coherent) + len(self.incoherent)


@dataclass(frozen=True)
class CoherenceMatrix:
    chi: np.ndarray  # (M, N) bool, row t = window, column i = stock
    counts: np.ndarray  # N_T(i) = number of windows in which i is coherent

    @property
    def n_windows(self) -> int:
        return self.chi.shape[0]


def rank_strengths(strengths) -> StrengthRanking:
    strengths = np.asarray(strengths, dtype=np.float64)
    order = np.argsort(-strengths, kind="stable")
    return StrengthRanking(strengths=strengths, order=order)


def coupling_strengths(coupling) -> StrengthRanking:
    values = coupling.values if isinstance(coupling, CouplingMatrix) else np.asarray(coupling, dtype=np.float64)
    return rank_strengths(values.sum(axis=1))


def detect_coherent_set(
    summary: SimulationSummary,
    ranking: StrengthRanking,
    epsilon: float = DEFAULT_EPSILON,
) -> CoherencePartition:
    if not epsilon > 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    sigma = np.asarray(summary.velocity_std)
    if sigma.shape != ranking.order.shape:
        raise DataError(
            f"summary has {sigma.size} oscillators but ranking has {ranking.order.size}"
        )
    ordered_ok = sigma[ranking.order] < epsilon
    # length of the leading run of True values
    stop = int(np.argmin(ordered_ok)) if not ordered_ok.all() else ordered_ok.size
    return CoherencePartition(
        window_index=summary.window_index,
        coherent=tuple(int(i) for i in ranking.order[:stop]),
        incoherent=tuple(int(i) for i in ranking.order[stop:]),
        epsilon=float(epsilon),
    )


def coherent_size_series(partitions: Sequence[CoherencePartition]) -> np.ndarray:
    return np.array([p.size for p in partitions], dtype=np.int64)


def characteristic_matrix(partitions: Sequence[CoherencePartition], n: int) -> CoherenceMatrix:
    chi = np.zeros((len(partitions), n), dtype=bool)
    for t, part in enumerate(partitions):
        if part.n != n or set(part.coherent) | set(part.incoherent) != set(range(n)):
            raise DataError(
                f"partition for window {part.window_index} does not cover exactly {n} indices"
            )
        chi[t, list(part.coherent)] = True
    return CoherenceMatrix(chi=chi, counts=chi.sum(axis=0).astype(np.int64))


# ---------------------------------------------------------------------------
# Artifact IO


def write_partitions(partitions, tickers, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for part in partitions:
            record = {
                "window_index": part.window_index,
                "epsilon": part.epsilon,
                "size": part.size,
                "coherent": [tickers[i] for i in part.coherent],
            }
            fh.write(json.dumps(record) + "\n")


def read_partitions(path, tickers) -> list[CoherencePartition]:
    """Rebuild partitions; the incoherent order is ticker order, not S order."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing partitions file: {path}")
    position = {t: i for i, t in enumerate(tickers)}
    parts = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                coherent = tuple(position[t] for t in rec["coherent"])
            except KeyError as exc:
                raise DataError(f"{path}: unknown ticker {exc}") from exc
            members = set(coherent)
            parts.append(
                CoherencePartition(
                    window_index=int(rec["window_index"]),
                    coherent=coherent,
                    incoherent=tuple(i for i in range(len(tickers)) if i not in members),
                    epsilon=float(rec["epsilon"]),
                )
            )
    return parts


def write_coherent_sizes(partitions, start_dates, path) -> None:
    frame = pd.DataFrame(
        {
            "window_index": [p.window_index for p in partitions],
            "start_date": list(start_dates),
            "size": coherent_size_series(partitions),
        }
    )
    frame.to_csv(path, index=False)


def write_chi(matrix: CoherenceMatrix, tickers, path) -> None:
    frame = pd.DataFrame(matrix.chi.astype(np.int8), columns=list(tickers))
    frame.to_csv(path, index=False)


def read_chi(path) -> tuple[list[str], CoherenceMatrix]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing characteristic matrix: {path}")
    frame = pd.read_csv(path)
    chi = frame.to_numpy().astype(bool)
    return [str(c) for c in frame.columns], CoherenceMatrix(chi=chi, counts=chi.sum(axis=0).astype(np.int64))
