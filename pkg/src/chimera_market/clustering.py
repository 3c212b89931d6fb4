"""Two-dimensional spectral embedding of coherence histories and 3-means grouping.

Each stock is the M-dimensional 0/1 vector of its coherence indicators.
Stocks that are always or never coherent produce many identical vectors, so
neighbor selection keeps every point tied at the k-th distance; identical
stocks then get identical neighbors and identical coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components

from .coherence import CoherenceMatrix
from .errors import DataError

logger = logging.getLogger(__name__)

GROUP_NAMES = ("low", "middle", "high")
TABLE_HEADER = ("GICS sector", "High coherent", "Middle coherent", "Low coherent", "Cyclical or Defensive")


@dataclass(frozen=True)
class Embedding:
    coords: np.ndarray  # (N, 2)
    neighbor_k: int
    eigenvalues: np.ndarray  # generalized eigenvalues of the two returned vectors
    graph: np.ndarray  # 0/1 adjacency between distinct columns
    inverse: np.ndarray  # stock -> distinct-column index
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    history: tuple[float, ...] = ()


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray  # strings from GROUP_NAMES
    centroids: np.ndarray  # rows ordered low, middle, high
    inertia: float
    mean_counts: np.ndarray
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class SectorRow:
    sector: str
    high: float
    middle: float
    low: float
    n_stocks: int
    classification: str | None = None


@dataclass(frozen=True)
class SectorTable:
    rows: tuple[SectorRow, ...]
    unmapped: tuple[str, ...] = field(default=())


# ---------------------------------------------------------------------------
# Laplacian eigenmaps


def _squared_distances(points: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances between 0/1 rows (integer Hamming)."""
    ints = np.asarray(points).astype(np.int64)
    ones = ints.sum(axis=1)
    return ones[:, None] + ones[None, :] - 2 * (ints @ ints.T)


def neighbor_radius(d2: np.ndarray, multiplicity: np.ndarray, k: int) -> np.ndarray:
    """Squared distance from each class to a point's k-th nearest other point.

    ``d2`` holds distances between distinct vectors; class ``a`` stands for
    ``multiplicity[a]`` identical points, so its own other members sit at
    distance 0.
    """
    u = d2.shape[0]
    radius = np.empty(u, dtype=np.int64)
    for a in range(u):
        counts = multiplicity.copy()
        counts[a] -= 1
        order = np.argsort(d2[a], kind="stable")
        reached = np.cumsum(counts[order])
        radius[a] = d2[a, order[np.searchsorted(reached, k)]]
    return radius


def class_adjacency(d2: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """0/1 adjacency between distinct vectors, symmetrized by union.

    Every point at or inside the k-th neighbor distance is a neighbor, so
    identical points always receive identical neighbor sets.
    """
    A = (d2 <= radius[:, None]) | (d2 <= radius[None, :])
    np.fill_diagonal(A, False)
    return A.astype(np.float64)


def connect_components(A: np.ndarray, d2: np.ndarray) -> tuple[np.ndarray, int]:
    """Join components by repeatedly linking the closest cross-component pair."""
    A = A.copy()
    added = 0
    while True:
        n_comp, comp = connected_components(A, directed=False)
        if n_comp == 1:
            return A, added
        cross = comp[:, None] != comp[None, :]
        masked = np.where(cross, d2, np.iinfo(np.int64).max)
        i, j = np.unravel_index(np.argmin(masked), masked.shape)
        A[i, j] = A[j, i] = 1.0
        added += 1


def point_graph(A: np.ndarray, inverse: np.ndarray) -> np.ndarray:
    """Expand a class adjacency to the full point-level adjacency."""
    W = A[np.ix_(inverse, inverse)].copy()
    same = inverse[:, None] == inverse[None, :]
    W[same] = 1.0
    np.fill_diagonal(W, 0.0)
    return W


def _orient(vec: np.ndarray) -> np.ndarray:
    pivot = int(np.argmax(np.abs(vec)))
    return -vec if vec[pivot] < 0 else vec


def laplacian_eigenmaps(chi: CoherenceMatrix, neighbor_k: int = 10) -> Embedding:
    """Embed stocks (columns of chi) with the 2nd and 3rd generalized eigenvectors
    of ``L f = lambda D f`` on a binary k-nearest-neighbor graph.

    Identical columns are structurally equivalent in the graph; the problem is
    solved on the distinct columns weighted by multiplicity, which returns
    exactly the point-level eigenvectors that are constant on identical columns.
    """
    matrix = chi.chi if isinstance(chi, CoherenceMatrix) else np.asarray(chi, dtype=bool)
    n = matrix.shape[1]
    if neighbor_k < 1:
        raise DataError("neighbor_k must be >= 1")
    if n < neighbor_k + 1:
        raise DataError(f"need at least neighbor_k + 1 = {neighbor_k + 1} stocks, got {n}")

    distinct, inverse = np.unique(matrix.T, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    u = distinct.shape[0]
    if u == 1:
        raise DataError(
            "every stock has the same coherence history; nothing to embed "
            "(review epsilon or the window range)"
        )
    mult = np.bincount(inverse, minlength=u).astype(np.int64)

    notes = []
    d2 = _squared_distances(distinct)
    A = class_adjacency(d2, neighbor_radius(d2, mult, neighbor_k))
    A, added = connect_components(A, d2)
    if added:
        notes.append(f"neighbor graph was disconnected; added {added} bridging link(s)")

    m = mult.astype(np.float64)
    point_degree = (m - 1) + A @ m
    cross = A * np.outer(m, m)
    L = np.diag(cross.sum(axis=1)) - cross
    vals, vecs = eigh(L, np.diag(m * point_degree))

    n_vec = min(2, u - 1)
    coords_u = np.zeros((u, 2))
    for c in range(n_vec):
        coords_u[:, c] = _orient(vecs[:, c + 1])
    eigvals = np.full(2, np.nan)
    eigvals[:n_vec] = vals[1 : 1 + n_vec]
    if n_vec < 2:
        notes.append("only two distinct coherence histories; second coordinate set to 0")

    for note in notes:
        logger.warning(note)
    return Embedding(
        coords=coords_u[inverse],
        neighbor_k=neighbor_k,
        eigenvalues=eigvals,
        graph=A,
        inverse=inverse,
        warnings=tuple(notes),
    )


# ---------------------------------------------------------------------------
# k-means


def _sq_dist_to(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            pick = rng.choice(n, p=closest / total)
        else:
            pick = rng.integers(n)
        centroids[c] = points[pick]
        closest = np.minimum(closest, ((points - centroids[c]) ** 2).sum(axis=1))
    return centroids


def lloyd(points: np.ndarray, centroids: np.ndarray, tol: float = 1e-10, max_iter: int = 300) -> KMeansResult:
    """Lloyd iterations; an emptied cluster keeps its previous centroid."""
    centroids = centroids.copy()
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = _sq_dist_to(points, centroids)
        labels = np.argmin(d, axis=1)
        history.append(float(d[np.arange(len(points)), labels].sum()))
        updated = centroids.copy()
        for c in range(len(centroids)):
            members = labels == c
            if members.any():
                updated[c] = points[members].mean(axis=0)
        shift = np.sqrt(((updated - centroids) ** 2).sum(axis=1)).max()
        centroids = updated
        if shift < tol:
            break
    d = _sq_dist_to(points, centroids)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(len(points)), labels].sum())
    history.append(inertia)
    return KMeansResult(labels=labels, centroids=centroids, inertia=inertia, n_iter=n_iter, history=tuple(history))


def kmeans(embedding, k: int = 3, seed: int = 0, restarts: int = 10) -> KMeansResult:
    """Best of ``restarts`` seeded k-means++ / Lloyd runs, by inertia."""
    points = np.asarray(embedding.coords if isinstance(embedding, Embedding) else embedding, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if k < 1 or k > points.shape[0]:
        raise DataError(f"k must be between 1 and the number of points ({points.shape[0]}), got {k}")
    if restarts < 1:
        raise DataError("restarts must be >= 1")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        result = lloyd(points, kmeans_plusplus(points, k, rng))
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def label_groups(labels, counts, centroids=None) -> ClusterAssignment:
    """Name three raw clusters low/middle/high by ascending mean involvement."""
    labels = np.asarray(labels)
    counts = np.asarray(counts, dtype=np.float64)
    ids = np.unique(labels)
    if len(ids) > 3:
        raise DataError(f"expected at most 3 clusters, got {len(ids)}")
    centroid_of = {}
    if centroids is not None:
        centroids = np.asarray(centroids, dtype=np.float64)
        centroid_of = {c: centroids[int(c)] for c in ids}
    means = {c: counts[labels == c].mean() for c in ids}
    first_coord = {c: centroid_of[c][0] if c in centroid_of else 0.0 for c in ids}
    ranked = sorted(ids, key=lambda c: (means[c], first_coord[c]))

    notes = []
    mean_values = [means[c] for c in ranked]
    if len(set(mean_values)) < len(mean_values):
        notes.append("tie in mean involvement between clusters; broken by centroid x-coordinate")
        logger.warning(notes[-1])
    names = {3: GROUP_NAMES, 2: ("low", "high"), 1: ("middle",)}[len(ranked)]
    name_of = dict(zip(ranked, names))
    named = np.array([name_of[c] for c in labels], dtype=object)
    ordered_centroids = np.array([centroid_of[c] for c in ranked]) if centroid_of else np.empty((0, 2))
    return ClusterAssignment(
        labels=named,
        centroids=ordered_centroids,
        inertia=float("nan"),
        mean_counts=np.array(mean_values),
        warnings=tuple(notes),
    )


def cluster_stocks(embedding: Embedding, counts, k: int = 3, seed: int = 0, restarts: int = 10) -> ClusterAssignment:
    result = kmeans(embedding, k=k, seed=seed, restarts=restarts)
    named = label_groups(result.labels, counts, result.centroids)
    return ClusterAssignment(
        labels=named.labels,
        centroids=named.centroids,
        inertia=result.inertia,
        mean_counts=named.mean_counts,
        warnings=named.warnings,
    )


# ---------------------------------------------------------------------------
# Reports


def load_sector_map(path) -> dict[str, tuple[str, str | None]]:
    """Read ``ticker, sector[, classification]`` rows."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"sector map not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    frame.columns = [c.strip().lower() for c in frame.columns]
    if not {"ticker", "sector"} <= set(frame.columns):
        raise DataError(f"{path}: sector map needs 'ticker' and 'sector' columns")
    has_class = "classification" in frame.columns
    return {
        row.ticker.strip(): (row.sector.strip(), (row.classification.strip() or None) if has_class else None)
        for row in frame.itertuples(index=False)
    }


def sector_breakdown(
    labels: Sequence[str],
    tickers: Sequence[str],
    sectors: Mapping[str, str | tuple[str, str | None]],
) -> SectorTable:
    """Percent of each sector's stocks in the high, middle and low groups.

    Sectors appear in the order they are first met in ``sectors``.
    """
    if not sectors:
        raise DataError("sector map is empty")
    info = {t: (v, None) if isinstance(v, str) else tuple(v) for t, v in sectors.items()}
    label_of = dict(zip(tickers, labels))
    unmapped = tuple(t for t in tickers if t not in info)
    if unmapped:
        logger.warning("%d tickers have no sector: %s", len(unmapped), ", ".join(unmapped))

    members: dict[str, list[str]] = {}
    tags: dict[str, str | None] = {}
    for ticker, (sector, tag) in info.items():
        if ticker not in label_of:
            continue
        members.setdefault(sector, []).append(label_of[ticker])
        tags.setdefault(sector, tag)

    rows = []
    for sector, group in members.items():
        total = len(group)
        pct = {name: round(100.0 * group.count(name) / total, 2) for name in GROUP_NAMES}
        rows.append(SectorRow(sector, pct["high"], pct["middle"], pct["low"], total, tags[sector]))
    return SectorTable(rows=tuple(rows), unmapped=unmapped)


def render_sector_table(table: SectorTable) -> str:
    body = [
        (row.sector, f"{row.high:.2f}%", f"{row.middle:.2f}%", f"{row.low:.2f}%", row.classification or "")
        for row in table.rows
    ]
    widths = [max(len(str(cell)) for cell in column) for column in zip(TABLE_HEADER, *body)]

    def line(cells):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"

    rule = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(TABLE_HEADER), rule, *(line(r) for r in body)]) + "\n"


def write_sector_table(table: SectorTable, path) -> None:
    frame = pd.DataFrame(
        [(r.sector, f"{r.high:.2f}", f"{r.middle:.2f}", f"{r.low:.2f}", r.classification or "") for r in table.rows],
        columns=list(TABLE_HEADER),
    )
    frame.to_csv(path, index=False)


def involvement_histogram(counts, bins: int = 20, n_windows: int | None = None):
    """Histogram of involvement counts with edges spanning ``[0, n_windows]``."""
    if bins < 1:
        raise DataError("bins must be >= 1")
    counts = np.asarray(counts)
    upper = int(counts.max()) if n_windows is None else int(n_windows)
    hist, edges = np.histogram(counts, bins=bins, range=(0, max(upper, 1)))
    return hist, edges


def count_modes(hist) -> int:
    """Number of local maxima, treating a flat top as one maximum."""
    h = np.asarray(hist)
    # collapse plateaus, then pad so edge bins can be maxima
    keep = np.concatenate([[True], h[1:] != h[:-1]])
    h = np.concatenate([[-1], h[keep], [-1]])
    return int(np.sum((h[1:-1] > h[:-2]) & (h[1:-1] > h[2:])))
