"""Stage runners and the end-to-end pipeline.

Every stage reads the previous stage's files from the output directory and
writes only its own, so any stage can be rerun in isolation:

    ingest/synth  prices.csv
    simulate      windows.csv, strengths.csv, summaries/summary_{i}.csv
    detect        partitions.jsonl, coherent_sizes.csv, chi.csv
    cluster       embedding.csv, clusters.csv, involvement_histogram.csv
    report        sector_table.csv, sector_table.txt, coherent_sizes.txt
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd

from . import clustering, coherence, market_data, oscillator_sim
from .config import PipelineConfig
from .errors import ChimeraMarketError, DataError, StageError

logger = logging.getLogger(__name__)

PRICES = "prices.csv"
WINDOWS = "windows.csv"
STRENGTHS = "strengths.csv"
SUMMARY_DIR = "summaries"
MATRIX_DIR = "matrices"
PARTITIONS = "partitions.jsonl"
SIZES = "coherent_sizes.csv"
CHI = "chi.csv"
EMBEDDING = "embedding.csv"
CLUSTERS = "clusters.csv"
HISTOGRAM = "involvement_histogram.csv"
SECTOR_CSV = "sector_table.csv"
SECTOR_TXT = "sector_table.txt"
SIZES_TXT = "coherent_sizes.txt"
MANIFEST = "manifest.json"

STAGE_FILES = {
    "ingest": [PRICES],
    "simulate": [WINDOWS, STRENGTHS, SUMMARY_DIR],
    "detect": [PARTITIONS, SIZES, CHI],
    "cluster": [EMBEDDING, CLUSTERS, HISTOGRAM],
    "report": [SECTOR_CSV, SECTOR_TXT, SIZES_TXT],
}


def _require(path: Path) -> Path:
    if not path.exists():
        raise DataError(f"expected upstream artifact is missing: {path}")
    return path


def summary_path(out: Path, window_index: int) -> Path:
    return out / SUMMARY_DIR / f"summary_{window_index}.csv"


# ---------------------------------------------------------------------------
# ingest / synth


def run_ingest(config: PipelineConfig) -> market_data.PricePanel:
    if not config.input:
        raise DataError("no input price file configured")
    out = config.output_path()
    out.mkdir(parents=True, exist_ok=True)
    panel = market_data.load_prices(config.input, config.input_format, config.start_date, config.end_date)
    market_data.write_prices(panel, out / PRICES)
    logger.info("ingested %d stocks x %d dates (%d dropped)", panel.n_stocks, panel.n_dates, len(panel.dropped))
    return panel


SYNTH_SECTORS = {
    "B": ("Factor block", "Cyclical"),
    "M": ("Regime block", "Cyclical"),
    "N": ("Idiosyncratic", "Defensive"),
}


def run_synth(
    out,
    n_block: int = 20,
    n_noise: int = 30,
    block_loading: float = 0.85,
    days: int = 500,
    seed: int = 0,
    n_middle: int = 0,
    middle_loadings: tuple[float, float] = (0.9, 0.3),
) -> market_data.PricePanel:
    """Write a synthetic panel plus its ground truth and a matching sector map.

    The optional middle population loads ``middle_loadings[0]`` on its own
    factor during the first half of the history and ``middle_loadings[1]``
    afterwards, so it is coherent in some periods only.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    half = (days - 1) // 2
    schedule = np.where(np.arange(days - 1) < half, middle_loadings[0], middle_loadings[1])
    groups = [market_data.FactorGroup("B", n_block, block_loading)]
    if n_middle:
        groups.append(market_data.FactorGroup("M", n_middle, schedule))
    groups.append(market_data.FactorGroup("N", n_noise, 0.0))
    panel = market_data.factor_market(groups, days=days, seed=seed)
    market_data.write_prices(panel, out / PRICES)

    truth = {"B": "high", "M": "middle", "N": "low"}
    rows = [(t, t[0], truth[t[0]], *SYNTH_SECTORS[t[0]]) for t in panel.tickers]
    frame = pd.DataFrame(rows, columns=["ticker", "group", "expected", "sector", "classification"])
    frame[["ticker", "group", "expected"]].to_csv(out / "ground_truth.csv", index=False)
    frame[["ticker", "sector", "classification"]].to_csv(out / "sectors.csv", index=False)
    return panel


# ---------------------------------------------------------------------------
# simulate


def _simulate_chunk(returns, chunk, params, dump_dir):
    couplings = []
    for index, window in chunk:
        corr = market_data.correlation_matrix(returns, window, index)
        coupling = market_data.coupling_matrix(corr)
        if dump_dir is not None:
            market_data.dump_window_matrices(corr, coupling, returns.tickers, dump_dir)
        couplings.append(coupling)
    summaries = oscillator_sim.simulate_batch(couplings, params)
    strengths = [c.values.sum(axis=1) for c in couplings]
    return summaries, strengths


def run_simulate(config: PipelineConfig, resume: bool = False) -> int:
    out = config.output_path()
    panel = market_data.load_prices(_require(out / PRICES), "wide")
    returns = market_data.log_returns(panel)
    try:
        windows = market_data.sliding_windows(returns, config.window_spec())
    except ChimeraMarketError as exc:
        raise StageError("windows", exc) from exc

    spec = config.window_spec()
    frame = pd.DataFrame(
        {
            "window_index": np.arange(len(windows)),
            "start_date": [str(panel.dates[w.start]) for w in windows],
            "end_date": [str(panel.dates[w.start + spec.width]) for w in windows],
        }
    )
    frame.to_csv(out / WINDOWS, index=False)

    (out / SUMMARY_DIR).mkdir(exist_ok=True)
    dump_dir = out / MATRIX_DIR if config.dump_matrices else None
    params = config.sim_params()
    todo = [(i, w) for i, w in enumerate(windows) if not (resume and summary_path(out, i).exists())]
    chunks = [todo[i : i + config.batch_size] for i in range(0, len(todo), config.batch_size)]
    logger.info("simulating %d of %d windows in %d batches", len(todo), len(windows), len(chunks))

    strengths = {}
    strength_file = out / STRENGTHS
    if resume and strength_file.exists():
        stored = pd.read_csv(strength_file, float_precision="round_trip")
        strengths = {int(r[0]): np.asarray(r[1:], dtype=np.float64) for r in stored.itertuples(index=False)}

    def handle(chunk, result):
        summaries, chunk_strengths = result
        for (index, _), summary, s in zip(chunk, summaries, chunk_strengths):
            oscillator_sim.write_summary(summary, panel.tickers, summary_path(out, index))
            strengths[index] = s

    try:
        if config.workers > 1 and len(chunks) > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                futures = [pool.submit(_simulate_chunk, returns, c, params, dump_dir) for c in chunks]
                for done, (chunk, future) in enumerate(zip(chunks, futures), 1):
                    handle(chunk, future.result())
                    logger.info("batch %d/%d done", done, len(chunks))
        else:
            for done, chunk in enumerate(chunks, 1):
                handle(chunk, _simulate_chunk(returns, chunk, params, dump_dir))
                logger.info("batch %d/%d done", done, len(chunks))
    except ChimeraMarketError as exc:
        raise StageError("simulate", exc) from exc

    missing = [i for i in range(len(windows)) if i not in strengths]
    if missing:
        raise StageError("simulate", DataError("strengths missing for resumed windows; rerun without --resume"), missing[0])
    table = pd.DataFrame(np.array([strengths[i] for i in range(len(windows))]), columns=list(panel.tickers))
    table.insert(0, "window_index", np.arange(len(windows)))
    table.to_csv(strength_file, index=False, float_format="%.17g")
    return len(windows)


# ---------------------------------------------------------------------------
# detect


def run_detect(config: PipelineConfig) -> list[coherence.CoherencePartition]:
    out = config.output_path()
    windows = pd.read_csv(_require(out / WINDOWS), dtype={"start_date": str, "end_date": str})
    strengths = pd.read_csv(_require(out / STRENGTHS), float_precision="round_trip")
    tickers = [str(c) for c in strengths.columns[1:]]
    partitions = []
    for row, window_index in enumerate(windows["window_index"]):
        summary_tickers, summary = oscillator_sim.read_summary(summary_path(out, window_index), int(window_index))
        if summary_tickers != tickers:
            raise StageError("detect", DataError("summary tickers disagree with strengths.csv"), int(window_index))
        ranking = coherence.rank_strengths(strengths.iloc[row, 1:].to_numpy(dtype=np.float64))
        try:
            partitions.append(coherence.detect_coherent_set(summary, ranking, config.epsilon))
        except ChimeraMarketError as exc:
            raise StageError("detect", exc, int(window_index)) from exc

    coherence.write_partitions(partitions, tickers, out / PARTITIONS)
    coherence.write_coherent_sizes(partitions, windows["start_date"], out / SIZES)
    coherence.write_chi(coherence.characteristic_matrix(partitions, len(tickers)), tickers, out / CHI)
    return partitions


# ---------------------------------------------------------------------------
# cluster


def run_cluster(config: PipelineConfig) -> clustering.ClusterAssignment:
    out = config.output_path()
    tickers, matrix = coherence.read_chi(_require(out / CHI))
    lo, hi = config.window_bounds()
    chi = matrix.chi[lo:hi]
    if chi.shape[0] == 0:
        raise StageError("cluster", DataError(f"window_range {config.window_range!r} selects no windows"))
    matrix = coherence.CoherenceMatrix(chi=chi, counts=chi.sum(axis=0).astype(np.int64))
    try:
        embedding = clustering.laplacian_eigenmaps(matrix, config.neighbor_k)
        assignment = clustering.cluster_stocks(
            embedding, matrix.counts, k=config.n_clusters, seed=config.seed, restarts=config.restarts
        )
    except ChimeraMarketError as exc:
        raise StageError("cluster", exc) from exc

    pd.DataFrame({"ticker": tickers, "x": embedding.coords[:, 0], "y": embedding.coords[:, 1]}).to_csv(
        out / EMBEDDING, index=False, float_format="%.17g"
    )
    pd.DataFrame({"ticker": tickers, "label": assignment.labels, "N_T": matrix.counts}).to_csv(
        out / CLUSTERS, index=False
    )
    hist, edges = clustering.involvement_histogram(matrix.counts, config.histogram_bins, matrix.n_windows)
    pd.DataFrame({"bin_start": edges[:-1], "bin_end": edges[1:], "count": hist}).to_csv(
        out / HISTOGRAM, index=False, float_format="%.17g"
    )
    return assignment


# ---------------------------------------------------------------------------
# report


def render_size_series(sizes: pd.DataFrame, width: int = 50, max_rows: int = 80) -> str:
    """Plain-text bar chart of the coherent-group size over time."""
    if sizes.empty:
        return "no windows\n"
    stride = max(1, int(np.ceil(len(sizes) / max_rows)))
    top = max(int(sizes["size"].max()), 1)
    lines = [f"coherent group size (every {stride} window(s), max {top})"]
    for _, row in sizes.iloc[::stride].iterrows():
        bar = "#" * int(round(width * row["size"] / top))
        lines.append(f"{row['start_date']} {int(row['size']):5d} {bar}")
    return "\n".join(lines) + "\n"


def run_report(config: PipelineConfig) -> clustering.SectorTable | None:
    out = config.output_path()
    sizes = pd.read_csv(_require(out / SIZES), dtype={"start_date": str})
    (out / SIZES_TXT).write_text(render_size_series(sizes), encoding="utf-8")

    clusters = pd.read_csv(_require(out / CLUSTERS), dtype={"ticker": str, "label": str})
    if not config.sectors:
        logger.info("no sector map configured; skipping the sector table")
        return None
    sectors = clustering.load_sector_map(config.sectors)
    try:
        table = clustering.sector_breakdown(list(clusters["label"]), list(clusters["ticker"]), sectors)
    except ChimeraMarketError as exc:
        raise StageError("report", exc) from exc
    clustering.write_sector_table(table, out / SECTOR_CSV)
    (out / SECTOR_TXT).write_text(clustering.render_sector_table(table), encoding="utf-8")
    return table


# ---------------------------------------------------------------------------
# manifest


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for child in sorted(path.iterdir(), key=lambda p: p.name):
            h.update(child.name.encode())
            h.update(file_digest(child).encode())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def _versions() -> dict[str, str]:
    versions = {"python": platform.python_version()}
    for dist in ("numpy", "scipy", "pandas", "artifact"):
        try:
            versions[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            versions[dist] = "unknown"
    return versions


def write_manifest(config: PipelineConfig, stages) -> dict:
    out = config.output_path()
    manifest_path = out / MANIFEST
    manifest = {"config": {}, "versions": {}, "stages": {}}
    if manifest_path.exists():
        manifest.update(json.loads(manifest_path.read_text(encoding="utf-8")))
    for stage in stages:
        manifest["stages"][stage] = {
            name: file_digest(out / name) for name in STAGE_FILES[stage] if (out / name).exists()
        }
    if config.input and Path(config.input).is_file():
        manifest["input_sha256"] = file_digest(Path(config.input))
    if (out / WINDOWS).exists():
        manifest["n_windows"] = int(len(pd.read_csv(out / WINDOWS)))
    manifest["config"] = config.as_dict()
    manifest["versions"] = _versions()
    payload = {
        "config": config.as_dict(include_scheduling=False),
        "input_sha256": manifest.get("input_sha256"),
        "n_windows": manifest.get("n_windows"),
        "stages": manifest["stages"],
    }
    manifest["run_hash"] = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def run_pipeline(config: PipelineConfig, resume: bool = False) -> dict:
    """ingest -> simulate -> detect -> cluster -> report, then the manifest."""
    config.validate()
    config.output_path().mkdir(parents=True, exist_ok=True)
    steps = [
        ("ingest", lambda: run_ingest(config)),
        ("simulate", lambda: run_simulate(config, resume=resume)),
        ("detect", lambda: run_detect(config)),
        ("cluster", lambda: run_cluster(config)),
        ("report", lambda: run_report(config)),
    ]
    for name, action in steps:
        logger.info("stage %s", name)
        try:
            action()
        except StageError:
            raise
        except ChimeraMarketError as exc:
            raise StageError(name, exc) from exc
    return write_manifest(config, [name for name, _ in steps])
