"""Coherence and incoherence of stocks viewed as correlation-coupled phase oscillators."""

from .clustering import (
    ClusterAssignment,
    Embedding,
    SectorTable,
    cluster_stocks,
    involvement_histogram,
    kmeans,
    label_groups,
    laplacian_eigenmaps,
    sector_breakdown,
)
from .coherence import (
    CoherenceMatrix,
    CoherencePartition,
    StrengthRanking,
    characteristic_matrix,
    coherent_size_series,
    coupling_strengths,
    detect_coherent_set,
)
from .config import PipelineConfig
from .errors import ChimeraMarketError, ConfigError, DataError, NumericalError, StageError
from .market_data import (
    CorrMatrix,
    CouplingMatrix,
    PricePanel,
    ReturnMatrix,
    WindowSpec,
    correlation_matrix,
    coupling_matrix,
    load_prices,
    log_returns,
    sliding_windows,
    synthetic_market,
)
from .oscillator_sim import (
    PhaseState,
    SimParams,
    SimulationSummary,
    initial_phases,
    phase_velocity,
    simulate,
    step,
)
from .pipeline import run_pipeline

__version__ = "0.1.0"
