"""SSE sampling: configurations, updates, chain driver and measurement records."""

from .engine import (
    CorruptionError,
    LoopStats,
    Schedule,
    SseConfig,
    adjust_truncation,
    check_invariants,
    diagonal_update,
    directed_loop_update,
    init_config,
    load_checkpoint,
    measure_winding,
    run_chain,
    run_sweeps,
    save_checkpoint,
)
from .record import ChainTally, MeasurementRecord, binning_error, measure_energy

__all__ = [
    "ChainTally", "CorruptionError", "LoopStats", "MeasurementRecord", "Schedule", "SseConfig",
    "adjust_truncation", "binning_error", "check_invariants", "diagonal_update",
    "directed_loop_update", "init_config", "load_checkpoint", "measure_energy",
    "measure_winding", "run_chain", "run_sweeps", "save_checkpoint",
]
