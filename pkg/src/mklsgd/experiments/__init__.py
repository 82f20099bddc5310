"""Sweep harness, classification benchmark and CLI."""
from .classify import BenchmarkTable, classification_benchmark, default_optimizers
from .sweep import (CellSummary, OptimizerDefaults, RunRecord, SweepConfig, lookup, run_sweep, summarize,
                    write_sweep)
