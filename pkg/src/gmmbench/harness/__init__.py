"""Experiment driver: configs, seed tree, sweeps, result files."""

from .config import EXPERIMENTS, ExperimentConfig, load_config, parse_config
from .experiments import (
    BOUND,
    TRAIN_MATCHED,
    SweepResult,
    audit_bound,
    averaged_curves,
    expected_record_count,
    run_dimension_p_sweep,
    run_experiment,
    run_mismatch_b_sweep,
    run_snr_a_sweep,
    run_train_size_sweep,
)
from .io import CSV_HEADER, csv_text, emit_csv, emit_plot, read_csv
from .seeds import derive_seed, fnv1a_64
