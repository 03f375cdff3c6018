"""Experiment orchestration: configs, runners, tabular output, CLI."""

from .config import ConfigError, ExperimentConfig, read_config, write_config
from .records import column_order, write_records
from .runs import (run_experiment, run_predict, run_simulate, run_spectrum,
                   run_sweep_region, run_tune)
