from .config import ExperimentConfig, config_for, read_config_file
from .experiments import (
    MetricsRecord,
    compute_metrics,
    oracle_return,
    oracle_returns,
    run_experiment,
    run_repetition,
)
