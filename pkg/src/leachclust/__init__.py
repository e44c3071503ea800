"""Clustering of incomplete data through leachable-component imputation."""

from .clustering import CoefficientMatrix, Partition, kmeans, sec_cluster, simplex_project, solve_sec
from .core import Basis, DistributionParams, MaskedDataset, top_r_basis
from .errors import ConfigurationError, DimensionError, IngestionError, NumericalError
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    SyntheticSpec,
    apply_mcar,
    gen_synthetic,
    load_csv,
    make_method,
    run_experiment,
    sweep_missing,
    write_report,
)
from .imputation import ImputationResult, ImputerConfig, impute
from .metrics import MetricsRecord, nmi, pairwise_f, rand_index, rmse_missing

__version__ = "0.1.0"
