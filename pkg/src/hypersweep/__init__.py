"""hypersweep: a hyperparameter search orchestrator.

Runs user-supplied training scripts as jobs over a managed resource pool,
drives the search with pluggable proposers (random, grid, GP-EI, TPE,
HyperBand, BOHB) and persists the full experiment history.

User scripts need only two things from this package (or none at all, if
they print the result line themselves):

    from hypersweep import load_job_config, print_result

    config = load_job_config(sys.argv[1])
    ...
    print_result(validation_loss)
"""

from .errors import (
    ConfigError,
    EnvFileError,
    GpFitError,
    HyperSweepError,
    ProposerError,
    ProtocolError,
    ResourceError,
    StoreError,
)
from .protocol import (
    RESULT_PREFIX,
    format_result_line,
    load_job_config,
    parse_result_line,
    print_result,
)
from .space import (
    ExperimentConfig,
    JobConfig,
    JobResult,
    ParameterSpec,
    SearchSpace,
    job_config_load,
    job_config_save,
    parse_experiment_config,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EnvFileError",
    "ExperimentConfig",
    "GpFitError",
    "HyperSweepError",
    "JobConfig",
    "JobResult",
    "ParameterSpec",
    "ProposerError",
    "ProtocolError",
    "RESULT_PREFIX",
    "ResourceError",
    "SearchSpace",
    "StoreError",
    "__version__",
    "format_result_line",
    "job_config_load",
    "job_config_save",
    "load_job_config",
    "parse_experiment_config",
    "parse_result_line",
    "print_result",
]
