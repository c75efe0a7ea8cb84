"""Adaptive mixture population Monte Carlo for likelihood-free inference.

Fits a Gaussian-mixture approximation to a posterior whose likelihood is
available only through a nonnegative unbiased stochastic estimate, using
iterated self-normalized importance-sampling moment updates, and grows or
prunes the number of mixture components automatically.
"""

from .controller import (
    AdaptiveConfig,
    AdaptiveWindow,
    FixedWindow,
    RunTrace,
    propose_component,
    prune_components,
    run_adaptive,
    window_should_stop,
)
from .engine import (
    IterationBatch,
    ZeroTotalWeightError,
    estimate_objective,
    exact_em_step_1d,
    sample_batch,
    update_parameters,
)
from .linalg import (
    SpdMatrix,
    cholesky_spd,
    log_sum_exp,
    mvn_log_pdf,
    mvn_sample,
    std_normal_cdf,
    std_normal_quantile,
)
from .mixture import (
    MixtureParams,
    add_component,
    mixture_log_density,
    mixture_sample,
    remove_component,
    responsibilities,
    single_component,
)
from .rng import StreamKey

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "AdaptiveWindow",
    "FixedWindow",
    "RunTrace",
    "propose_component",
    "prune_components",
    "run_adaptive",
    "window_should_stop",
    "IterationBatch",
    "ZeroTotalWeightError",
    "estimate_objective",
    "exact_em_step_1d",
    "sample_batch",
    "update_parameters",
    "SpdMatrix",
    "cholesky_spd",
    "log_sum_exp",
    "mvn_log_pdf",
    "mvn_sample",
    "std_normal_cdf",
    "std_normal_quantile",
    "MixtureParams",
    "add_component",
    "mixture_log_density",
    "mixture_sample",
    "remove_component",
    "responsibilities",
    "single_component",
    "StreamKey",
    "__version__",
]
