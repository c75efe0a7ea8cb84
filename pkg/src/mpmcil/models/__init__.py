"""Built-in target models: the pluggable posterior specification."""

from .base import TargetModel
from .gk import (
    GkAbcModel,
    constrain_gk,
    gk_default_prior,
    gk_quantile,
    gk_simulate,
    octile_summary,
)
from .glmm import (
    GlmmData,
    GlmmModel,
    glmm_log_prior,
    log_psi_reference,
    read_glmm_csv,
    synthesize_glmm_data,
    write_glmm_csv,
)
from .tractable import TractableMixtureTarget, tractable_mixture_target

__all__ = [
    "TargetModel",
    "GkAbcModel",
    "constrain_gk",
    "gk_default_prior",
    "gk_quantile",
    "gk_simulate",
    "octile_summary",
    "GlmmData",
    "GlmmModel",
    "glmm_log_prior",
    "log_psi_reference",
    "read_glmm_csv",
    "synthesize_glmm_data",
    "write_glmm_csv",
    "TractableMixtureTarget",
    "tractable_mixture_target",
]
