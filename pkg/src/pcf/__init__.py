"""Latent confounder recovery from high-dimensional proxies and adjusted
causal effect estimation."""

from .dataset import Dataset, from_scm_draw, read_dataset, write_dataset
from .dr import ReductionOutput, ica_fit, pca_fit, pls_fit
from .estimate import (
    CausalEstimate,
    EnetFit,
    MetricsRecord,
    adjusted_effect,
    cv_regression_baseline,
    elastic_net_fit,
    evaluate,
    pca_baseline_effect,
)
from .exceptions import (
    DegenerateInputError,
    DivergenceError,
    InsufficientSamplesError,
    InvalidRankError,
    PcfError,
    SchemaError,
    SingularityError,
)
from .gdpcf import (
    GdpcfGradient,
    GdpcfHyper,
    GdpcfState,
    finite_difference_check,
    gdpcf_extract,
    gdpcf_gradient,
    gdpcf_init,
    gdpcf_loss,
    gdpcf_train,
)
from .select import (
    ComponentScore,
    SelectionOutput,
    score_component,
    score_component_symmetric,
    select_confounder,
    select_confounders_threshold,
)
from .stats import (
    KernelSpec,
    OlsFit,
    kfold_split,
    nhsic,
    ols_fit,
    ridge_solve,
    sample_latent,
    t_p_value,
)
from .synth import ScmConfig, ScmDraw, generate_noiseless, generate_scm

__version__ = "0.1.0"
