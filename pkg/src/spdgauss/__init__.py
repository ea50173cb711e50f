"""Wrapped Gaussian distributions on the manifold of SPD matrices.

Sampling, exact densities, maximum-likelihood estimation on the
affine-invariant manifold, and classifiers built on those densities,
together with a reproduction harness and a command-line interface.
"""

from .exceptions import (
    DataFormatError,
    DimensionMismatchError,
    DomainError,
    InvalidInputError,
    NumericalError,
    RegularizationWarning,
    SingularCovarianceError,
    SmallSampleWarning,
    SpdGaussError,
)
from .geometry import (
    airm_dist,
    airm_inner,
    airm_norm,
    diag_coord_indices,
    diag_indicator,
    exp_map,
    karcher_mean,
    log_map,
    log_product,
    parallel_transport,
    tangent_basis,
    tangent_dim,
    transport_from_identity,
    unvectorize,
    unvectorize_at_identity,
    vectorize,
    vectorize_at_identity,
)
from .classifiers import (
    LabeledSpdDataset,
    MdmModel,
    TsdaModel,
    WdaModel,
    fit_mdm,
    fit_tsda,
    fit_wda,
    predict_log_proba,
    predict_mdm,
    predict_tsda,
    predict_wda,
)
from .estimation import (
    MleOptions,
    closed_form_mu_sigma,
    fit_mle,
    fit_moments,
    neg_log_lik,
)
from .linalg import eigh_sym, expm, invsqrtm, is_spd, logm, powm, sqrtm, validate_spd
from .optim import CgOptions, FitReport, minimize_cg
from .wrapped import (
    Covariance,
    EllipticalGenerator,
    WgParams,
    clt_statistic,
    density,
    from_standard,
    jacobian_det,
    log_density,
    log_density_ec,
    log_jacobian_det,
    minimal_representative,
    sample,
    standardize_map,
    translate_class,
    unwrap_point,
    wrap_point,
)

__version__ = "0.1.0"
