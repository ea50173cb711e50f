"""Maximum-likelihood and moment estimation for wrapped Gaussians.

Estimation exploits the structure of the likelihood: with the base point
held fixed, the Jacobian term does not involve the tangent mean or the
covariance, so their maximum-likelihood values are the classical Gaussian
ones (sample mean and biased sample covariance of the unwrapped
coordinates). The default strategy therefore profiles those two out and runs
Riemannian conjugate gradient over the base point alone; a joint strategy
over the full product manifold is available for cross-checking.

The moment estimator anchors the base point at the Karcher mean, which is
exactly the point whose unwrapped sample mean vanishes; it is consistent
only on the subfamily with zero tangent mean and is provided for comparison.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    RegularizationWarning,
    SingularCovarianceError,
    SmallSampleWarning,
)
from .geometry import karcher_mean, tangent_dim
from .linalg import spectral_condition
from .optim import (
    CgOptions,
    EuclideanFactor,
    FitReport,
    PositiveFactor,
    ProductManifold,
    SpdFactor,
    minimize_cg,
)
from .wrapped import (
    Covariance,
    EllipticalGenerator,
    WgParams,
    _log_jac_from_eigs,
    _unwrap_with_eigs,
    log_density,
    minimal_representative,
)

__all__ = [
    "MleOptions",
    "neg_log_lik",
    "closed_form_mu_sigma",
    "fit_mle",
    "fit_moments",
    "nll_euclidean_gradient",
    "nll_riemannian_gradient",
    "product_manifold_for",
]

_GAUSS = EllipticalGenerator.gaussian()

# Covariance eigenvalue (or diagonal entry) below this fraction of the largest
# one counts as singular; matches the SPD validation threshold.
_SINGULAR_REL = 1e-12

# Estimation domain: base points with an eigenvalue ratio beyond this are
# treated as infinite cost. When the tangent spread is far below the
# curvature scale, the finite-sample likelihood can keep creeping upward
# toward degenerate bases along a near-flat valley; compactifying the domain
# guarantees the maximizer exists and stays a usable SPD matrix.
COND_LIMIT = 1e10


@dataclass
class MleOptions:
    """Options of :func:`fit_mle`.

    Parameters
    ----------
    cov_kind : {"full", "diagonal"}
        Covariance parameterization to estimate.
    strategy : {"profile", "joint"}
        ``profile`` optimizes over the base point only, recovering the mean
        and covariance in closed form at every trial point (the default and
        the cheaper route); ``joint`` runs conjugate gradient over the full
        product manifold.
    tol, max_iter : float, int
        Optimizer stopping controls (gradient norm and iteration budget).
    init : WgParams, optional
        Explicit initial point. When omitted, the base point starts at the
        Karcher mean of the data with the closed-form mean and covariance.
    fd_step : float
        Relative step of the finite-difference gradients.
    karcher_tol, karcher_max_iter :
        Controls of the Karcher-mean initialization.
    determinism : bool
        Kept on, the fit is a pure function of (data, options). The solver
        never draws random numbers, so this is an assertion, not a switch;
        it exists so configuration files can record the guarantee.
    seed : int, optional
        Reserved for stochastic tie-breaking; no current code path draws
        from it.
    """

    cov_kind: str = "full"
    strategy: str = "profile"
    tol: float = 1e-6
    max_iter: int = 5000
    init: WgParams | None = None
    fd_step: float = 1e-5
    karcher_tol: float = 1e-10
    karcher_max_iter: int = 200
    determinism: bool = True
    seed: int | None = None

    def __post_init__(self):
        if self.cov_kind not in ("full", "diagonal"):
            raise InvalidInputError(f"unknown covariance kind {self.cov_kind!r}")
        if self.strategy not in ("profile", "joint"):
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        if not self.tol > 0.0:
            raise InvalidInputError("tol must be positive")
        if self.max_iter < 0:
            raise InvalidInputError("max_iter must be nonnegative")


def _as_data(data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3 or data.shape[-1] != data.shape[-2] or data.shape[0] == 0:
        raise InvalidInputError(
            f"expected a nonempty stack of square matrices, got shape {data.shape}"
        )
    return data


def neg_log_lik(theta: WgParams, data) -> float:
    """Negative log likelihood of SPD samples under ``theta``.

    The per-sample terms are reduced with exact (compensated) summation, so
    the value does not depend on sample order and concatenating a dataset
    with itself doubles it bit for bit.
    """
    data = _as_data(data)
    ld = np.atleast_1d(log_density(theta, data))
    return -math.fsum(ld.tolist())


def _raw_moments(t: np.ndarray, cov_kind: str):
    """Sample mean and biased sample covariance of unwrapped coordinates."""
    mu = t.mean(axis=0)
    dev = t - mu
    if cov_kind == "full":
        raw = dev.T @ dev / t.shape[0]
    else:
        raw = np.mean(dev * dev, axis=0)
    return mu, raw


def _is_singular(raw: np.ndarray, cov_kind: str) -> bool:
    if cov_kind == "full":
        w = np.linalg.eigvalsh(raw)
        top = w[-1]
        return top <= 0.0 or w[0] <= _SINGULAR_REL * top
    top = float(np.max(raw, initial=0.0))
    return top <= 0.0 or float(np.min(raw)) <= _SINGULAR_REL * top


def _ridge(raw: np.ndarray, cov_kind: str) -> np.ndarray:
    """Ridge ``raw + lam * I`` with ``lam = 1e-8 * trace / n``."""
    if cov_kind == "full":
        lam = 1e-8 * float(np.trace(raw)) / raw.shape[0]
        if lam <= 0.0:
            raise SingularCovarianceError(
                "covariance estimate is identically zero; cannot regularize",
                mu_hat=None,
                sigma_raw=raw,
            )
        return raw + lam * np.eye(raw.shape[0])
    lam = 1e-8 * float(np.sum(raw)) / raw.shape[0]
    if lam <= 0.0:
        raise SingularCovarianceError(
            "covariance estimate is identically zero; cannot regularize",
            mu_hat=None,
            sigma_raw=raw,
        )
    return raw + lam


def closed_form_mu_sigma(p, data, cov_kind: str = "full"):
    """Conditional maximum-likelihood mean and covariance at a fixed base point.

    Parameters
    ----------
    p : ndarray, shape (d, d)
        Base point (SPD).
    data : ndarray, shape (N, d, d)
        SPD samples.
    cov_kind : {"full", "diagonal"}

    Returns
    -------
    (ndarray, Covariance)
        Sample mean and biased sample covariance of the unwrapped
        coordinates. These maximize the likelihood in ``(mu, Sigma)`` for the
        given ``p`` because the Jacobian term of the density does not depend
        on either.

    Raises
    ------
    SingularCovarianceError
        When the covariance estimate is singular (for the full kind this is
        guaranteed whenever ``N <= n``); the error carries the mean and the
        raw estimate.
    """
    data = _as_data(data)
    p = np.asarray(p, dtype=float)
    t, _ = _unwrap_with_eigs(p, data)
    mu, raw = _raw_moments(t, cov_kind)
    if _is_singular(raw, cov_kind):
        raise SingularCovarianceError(
            f"{cov_kind} covariance estimate from {data.shape[0]} samples is singular",
            mu_hat=mu,
            sigma_raw=raw,
        )
    return mu, Covariance(cov_kind, raw)


def _profile_eval(p, data, cov_kind):
    """Profiled negative log likelihood and the profiling (mu, Sigma) at ``p``.

    Mirrors the expression of ``log_density`` term by term so the profiled
    cost equals ``neg_log_lik((p, mu_hat, Sigma_hat), data)`` exactly. A
    singular covariance estimate is ridge-regularized with a warning rather
    than aborting the search.
    """
    t, log_eigs = _unwrap_with_eigs(p, data)
    log_jac = _log_jac_from_eigs(log_eigs)
    mu, raw = _raw_moments(t, cov_kind)
    if _is_singular(raw, cov_kind):
        warnings.warn(
            "singular covariance during profiling; applying ridge regularization",
            RegularizationWarning,
            stacklevel=3,
        )
        raw = _ridge(raw, cov_kind)
    sigma = Covariance(cov_kind, raw)
    n = t.shape[-1]
    q = sigma.mahalanobis(t - mu)
    terms = (
        _GAUSS.log_norm_const(n)
        - 0.5 * sigma.logdet()
        + _GAUSS.log_radial(q, n)
        - log_jac
    )
    return -math.fsum(terms.tolist()), mu, sigma


def product_manifold_for(d: int, cov_kind: str) -> ProductManifold:
    """Product manifold of (base point, tangent mean, covariance)."""
    n = tangent_dim(d)
    cov_factor = SpdFactor(n) if cov_kind == "full" else PositiveFactor(n)
    return ProductManifold((SpdFactor(d), EuclideanFactor(n), cov_factor))


def _theta_to_tuple(theta: WgParams):
    return (theta.p, theta.mu, theta.sigma.values)


def _tuple_to_theta(x, cov_kind: str) -> WgParams:
    return WgParams(x[0], x[1], Covariance(cov_kind, x[2]))


def nll_euclidean_gradient(theta: WgParams, data, h: float = 1e-5):
    """Euclidean gradient of the negative log likelihood by central differences.

    Returns per-factor gradients ``(G_p, g_mu, g_sigma)`` in ambient
    coordinates: symmetric matrices satisfy ``df[V] = <G, V>_F`` for
    symmetric directions ``V`` (hence off-diagonal entries carry half the
    paired difference), vectors are plain partial derivatives. Steps are
    relative to the entry magnitudes.
    """
    data = _as_data(data)
    p, mu, sig = theta.p, theta.mu, theta.sigma.values
    kind = theta.sigma.kind

    def value(p_, mu_, sig_):
        return neg_log_lik(WgParams(p_, mu_, Covariance(kind, sig_)), data)

    def sym_grad(mat, build):
        m = mat.shape[0]
        g = np.zeros((m, m))
        for i in range(m):
            for j in range(i, m):
                step = h * (1.0 + abs(mat[i, j]))
                d_dir = np.zeros((m, m))
                d_dir[i, j] = 1.0
                d_dir[j, i] = 1.0
                df = (value(*build(mat + step * d_dir)) - value(*build(mat - step * d_dir))) / (
                    2.0 * step
                )
                if i == j:
                    g[i, i] = df
                else:
                    g[i, j] = g[j, i] = 0.5 * df
        return g

    g_p = sym_grad(p, lambda m: (m, mu, sig))

    g_mu = np.zeros_like(mu)
    for i in range(mu.shape[0]):
        step = h * (1.0 + abs(mu[i]))
        e = np.zeros_like(mu)
        e[i] = step
        g_mu[i] = (value(p, mu + e, sig) - value(p, mu - e, sig)) / (2.0 * step)

    if kind == "full":
        g_sig = sym_grad(sig, lambda m: (p, mu, m))
    else:
        g_sig = np.zeros_like(sig)
        for i in range(sig.shape[0]):
            step = h * sig[i]
            e = np.zeros_like(sig)
            e[i] = step
            g_sig[i] = (value(p, mu, sig + e) - value(p, mu, sig - e)) / (2.0 * step)

    return g_p, g_mu, g_sig


def nll_riemannian_gradient(theta: WgParams, data, h: float = 1e-5):
    """Riemannian gradient of the negative log likelihood on the product manifold.

    Assembled from the finite-difference Euclidean gradient through the
    metric conversion of each factor; returns a tangent tuple.
    """
    manifold = product_manifold_for(theta.d, theta.sigma.kind)
    egrad = nll_euclidean_gradient(theta, data, h=h)
    return manifold.egrad2rgrad(_theta_to_tuple(theta), egrad)


def _initial_point(data, opts: MleOptions):
    if opts.init is not None:
        if opts.init.d != data.shape[-1]:
            raise DimensionMismatchError(
                f"init has dimension {opts.init.d}, data has {data.shape[-1]}"
            )
        return opts.init.p
    return karcher_mean(data, tol=opts.karcher_tol, max_iter=opts.karcher_max_iter)


def fit_mle(data, options: MleOptions | None = None):
    """Maximum-likelihood estimate of wrapped-Gaussian parameters.

    Parameters
    ----------
    data : ndarray, shape (N, d, d)
        SPD samples, N >= 2.
    options : MleOptions, optional

    Returns
    -------
    (WgParams, FitReport)
        The estimate, always reduced to the minimal representative of its
        equivalence class, and the optimizer diagnostics.

    Notes
    -----
    The optimizer works on the negative log likelihood divided by the sample
    count, so the gradient tolerance means the same thing at every N; the
    costs in the returned report are per-sample averages (multiply by N for
    the total). The likelihood is constant along the class direction
    (rescaling the base point while shifting the mean), so the optimizer
    stops on gradient norm rather than on parameter movement and the minimal
    representative pins down the answer on that ridge. Full covariances have
    O(d^4) parameters; a warning is emitted when ``N <= d(d+1)/2``.

    The search domain restricts base points to an eigenvalue ratio of at
    most ``COND_LIMIT``; beyond it the cost counts as infinite. Without the
    restriction, data much more concentrated than the curvature scale lets
    the sample likelihood improve indefinitely along increasingly
    ill-conditioned bases, so the maximizer may not exist; with it the
    estimate is always a valid SPD matrix.
    """
    opts = options or MleOptions()
    data = _as_data(data)
    n_samples, d = data.shape[0], data.shape[-1]
    if n_samples < 2:
        raise InvalidInputError("fit_mle needs at least two samples")
    n = tangent_dim(d)
    if opts.cov_kind == "full" and n_samples <= n:
        warnings.warn(
            f"estimating a full {n}x{n} covariance from {n_samples} samples; "
            "the estimate is singular or nearly so",
            SmallSampleWarning,
            stacklevel=2,
        )

    p0 = _initial_point(data, opts)
    cg = CgOptions(tol=opts.tol, max_iter=opts.max_iter, fd_step=opts.fd_step)

    if opts.strategy == "profile":
        def cost(p):
            if spectral_condition(p) > COND_LIMIT:
                return math.inf
            return _profile_eval(p, data, opts.cov_kind)[0] / n_samples

        p_hat, report = minimize_cg(SpdFactor(d), cost, p0, options=cg)
        _, mu_hat, sigma_hat = _profile_eval(p_hat, data, opts.cov_kind)
        theta = WgParams(p_hat, mu_hat, sigma_hat)
    else:
        if opts.init is not None:
            mu0, sigma0 = opts.init.mu, opts.init.sigma
            if sigma0.kind != opts.cov_kind:
                raise InvalidInputError(
                    f"init covariance kind {sigma0.kind!r} does not match "
                    f"options kind {opts.cov_kind!r}"
                )
        else:
            try:
                mu0, sigma0 = closed_form_mu_sigma(p0, data, opts.cov_kind)
            except SingularCovarianceError as err:
                warnings.warn(
                    "singular covariance at the initial point; applying ridge regularization",
                    RegularizationWarning,
                    stacklevel=2,
                )
                mu0 = err.mu_hat
                sigma0 = Covariance(opts.cov_kind, _ridge(err.sigma_raw, opts.cov_kind))
        manifold = product_manifold_for(d, opts.cov_kind)

        def cost(x):
            if spectral_condition(x[0]) > COND_LIMIT:
                return math.inf
            return neg_log_lik(_tuple_to_theta(x, opts.cov_kind), data) / n_samples

        def egrad(x):
            g_p, g_mu, g_sig = nll_euclidean_gradient(
                _tuple_to_theta(x, opts.cov_kind), data, h=opts.fd_step
            )
            return g_p / n_samples, g_mu / n_samples, g_sig / n_samples

        x0 = (p0, np.asarray(mu0, dtype=float), sigma0.values)
        x_hat, report = minimize_cg(manifold, cost, x0, grad=egrad, options=cg)
        theta = _tuple_to_theta(x_hat, opts.cov_kind)

    return minimal_representative(theta), report


def fit_moments(data, cov_kind: str = "full", karcher_tol: float = 1e-10,
                karcher_max_iter: int = 200) -> WgParams:
    """Moment estimator: Karcher-mean base point, zero mean, closed-form covariance.

    The Karcher mean is the point at which the unwrapped sample mean
    vanishes, so the tangent mean is set to exactly zero. Consistent only
    when the true tangent mean is zero; when it is not, the estimator is
    biased by construction (the returned mean pins the error at the true
    mean's norm), which is the reason :func:`fit_mle` exists.
    """
    data = _as_data(data)
    p_hat = karcher_mean(data, tol=karcher_tol, max_iter=karcher_max_iter)
    _, sigma_hat = closed_form_mu_sigma(p_hat, data, cov_kind)
    return WgParams(p_hat, np.zeros(tangent_dim(data.shape[-1])), sigma_hat)
