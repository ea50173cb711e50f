"""Wrapped Gaussian (and elliptically contoured) distributions on SPD matrices.

A wrapped Gaussian pushes a multivariate normal ``N(mu, Sigma)`` living in the
vectorized tangent space at a base point ``p`` through the Riemannian
exponential: ``X = Exp_p(unvectorize(p, t))`` with ``t ~ N(mu, Sigma)``.
Because the exponential is a global diffeomorphism here, the density of ``X``
with respect to the Riemannian volume is exact: the normal density of the
unwrapped coordinates divided by the Jacobian determinant of the exponential.

The module provides parameter containers, sampling, exact (log) densities,
the Jacobian determinant in a numerically stable log form, the class
equivalence (rescaling the base point while shifting the tangent mean) with
its minimal representative, standardization transforms built from congruence,
tangent translation, and tangent scaling, and the statistic whose limit law
is the wrapped central limit theorem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatchError, DomainError, InvalidInputError
from .geometry import (
    congruence,
    diag_coord_indices,
    diag_indicator,
    exp_map,
    log_map,
    matrix_dim,
    tangent_dim,
    unvectorize,
    unvectorize_at_identity,
    vectorize_at_identity,
)
from .linalg import eigh_sym, invsqrtm, sqrtm, sym_part, validate_spd

__all__ = [
    "Covariance",
    "WgParams",
    "EllipticalGenerator",
    "wrap_point",
    "unwrap_point",
    "sample",
    "log_jacobian_det",
    "jacobian_det",
    "log_density",
    "density",
    "log_density_ec",
    "translate_class",
    "minimal_representative",
    "congruence_by_base",
    "translate_tangent",
    "scale_tangent",
    "standardize_map",
    "from_standard",
    "clt_statistic",
]

_LOG_2PI = math.log(2.0 * math.pi)

# Below this eigenvalue gap the Jacobian pair factor switches to its Taylor
# series; the leading dropped term is x^4/1920, far below double roundoff.
_JAC_SERIES_CUT = 1e-7


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Covariance:
    """Covariance of the tangent-space Gaussian, full or diagonal.

    Parameters
    ----------
    kind : {"full", "diagonal"}
        Parameterization. ``full`` stores an SPD matrix of shape ``(n, n)``;
        ``diagonal`` stores the strictly positive diagonal, shape ``(n,)``.
    values : ndarray
        The matrix or the diagonal vector.
    """

    kind: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if self.kind == "full":
            values = validate_spd(values)
        elif self.kind == "diagonal":
            if values.ndim != 1:
                raise InvalidInputError(
                    f"diagonal covariance needs a 1-d vector, got shape {values.shape}"
                )
            if not np.all(np.isfinite(values)):
                raise InvalidInputError("diagonal covariance has non-finite entries")
            if np.any(values <= 0.0):
                raise DomainError(
                    f"diagonal covariance must be positive; min entry {values.min():.3e}"
                )
        else:
            raise InvalidInputError(f"unknown covariance kind {self.kind!r}")
        object.__setattr__(self, "values", values)

    @classmethod
    def full(cls, matrix) -> "Covariance":
        return cls("full", matrix)

    @classmethod
    def diagonal(cls, entries) -> "Covariance":
        return cls("diagonal", entries)

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    def matrix(self) -> np.ndarray:
        """Dense ``(n, n)`` representation."""
        if self.kind == "full":
            return self.values.copy()
        return np.diag(self.values)

    def logdet(self) -> float:
        if self.kind == "diagonal":
            return float(np.sum(np.log(self.values)))
        chol = np.linalg.cholesky(self.values)
        return 2.0 * float(np.sum(np.log(np.diag(chol))))

    def mahalanobis(self, dev) -> np.ndarray:
        """Quadratic form ``dev^T Sigma^-1 dev`` for one or many deviations."""
        dev = np.asarray(dev, dtype=float)
        if dev.shape[-1] != self.n:
            raise DimensionMismatchError(
                f"deviation length {dev.shape[-1]} does not match covariance size {self.n}"
            )
        if self.kind == "diagonal":
            return np.sum(dev * dev / self.values, axis=-1)
        chol = np.linalg.cholesky(self.values)
        flat = dev.reshape(-1, self.n)
        half = np.linalg.solve(chol, flat.T)
        return np.sum(half * half, axis=0).reshape(dev.shape[:-1])

    def sampling_factor(self) -> np.ndarray:
        """Factor ``L`` with ``L z`` carrying ``z ~ N(0, I)`` to ``N(0, Sigma)``.

        Cholesky for the full kind, entrywise square root for the diagonal.
        """
        if self.kind == "diagonal":
            return np.sqrt(self.values)
        return np.linalg.cholesky(self.values)

    def apply_half_power(self, t, inverse: bool = False) -> np.ndarray:
        """Multiply coordinates by the symmetric ``Sigma^(1/2)`` (or its inverse)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "diagonal":
            root = np.sqrt(self.values)
            return t / root if inverse else t * root
        half = invsqrtm(self.values) if inverse else sqrtm(self.values)
        return t @ half

    def to_dict(self) -> dict:
        return {"kind": self.kind, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "Covariance":
        return cls(payload["kind"], np.asarray(payload["values"], dtype=float))


@dataclass(frozen=True)
class WgParams:
    """Parameters of a wrapped Gaussian: base point, tangent mean, covariance.

    ``p`` is SPD of size ``d``, ``mu`` lives in the vectorized tangent space
    (length ``n = d(d+1)/2``), and ``sigma`` is a :class:`Covariance` of size
    ``n``. Validated on construction.
    """

    p: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    sigma: Covariance

    def __post_init__(self):
        p = validate_spd(np.asarray(self.p, dtype=float))
        mu = np.asarray(self.mu, dtype=float)
        n = tangent_dim(p.shape[-1])
        if p.ndim != 2:
            raise InvalidInputError("base point must be a single matrix")
        if mu.ndim != 1 or mu.shape[0] != n:
            raise DimensionMismatchError(
                f"tangent mean must have length {n} for a {p.shape[0]}x{p.shape[0]} base, "
                f"got shape {mu.shape}"
            )
        if not np.all(np.isfinite(mu)):
            raise InvalidInputError("tangent mean has non-finite entries")
        if self.sigma.n != n:
            raise DimensionMismatchError(
                f"covariance size {self.sigma.n} does not match tangent dimension {n}"
            )
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "mu", mu)

    @property
    def d(self) -> int:
        return self.p.shape[-1]

    @property
    def n(self) -> int:
        return self.mu.shape[-1]

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "p": self.p.tolist(),
            "mu": self.mu.tolist(),
            "sigma_kind": self.sigma.kind,
            "sigma": self.sigma.values.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "WgParams":
        return cls(
            np.asarray(payload["p"], dtype=float),
            np.asarray(payload["mu"], dtype=float),
            Covariance(
                payload["sigma_kind"], np.asarray(payload["sigma"], dtype=float)
            ),
        )


@dataclass(frozen=True)
class EllipticalGenerator:
    """Radial generator of an elliptically contoured tangent distribution.

    The tangent density is ``k * det(Sigma)^-1/2 * g(q)`` with ``q`` the
    Mahalanobis form; ``g`` and the analytic normalizer ``k`` are determined
    by the family. Only families with closed-form normalizers are offered.
    """

    family: str
    dof: float | None = None

    def __post_init__(self):
        if self.family == "gaussian":
            if self.dof is not None:
                raise InvalidInputError("gaussian generator takes no degrees of freedom")
        elif self.family == "student_t":
            if self.dof is None or not self.dof > 0.0:
                raise InvalidInputError("student_t generator needs dof > 0")
        else:
            raise InvalidInputError(f"unknown generator family {self.family!r}")

    @classmethod
    def gaussian(cls) -> "EllipticalGenerator":
        return cls("gaussian")

    @classmethod
    def student_t(cls, dof: float) -> "EllipticalGenerator":
        return cls("student_t", float(dof))

    def log_norm_const(self, n: int) -> float:
        """Log of the normalizer ``k`` in ambient dimension ``n``."""
        if self.family == "gaussian":
            return -0.5 * n * _LOG_2PI
        nu = self.dof
        return (
            math.lgamma(0.5 * (nu + n))
            - math.lgamma(0.5 * nu)
            - 0.5 * n * math.log(nu * math.pi)
        )

    def log_radial(self, q, n: int):
        """Log of ``g(q)`` (elementwise over an array of quadratic forms)."""
        q = np.asarray(q, dtype=float)
        if self.family == "gaussian":
            return -0.5 * q
        return -0.5 * (self.dof + n) * np.log1p(q / self.dof)


# ---------------------------------------------------------------------------
# Wrapping and unwrapping
# ---------------------------------------------------------------------------


def wrap_point(p, t) -> np.ndarray:
    """Map tangent coordinates ``t`` at base ``p`` to SPD points.

    ``wrap_point(p, t) = Exp_p(unvectorize(p, t))``; accepts a single vector
    of length ``n`` or a stack ``(..., n)``.
    """
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    if t.shape[-1] != tangent_dim(p.shape[-1]):
        raise DimensionMismatchError(
            f"coordinate length {t.shape[-1]} does not match base size {p.shape[-1]}"
        )
    hs = sqrtm(p)
    u0 = unvectorize_at_identity(t)
    w, v = eigh_sym(u0, check=False)
    inner = np.einsum("...ik,...k,...jk->...ij", v, np.exp(w), v)
    return sym_part(congruence(hs, inner))


def unwrap_point(p, x) -> np.ndarray:
    """Inverse of :func:`wrap_point`: tangent coordinates of SPD points."""
    t, _ = _unwrap_with_eigs(np.asarray(p, dtype=float), np.asarray(x, dtype=float))
    return t


def _unwrap_with_eigs(p, x):
    """Coordinates ``vectorize(p, Log_p x)`` plus eigenvalues of the log.

    The whitened matrix ``W = p^-1/2 x p^-1/2`` carries everything needed by
    the density: its log gives the coordinates, and the eigenvalues of that
    log feed the Jacobian. One batched eigendecomposition serves both.
    """
    if x.shape[-1] != p.shape[-1] or x.shape[-2] != p.shape[-2]:
        raise DimensionMismatchError(
            f"point shape {x.shape[-2:]} does not match base shape {p.shape[-2:]}"
        )
    ihs = invsqrtm(p)
    w_mat = sym_part(congruence(ihs, x))
    vals, vecs = eigh_sym(w_mat, check=False)
    if np.any(vals <= 0.0):
        raise DomainError("point is not positive definite relative to the base")
    log_vals = np.log(vals)
    log_w = np.einsum("...ik,...k,...jk->...ij", vecs, log_vals, vecs)
    return vectorize_at_identity(log_w), log_vals


# ---------------------------------------------------------------------------
# Jacobian determinant of the exponential
# ---------------------------------------------------------------------------


def _log_jac_pair_terms(diffs) -> np.ndarray:
    """Stable ``log(2 sinh(x/2) / x)`` for eigenvalue gaps ``x``.

    Even in ``x`` and zero at ``x = 0``; the large-``x`` branch is written in
    terms of ``log1p(-exp(-x))`` so it neither overflows nor cancels.
    """
    x = np.abs(np.asarray(diffs, dtype=float))
    out = np.empty_like(x)
    small = x < _JAC_SERIES_CUT
    xs = x[small]
    out[small] = np.log1p(xs * xs / 24.0)
    xl = x[~small]
    out[~small] = 0.5 * xl + np.log1p(-np.exp(-xl)) - np.log(xl)
    return out


def _log_jac_from_eigs(eigs) -> np.ndarray:
    d = eigs.shape[-1]
    if d == 1:
        return np.zeros(eigs.shape[:-1])
    ii, jj = np.triu_indices(d, k=1)
    diffs = eigs[..., ii] - eigs[..., jj]
    return np.sum(_log_jac_pair_terms(diffs), axis=-1)


def log_jacobian_det(p, u) -> np.ndarray | float:
    """Log Jacobian determinant of ``Exp_p`` at tangent matrix ``u``.

    In orthonormal bases the determinant is a product of one factor
    ``2 sinh((l_i - l_j)/2) / (l_i - l_j)`` per eigenvalue pair of the
    whitened tangent ``p^-1/2 u p^-1/2``; it equals 1 exactly at ``u = 0``
    and is invariant under congruence of ``(p, u)`` by any invertible matrix.
    """
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    ihs = invsqrtm(p)
    eigs = eigh_sym(sym_part(congruence(ihs, u)), check=False).values
    out = _log_jac_from_eigs(eigs)
    return float(out) if out.ndim == 0 else out


def jacobian_det(p, u) -> np.ndarray | float:
    """Jacobian determinant ``exp(log_jacobian_det(p, u))``; always >= 1."""
    return np.exp(log_jacobian_det(p, u))


# ---------------------------------------------------------------------------
# Sampling and densities
# ---------------------------------------------------------------------------


def sample(theta: WgParams, count: int, rng=None) -> np.ndarray:
    """Draw ``count`` points of the wrapped Gaussian ``theta``.

    Parameters
    ----------
    theta : WgParams
        Distribution parameters.
    count : int
        Number of draws, at least 1.
    rng : int, SeedSequence, Generator, optional
        Seed or generator; anything :func:`numpy.random.default_rng` accepts.

    Returns
    -------
    ndarray, shape (count, d, d)
        SPD samples ``Exp_p(unvectorize(p, t))`` with ``t ~ N(mu, Sigma)``
        drawn through the covariance factor of ``Sigma``.
    """
    if count < 1:
        raise InvalidInputError(f"count must be positive, got {count}")
    gen = np.random.default_rng(rng)
    z = gen.standard_normal((count, theta.n))
    factor = theta.sigma.sampling_factor()
    if theta.sigma.kind == "diagonal":
        t = theta.mu + z * factor
    else:
        t = theta.mu + z @ factor.T
    return wrap_point(theta.p, t)


def log_density_ec(theta: WgParams, generator: EllipticalGenerator, x) -> np.ndarray | float:
    """Log density of a wrapped elliptically contoured distribution.

    The tangent law has density ``k det(Sigma)^-1/2 g(q(t))`` and the wrapped
    point ``x = wrap_point(p, t)`` picks up the reciprocal Jacobian of the
    exponential, so the value returned is

    ``log k - logdet(Sigma)/2 + log g(q) - log_jacobian_det(p, Log_p x)``

    with respect to the Riemannian volume measure. The gaussian generator
    reproduces :func:`log_density` bit for bit (same code path).
    """
    x = np.asarray(x, dtype=float)
    t, log_eigs = _unwrap_with_eigs(theta.p, x)
    q = theta.sigma.mahalanobis(t - theta.mu)
    out = (
        generator.log_norm_const(theta.n)
        - 0.5 * theta.sigma.logdet()
        + generator.log_radial(q, theta.n)
        - _log_jac_from_eigs(log_eigs)
    )
    return float(out) if np.ndim(out) == 0 else out


def log_density(theta: WgParams, x) -> np.ndarray | float:
    """Exact log density of the wrapped Gaussian at SPD points ``x``.

    Accepts a single matrix ``(d, d)`` or a stack ``(..., d, d)``; the value
    is taken with respect to the affine-invariant volume measure.
    """
    return log_density_ec(theta, EllipticalGenerator.gaussian(), x)


def density(theta: WgParams, x) -> np.ndarray | float:
    """Density ``exp(log_density(theta, x))``."""
    return np.exp(log_density(theta, x))


# ---------------------------------------------------------------------------
# Class equivalence and standardization
# ---------------------------------------------------------------------------


def translate_class(theta: WgParams, t: float) -> WgParams:
    """The member ``(e^t p, mu - t * diag_indicator, Sigma)`` of theta's class.

    All members share the same distribution: scaling the base point along its
    own direction is absorbed by shifting the tangent mean against the
    diagonal coordinate indicator.
    """
    t = float(t)
    nu = diag_indicator(theta.d)
    return WgParams(np.exp(t) * theta.p, theta.mu - t * nu, theta.sigma)


def minimal_representative(theta: WgParams) -> WgParams:
    """Canonical member of theta's equivalence class.

    Chooses the translation that makes the tangent mean orthogonal to the
    diagonal indicator direction; idempotent, and the covariance is untouched.
    """
    idx = diag_coord_indices(theta.d)
    t_min = float(np.sum(theta.mu[idx])) / theta.d
    return translate_class(theta, t_min)


def congruence_by_base(p, x, inverse: bool = False) -> np.ndarray:
    """Congruence by ``p^-1/2`` (forward) or ``p^1/2`` (inverse).

    Forward maps a wrapped law based at ``p`` to the same tangent law based
    at the identity, leaving ``(mu, Sigma)`` untouched.
    """
    half = sqrtm(p) if inverse else invsqrtm(p)
    return sym_part(congruence(half, np.asarray(x, dtype=float)))


def translate_tangent(p, x, mu, inverse: bool = False) -> np.ndarray:
    """Shift unwrapped coordinates by ``-mu`` (forward) or ``+mu`` (inverse)."""
    x = np.asarray(x, dtype=float)
    shift = unvectorize(p, np.asarray(mu, dtype=float))
    u = log_map(p, x)
    return exp_map(p, u + shift if inverse else u - shift)


def scale_tangent(p, x, sigma: Covariance, inverse: bool = False) -> np.ndarray:
    """Rescale unwrapped coordinates by ``Sigma^-1/2`` (forward) or ``Sigma^1/2``."""
    t = unwrap_point(p, x)
    t = sigma.apply_half_power(t, inverse=not inverse)
    return wrap_point(p, t)


def standardize_map(theta: WgParams, x) -> np.ndarray:
    """Carry samples of ``theta`` to samples of the standard law at identity.

    Composition of the three measure-preserving building blocks: translate
    the tangent mean away, whiten the tangent covariance, then move the base
    point to the identity by congruence. Sends the law of ``theta`` to the
    wrapped Gaussian with identity base, zero mean, and identity covariance.
    """
    x1 = translate_tangent(theta.p, x, theta.mu)
    x2 = scale_tangent(theta.p, x1, theta.sigma)
    return congruence_by_base(theta.p, x2)


def from_standard(theta: WgParams, y) -> np.ndarray:
    """Inverse of :func:`standardize_map` (exact round trip)."""
    x2 = congruence_by_base(theta.p, y, inverse=True)
    x1 = scale_tangent(theta.p, x2, theta.sigma, inverse=True)
    return translate_tangent(theta.p, x1, theta.mu, inverse=True)


# ---------------------------------------------------------------------------
# Central limit statistic
# ---------------------------------------------------------------------------


def clt_statistic(xs, mu, base=None) -> np.ndarray:
    """Normalized log-space sum whose limit law is a wrapped Gaussian.

    Computes ``Exp_base(n^-1/2 * sum_i (Log_base(x_i) - unvectorize(base, mu)))``,
    the geodesic form of the product statistic: each sample is composed with
    the inverse of the wrapped mean under the logarithmic product and the
    result is taken to the power ``1/sqrt(n)``. Computing in log space keeps
    the operation exact and cheap.

    Parameters
    ----------
    xs : ndarray, shape (n, d, d)
        SPD samples.
    mu : ndarray, shape (d(d+1)/2,)
        Tangent mean being removed, in vectorized coordinates at ``base``.
    base : ndarray, optional
        Base point; identity when omitted.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 3 or xs.shape[0] == 0:
        raise InvalidInputError(
            f"clt_statistic expects a nonempty stack (n, d, d), got shape {xs.shape}"
        )
    d = xs.shape[-1]
    if base is None:
        base = np.eye(d)
    base = np.asarray(base, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (tangent_dim(d),):
        raise DimensionMismatchError(
            f"tangent mean shape {mu.shape} does not match dimension {d}"
        )
    logs = log_map(base, xs)
    centered = logs - unvectorize(base, mu)
    u = centered.sum(axis=0) / math.sqrt(xs.shape[0])
    return exp_map(base, u)
