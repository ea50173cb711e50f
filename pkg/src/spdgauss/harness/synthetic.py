"""Reproducible random generators for benchmark problems.

Every generator takes an explicit seed (or an already-constructed
``numpy.random.Generator``) and draws a fixed sequence of variates, so a
given seed always yields the same parameters regardless of platform.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import InvalidInputError
from ..linalg import expm
from ..wrapped import Covariance, WgParams, minimal_representative

__all__ = ["random_spd", "random_wg_params"]


def _as_generator(seed: int | np.random.SeedSequence | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def normalize_cov_kind(kind: str) -> str:
    """Map accepted covariance-kind spellings onto the canonical two."""
    if kind in ("full",):
        return "full"
    if kind in ("diag", "diagonal"):
        return "diagonal"
    raise InvalidInputError(f"unknown covariance kind {kind!r}")


def random_spd(
    d: int,
    center: float = 0.1,
    spread: float = 1.0,
    seed: int | np.random.SeedSequence | np.random.Generator = 0,
) -> np.ndarray:
    """Draw a random SPD matrix as ``expm(B.T @ B)`` with ``B = center*I + spread*A``.

    ``A`` has independent standard normal entries, so ``B.T @ B`` is
    symmetric positive semidefinite and its matrix exponential is strictly
    positive definite.  ``center`` biases the factor toward the identity and
    ``spread`` scales the random part; small values of both keep the result
    near ``I``.

    Parameters
    ----------
    d:
        Matrix dimension, at least 1.
    center, spread:
        Coefficients of the factor ``B = center*I + spread*A``.
    seed:
        Integer seed, ``SeedSequence``, or ``Generator``.  Passing a
        ``Generator`` advances its state.

    Returns
    -------
    numpy.ndarray
        An SPD matrix of shape ``(d, d)``.
    """
    if d < 1:
        raise InvalidInputError(f"random_spd: d must be >= 1, got {d}")
    rng = _as_generator(seed)
    a = rng.standard_normal((d, d))
    b = center * np.eye(d) + spread * a
    return expm(b.T @ b)


def random_wg_params(
    d: int,
    cov_kind: str = "full",
    seed: int | np.random.SeedSequence | np.random.Generator = 0,
) -> WgParams:
    """Draw a random wrapped-Gaussian parameter triple in minimal form.

    The base point is ``random_spd(d, 0.1, 1.0)``.  The tangent mean has
    independent entries uniform on ``[0, 0.1]``.  A full covariance is
    ``random_spd(n, 0.01, 0.02)`` with ``n = d*(d+1)//2``, which lands very
    close to the identity; a diagonal covariance has independent entries
    uniform on ``(0, 1]``.  The draw order is fixed: base point, then mean,
    then covariance.  The result is reduced to its minimal representative,
    so the diagonal-coordinate sum of the mean is zero up to roundoff.

    Parameters
    ----------
    d:
        Matrix dimension of the base point.
    cov_kind:
        ``"full"`` or ``"diagonal"`` (alias ``"diag"``).
    seed:
        Integer seed, ``SeedSequence``, or ``Generator``.

    Returns
    -------
    WgParams
        The minimal representative of the drawn parameters.
    """
    kind = normalize_cov_kind(cov_kind)
    rng = _as_generator(seed)
    n = d * (d + 1) // 2
    p = random_spd(d, 0.1, 1.0, rng)
    mu = rng.uniform(0.0, 0.1, size=n)
    if kind == "full":
        sigma = Covariance.full(random_spd(n, 0.01, 0.02, rng))
    else:
        # 1 - U keeps entries in (0, 1]: zero variance is not a covariance.
        sigma = Covariance.diagonal(1.0 - rng.random(n))
    return minimal_representative(WgParams(p, mu, sigma))
