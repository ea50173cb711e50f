"""Symmetric-matrix kernels: eigendecomposition and spectral functions.

All heavy lifting is delegated to LAPACK through :func:`numpy.linalg.eigh`;
this module pins down the conventions the rest of the package relies on
(descending eigenvalue order, symmetrized outputs, typed domain errors) and
supports stacked operands with leading batch axes throughout.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import DomainError, InvalidInputError, NumericalError

__all__ = [
    "EigenDecomp",
    "sym_part",
    "check_symmetric",
    "eigh_sym",
    "expm",
    "logm",
    "sqrtm",
    "invsqrtm",
    "powm",
    "is_spd",
    "validate_spd",
    "spectral_condition",
]

# Relative slack used when deciding whether a barely negative eigenvalue of a
# nominally PSD matrix is roundoff (clamped) or a genuine domain violation.
_PSD_SLACK = 1e-12


class EigenDecomp(NamedTuple):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    ``values`` has shape ``(..., d)`` sorted in descending order and
    ``vectors`` has shape ``(..., d, d)`` with orthonormal eigenvectors in the
    columns, so that ``vectors @ diag(values) @ vectors.T`` reconstructs the
    input.
    """

    values: np.ndarray
    vectors: np.ndarray


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInputError(
            f"expected a square matrix (or stack of them), got shape {a.shape}"
        )
    return a


def sym_part(a) -> np.ndarray:
    """Return the symmetric part ``(a + a.T) / 2`` (batched on leading axes)."""
    a = _as_square(a)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def check_symmetric(a, tol: float = 1e-9) -> np.ndarray:
    """Validate symmetry of ``a`` and return its exactly symmetric part.

    Parameters
    ----------
    a : ndarray, shape (..., d, d)
        Matrix or stack of matrices.
    tol : float
        Largest tolerated absolute entrywise asymmetry ``max |a - a.T|``.

    Raises
    ------
    InvalidInputError
        If any entry is non-finite or the asymmetry exceeds ``tol``.
    """
    a = _as_square(a)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    asym = np.max(np.abs(a - np.swapaxes(a, -1, -2))) if a.size else 0.0
    if asym > tol:
        raise InvalidInputError(
            f"matrix is not symmetric: max asymmetry {asym:.3e} exceeds {tol:.3e}"
        )
    return sym_part(a)


def eigh_sym(a, check: bool = True) -> EigenDecomp:
    """Eigendecomposition of a symmetric matrix with descending eigenvalues.

    Parameters
    ----------
    a : ndarray, shape (..., d, d)
        Symmetric matrix or stack of symmetric matrices.
    check : bool
        Validate finiteness and symmetry first. Internal callers that already
        hold a symmetrized matrix pass ``False`` to skip the scan.

    Returns
    -------
    EigenDecomp
        ``values`` descending, ``vectors`` orthonormal columns.
    """
    a = check_symmetric(a) if check else _as_square(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"symmetric eigendecomposition failed: {exc}") from exc
    return EigenDecomp(w[..., ::-1], v[..., :, ::-1])


def _apply_spectral(a, fn: Callable[[np.ndarray], np.ndarray], check: bool) -> np.ndarray:
    w, v = eigh_sym(a, check=check)
    fw = fn(w)
    out = np.einsum("...ik,...k,...jk->...ij", v, fw, v)
    return sym_part(out)


def expm(a, check: bool = True) -> np.ndarray:
    """Matrix exponential of a symmetric matrix (spectral form)."""
    return _apply_spectral(a, np.exp, check)


def logm(a, check: bool = True) -> np.ndarray:
    """Matrix logarithm of an SPD matrix.

    Raises
    ------
    DomainError
        If any eigenvalue is not strictly positive.
    """

    def _log(w):
        if np.any(w <= 0.0):
            raise DomainError(
                f"matrix logarithm needs a positive spectrum; min eigenvalue {w.min():.3e}"
            )
        return np.log(w)

    return _apply_spectral(a, _log, check)


def sqrtm(a, check: bool = True) -> np.ndarray:
    """Symmetric square root of a positive semi-definite matrix.

    Eigenvalues within roundoff below zero are clamped; anything genuinely
    negative raises :class:`DomainError`.
    """

    def _sqrt(w):
        floor = -_PSD_SLACK * max(1.0, float(np.max(np.abs(w), initial=0.0)))
        if np.any(w < floor):
            raise DomainError(
                f"matrix square root needs a nonnegative spectrum; min eigenvalue {w.min():.3e}"
            )
        return np.sqrt(np.clip(w, 0.0, None))

    return _apply_spectral(a, _sqrt, check)


def invsqrtm(a, check: bool = True) -> np.ndarray:
    """Inverse symmetric square root of an SPD matrix.

    Raises
    ------
    DomainError
        If any eigenvalue is not strictly positive.
    """

    def _invsqrt(w):
        if np.any(w <= 0.0):
            raise DomainError(
                f"inverse square root needs a positive spectrum; min eigenvalue {w.min():.3e}"
            )
        return 1.0 / np.sqrt(w)

    return _apply_spectral(a, _invsqrt, check)


def powm(a, alpha: float, check: bool = True) -> np.ndarray:
    """Matrix power ``a ** alpha`` of an SPD matrix via its spectrum."""

    def _pow(w):
        if np.any(w <= 0.0):
            raise DomainError(
                f"matrix power needs a positive spectrum; min eigenvalue {w.min():.3e}"
            )
        return np.power(w, alpha)

    return _apply_spectral(a, _pow, check)


def validate_spd(a, eps_pd: float | None = None, tol_sym: float = 1e-9) -> np.ndarray:
    """Validate that ``a`` is symmetric positive definite; return it symmetrized.

    Parameters
    ----------
    a : ndarray, shape (..., d, d)
        Candidate matrix or stack.
    eps_pd : float, optional
        Positivity threshold: every eigenvalue must exceed it. Defaults to
        ``1e-12 * max eigenvalue`` per matrix, with an absolute floor of
        1e-300 so the zero matrix never passes.
    tol_sym : float
        Symmetry tolerance forwarded to :func:`check_symmetric`.

    Raises
    ------
    DomainError
        If some eigenvalue is at or below the threshold.
    InvalidInputError
        If the matrix is not (numerically) symmetric or not finite.
    """
    a = check_symmetric(a, tol=tol_sym)
    w = eigh_sym(a, check=False).values
    wmax = w[..., 0]
    wmin = w[..., -1]
    if eps_pd is None:
        thresh = np.maximum(1e-12 * wmax, 1e-300)
    else:
        thresh = np.asarray(eps_pd, dtype=float)
    if np.any(wmin <= thresh):
        raise DomainError(
            "matrix is not positive definite: "
            f"min eigenvalue {float(np.min(wmin)):.6e} at threshold {float(np.max(thresh)):.3e}"
        )
    return a


def is_spd(a, eps_pd: float | None = None) -> bool:
    """Return True when :func:`validate_spd` would accept ``a``."""
    try:
        validate_spd(a, eps_pd=eps_pd)
    except InvalidInputError:
        return False
    return True


def spectral_condition(a) -> float:
    """Eigenvalue ratio max/min of a symmetric matrix meant to be SPD.

    Returns ``inf`` for anything outside the SPD cone (a non-positive
    eigenvalue) or with non-finite entries, so callers can use one threshold
    test to fence off degenerate points. No symmetry check is performed.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        return math.inf
    w = np.linalg.eigvalsh(a)
    if w[0] <= 0.0:
        return math.inf
    return float(w[-1] / w[0])
