"""Riemannian conjugate gradient over products of simple manifold factors.

The negative log likelihood of a wrapped Gaussian lives on a product of an
SPD manifold (the base point), a Euclidean space (the tangent mean), and
either another SPD manifold or the positive orthant (the covariance). This
module provides those factors behind one small interface, a product wrapper,
and a Hestenes-Stiefel conjugate gradient with Armijo backtracking that works
on any of them.

Points and tangents are bare ndarrays for single factors and tuples of
ndarrays for products; nothing here knows about distributions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, InvalidInputError, NumericalError
from .geometry import (
    airm_inner,
    exp_map,
    parallel_transport,
    tangent_basis,
    tangent_dim,
)
from .linalg import sym_part, validate_spd

__all__ = [
    "SpdFactor",
    "EuclideanFactor",
    "PositiveFactor",
    "ProductManifold",
    "CgOptions",
    "FitReport",
    "fd_gradient",
    "minimize_cg",
]


class SpdFactor:
    """SPD matrices of a fixed size under the affine-invariant metric."""

    def __init__(self, d: int):
        self.d = int(d)

    @property
    def dim(self) -> int:
        return tangent_dim(self.d)

    def inner(self, x, u, v) -> float:
        return float(airm_inner(x, u, v))

    def retract(self, x, u, step: float = 1.0) -> np.ndarray:
        return exp_map(x, step * u)

    def egrad2rgrad(self, x, g) -> np.ndarray:
        """Euclidean gradient to Riemannian: ``x sym(g) x``."""
        return x @ sym_part(np.asarray(g, dtype=float)) @ x

    def transport(self, x, y, u) -> np.ndarray:
        return parallel_transport(x, y, u)

    def basis(self, x):
        return tangent_basis(x)

    def zero_tangent(self, x) -> np.ndarray:
        return np.zeros_like(x)

    def validate_point(self, x) -> np.ndarray:
        return validate_spd(x)


class EuclideanFactor:
    """Flat vector factor with the dot-product metric."""

    def __init__(self, n: int):
        self.n = int(n)

    @property
    def dim(self) -> int:
        return self.n

    def inner(self, x, u, v) -> float:
        return float(np.dot(u, v))

    def retract(self, x, u, step: float = 1.0) -> np.ndarray:
        return x + step * u

    def egrad2rgrad(self, x, g) -> np.ndarray:
        return np.asarray(g, dtype=float)

    def transport(self, x, y, u) -> np.ndarray:
        return u

    def basis(self, x):
        return np.eye(self.n)

    def zero_tangent(self, x) -> np.ndarray:
        return np.zeros_like(x)

    def validate_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,) or not np.all(np.isfinite(x)):
            raise InvalidInputError(f"expected a finite vector of length {self.n}")
        return x


class PositiveFactor:
    """Strictly positive vectors with the log metric ``<u, v> = sum u v / x^2``.

    Isometric to a Euclidean space through the componentwise logarithm, so the
    exponential map ``x * exp(step * u / x)`` never leaves the orthant and
    parallel transport is the ratio rescaling ``u * y / x``.
    """

    def __init__(self, n: int):
        self.n = int(n)

    @property
    def dim(self) -> int:
        return self.n

    def inner(self, x, u, v) -> float:
        return float(np.sum(u * v / (x * x)))

    def retract(self, x, u, step: float = 1.0) -> np.ndarray:
        return x * np.exp(step * u / x)

    def egrad2rgrad(self, x, g) -> np.ndarray:
        return x * x * np.asarray(g, dtype=float)

    def transport(self, x, y, u) -> np.ndarray:
        return u * y / x

    def basis(self, x):
        return np.diag(x)

    def zero_tangent(self, x) -> np.ndarray:
        return np.zeros_like(x)

    def validate_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,) or not np.all(np.isfinite(x)):
            raise InvalidInputError(f"expected a finite vector of length {self.n}")
        if np.any(x <= 0.0):
            raise InvalidInputError("positive-orthant point has a nonpositive entry")
        return x


class ProductManifold:
    """Product of factors; points and tangents are tuples, one entry each."""

    def __init__(self, factors):
        self.factors = tuple(factors)
        if not self.factors:
            raise InvalidInputError("product manifold needs at least one factor")

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    def inner(self, x, u, v) -> float:
        return sum(f.inner(xi, ui, vi) for f, xi, ui, vi in zip(self.factors, x, u, v))

    def retract(self, x, u, step: float = 1.0):
        return tuple(f.retract(xi, ui, step) for f, xi, ui in zip(self.factors, x, u))

    def egrad2rgrad(self, x, g):
        return tuple(f.egrad2rgrad(xi, gi) for f, xi, gi in zip(self.factors, x, g))

    def transport(self, x, y, u):
        return tuple(
            f.transport(xi, yi, ui) for f, xi, yi, ui in zip(self.factors, x, y, u)
        )

    def basis(self, x):
        for i, (f, xi) in enumerate(zip(self.factors, x)):
            for e in f.basis(xi):
                yield tuple(
                    e if j == i else g.zero_tangent(xj)
                    for j, (g, xj) in enumerate(zip(self.factors, x))
                )

    def zero_tangent(self, x):
        return tuple(f.zero_tangent(xi) for f, xi in zip(self.factors, x))

    def validate_point(self, x):
        if len(x) != len(self.factors):
            raise InvalidInputError(
                f"product point has {len(x)} components, expected {len(self.factors)}"
            )
        return tuple(f.validate_point(xi) for f, xi in zip(self.factors, x))


def _lincomb(manifold, a, u, b=None, v=None):
    if isinstance(manifold, ProductManifold):
        if v is None:
            return tuple(a * ui for ui in u)
        return tuple(a * ui + b * vi for ui, vi in zip(u, v))
    if v is None:
        return a * u
    return a * u + b * v


def norm(manifold, x, u) -> float:
    """Metric norm of a tangent, clipped against tiny negative roundoff."""
    return math.sqrt(max(manifold.inner(x, u, u), 0.0))


@dataclass
class CgOptions:
    """Knobs of :func:`minimize_cg`.

    ``tol`` is the Riemannian gradient norm at which the run counts as
    converged; ``initial_step`` seeds the very first line search, after which
    each search starts from twice the previously accepted step. ``fd_step``
    is the (relative) central-difference step used when no gradient callback
    is supplied, and ``restart_every`` forces a steepest-descent restart every
    so many iterations (manifold dimension when left unset).
    """

    tol: float = 1e-6
    max_iter: int = 5000
    initial_step: float = 1.0
    armijo_c: float = 1e-4
    max_backtracks: int = 60
    fd_step: float = 1e-5
    restart_every: int | None = None


@dataclass
class FitReport:
    """Outcome of an optimization run (also reused by the estimators)."""

    iterations: int
    final_cost: float
    grad_norm: float
    converged: bool
    wall_time: float
    cost_trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_cost": self.final_cost,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "cost_trace": list(self.cost_trace),
        }


def fd_gradient(manifold, cost, x, h: float = 1e-5):
    """Riemannian gradient by central differences in an orthonormal basis.

    Differentiates ``t -> cost(retract(x, e, t))`` at 0 along every basis
    direction; since the basis is orthonormal in the metric, the coefficients
    assemble the Riemannian gradient directly. Cost: two evaluations per
    manifold dimension. Costs may be infinite outside their domain; next to
    such a wall the affected directions fall back to one-sided differences
    (and to zero when both sides are walled off).
    """
    g = manifold.zero_tangent(x)
    f0 = None
    for e in manifold.basis(x):
        fp = cost(manifold.retract(x, e, h))
        fm = cost(manifold.retract(x, e, -h))
        if math.isfinite(fp) and math.isfinite(fm):
            coeff = (fp - fm) / (2.0 * h)
        elif math.isfinite(fp) or math.isfinite(fm):
            if f0 is None:
                f0 = float(cost(x))
            coeff = (fp - f0) / h if math.isfinite(fp) else (f0 - fm) / h
        else:
            coeff = 0.0
        g = _lincomb(manifold, 1.0, g, coeff, e)
    return g


def minimize_cg(manifold, cost, x0, grad=None, options: CgOptions | None = None):
    """Minimize a smooth cost on a manifold by conjugate gradient.

    Hestenes-Stiefel directions with transported memory, Armijo backtracking
    (sufficient-decrease constant ``armijo_c``, halving), restart to steepest
    descent whenever the candidate direction is not a descent direction or on
    the periodic schedule. Accepted steps strictly decrease the cost, so the
    recorded trace is monotone.

    Parameters
    ----------
    manifold : factor or ProductManifold
        Geometry to optimize over.
    cost : callable
        Point -> float. Must be finite at ``x0``.
    x0 : point
        Initial point.
    grad : callable, optional
        Point -> Euclidean gradient (converted through ``egrad2rgrad``).
        When omitted, a central-difference Riemannian gradient is used.
    options : CgOptions, optional

    Returns
    -------
    (point, FitReport)
        Best point seen and the run diagnostics.

    Raises
    ------
    InvalidInputError
        If the cost is not finite at the initial point.
    NumericalError
        If the cost stays non-finite throughout a whole line search; the
        error carries the best point and the report so far. A line search
        that sees finite costs but no sufficient decrease (the gradient has
        hit the evaluation noise floor) ends the run instead, returning the
        best point with ``converged=False``.
    """
    opts = options or CgOptions()
    started = time.perf_counter()
    x = manifold.validate_point(x0)
    f = float(cost(x))
    if not math.isfinite(f):
        raise InvalidInputError(f"cost is not finite at the initial point ({f})")
    trace = [f]

    def rgrad(point):
        if grad is None:
            return fd_gradient(manifold, cost, point, opts.fd_step)
        return manifold.egrad2rgrad(point, grad(point))

    def make_report(n_iter, gn, ok):
        return FitReport(
            iterations=n_iter,
            final_cost=f,
            grad_norm=gn,
            converged=ok,
            wall_time=time.perf_counter() - started,
            cost_trace=trace,
        )

    g = rgrad(x)
    gnorm = norm(manifold, x, g)
    if gnorm <= opts.tol:
        return x, make_report(0, gnorm, True)

    restart_every = opts.restart_every if opts.restart_every else max(manifold.dim, 1)
    direction = _lincomb(manifold, -1.0, g)
    prev_step = opts.initial_step
    n_iter = 0

    while n_iter < opts.max_iter:
        n_iter += 1
        slope = manifold.inner(x, g, direction)
        if not (math.isfinite(slope) and slope < 0.0):
            direction = _lincomb(manifold, -1.0, g)
            slope = -gnorm * gnorm

        accepted = None
        saw_finite = False
        for attempt in range(2):
            step = 2.0 * prev_step
            for _ in range(opts.max_backtracks):
                # A long trial step can overflow the retraction or leave the
                # cost's domain; both count as infinite cost and shrink the
                # step rather than aborting the search.
                try:
                    with np.errstate(over="ignore", invalid="ignore"):
                        x_new = manifold.retract(x, direction, step)
                        f_new = float(cost(x_new))
                except (DomainError, InvalidInputError):
                    f_new = math.inf
                if math.isfinite(f_new):
                    saw_finite = True
                    # Strict decrease on top of Armijo: once the cost
                    # saturates in floating point the run must stall, not
                    # spin on zero-progress acceptances.
                    if f_new < f and f_new <= f + opts.armijo_c * step * slope:
                        accepted = (x_new, float(f_new), step)
                        break
                step *= 0.5
            if accepted is not None:
                break
            if attempt == 0:
                # The conjugate direction stalled; fall back to steepest descent.
                direction = _lincomb(manifold, -1.0, g)
                slope = -gnorm * gnorm
        if accepted is None:
            if not saw_finite:
                raise NumericalError(
                    "minimize_cg: cost stayed non-finite through the whole "
                    f"line search at iteration {n_iter} "
                    f"(gradient norm {gnorm:.3e})",
                    last_iterate=x,
                    report=make_report(n_iter, gnorm, False),
                )
            # Finite costs but no sufficient decrease: the finite-difference
            # gradient is below the cost's evaluation noise; x is best seen.
            return x, make_report(n_iter, gnorm, False)

        x_prev, g_prev, d_prev = x, g, direction
        x, f, prev_step = accepted
        trace.append(f)

        g = rgrad(x)
        gnorm = norm(manifold, x, g)
        if gnorm <= opts.tol:
            return x, make_report(n_iter, gnorm, True)

        if n_iter % restart_every == 0:
            direction = _lincomb(manifold, -1.0, g)
            continue
        g_prev_t = manifold.transport(x_prev, x, g_prev)
        d_prev_t = manifold.transport(x_prev, x, d_prev)
        y = _lincomb(manifold, 1.0, g, -1.0, g_prev_t)
        denom = manifold.inner(x, d_prev_t, y)
        if math.isfinite(denom) and abs(denom) > 1e-300:
            beta = manifold.inner(x, g, y) / denom
        else:
            beta = 0.0
        if not math.isfinite(beta):
            beta = 0.0
        direction = _lincomb(manifold, -1.0, g, beta, d_prev_t)

    return x, make_report(n_iter, gnorm, False)
