"""Generative classifiers for labeled SPD matrices.

All five classifiers score a test matrix by a class log likelihood and pick
the argmax, differing only in the distribution family fitted per class:

* MDM: isotropic wrapped Gaussian around a per-class Karcher mean; the
  spread never enters the decision, so prediction reduces to nearest mean.
* Tangent-space discriminant analysis: every class is a Gaussian in the
  tangent coordinates at the global Karcher mean, with a shared (lda) or
  per-class (qda) covariance, optionally diagonal.
* Wrapped discriminant analysis: every class is a full wrapped Gaussian
  with its own base point, homogeneous (shared covariance) or heterogeneous
  (per-class covariance).

Fitting parallelizes across classes; models are frozen after fit and
prediction is pure. Ties always resolve to the smallest class label.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    NumericalError,
    RegularizationWarning,
)
from .geometry import airm_dist, karcher_mean, tangent_dim
from .estimation import COND_LIMIT, MleOptions, _is_singular, _ridge, fit_mle
from .linalg import spectral_condition
from .optim import CgOptions, SpdFactor, minimize_cg
from .wrapped import (
    Covariance,
    EllipticalGenerator,
    WgParams,
    _log_jac_from_eigs,
    _unwrap_with_eigs,
    log_density,
    minimal_representative,
    unwrap_point,
)

__all__ = [
    "LabeledSpdDataset",
    "MdmModel",
    "TsdaModel",
    "WdaModel",
    "fit_mdm",
    "predict_mdm",
    "fit_tsda",
    "predict_tsda",
    "fit_wda",
    "predict_wda",
    "predict_log_proba",
]

_GAUSS = EllipticalGenerator.gaussian()


def _pool(n_tasks: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=max(1, min(n_tasks, os.cpu_count() or 1)))


@dataclass(frozen=True)
class LabeledSpdDataset:
    """SPD matrices with integer class labels in ``[0, n_classes)``.

    ``n_classes`` is the label-space size, not the number of labels present;
    a fold of a dataset keeps the full label space so that per-class
    structures stay aligned across folds.
    """

    matrices: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        labels = np.asarray(self.labels)
        if mats.ndim != 3 or mats.shape[-1] != mats.shape[-2] or mats.shape[0] == 0:
            raise InvalidInputError(
                f"expected a nonempty stack of square matrices, got shape {mats.shape}"
            )
        if labels.shape != (mats.shape[0],):
            raise InvalidInputError(
                f"got {mats.shape[0]} matrices but {labels.shape} labels"
            )
        if not np.issubdtype(labels.dtype, np.integer):
            rounded = np.asarray(labels, dtype=np.int64)
            if not np.array_equal(rounded, labels):
                raise InvalidInputError("labels must be integers")
            labels = rounded
        if self.n_classes < 1:
            raise InvalidInputError("n_classes must be at least 1")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise InvalidInputError(
                f"labels must lie in [0, {self.n_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        from .linalg import validate_spd

        object.__setattr__(self, "matrices", validate_spd(mats))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_arrays(cls, matrices, labels, n_classes: int | None = None):
        labels = np.asarray(labels)
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if labels.size else 0
        return cls(matrices, labels, int(n_classes))

    def __len__(self) -> int:
        return self.matrices.shape[0]

    @property
    def d(self) -> int:
        return self.matrices.shape[-1]

    def class_members(self, k: int) -> np.ndarray:
        return self.matrices[self.labels == k]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, indices) -> "LabeledSpdDataset":
        indices = np.asarray(indices)
        return LabeledSpdDataset(
            self.matrices[indices], self.labels[indices], self.n_classes
        )


def _check_classes_nonempty(data: LabeledSpdDataset, op: str) -> None:
    counts = data.class_counts()
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise InvalidInputError(f"{op}: class {int(empty[0])} has no training points")


def _log_priors(data: LabeledSpdDataset, uniform: bool) -> np.ndarray:
    if uniform:
        return np.full(data.n_classes, -math.log(data.n_classes))
    return np.log(data.class_counts() / len(data))


def _check_dim(model_d: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model_d or x.shape[-2] != model_d:
        raise DimensionMismatchError(
            f"model expects {model_d}x{model_d} matrices, got shape {x.shape}"
        )
    return x


def _decide(scores: np.ndarray, single: bool):
    """First-maximum argmax, so ties resolve to the smallest class label."""
    labels = np.argmax(scores, axis=-1)
    return int(labels[0]) if single else labels


@dataclass(frozen=True)
class MdmModel:
    """Nearest-Karcher-mean classifier state."""

    class_means: np.ndarray
    log_priors: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def d(self) -> int:
        return self.class_means.shape[-1]

    def to_dict(self) -> dict:
        return {
            "kind": "mdm",
            "class_means": self.class_means.tolist(),
            "log_priors": self.log_priors.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MdmModel":
        return cls(
            np.asarray(payload["class_means"], dtype=float),
            np.asarray(payload["log_priors"], dtype=float),
        )


@dataclass(frozen=True)
class TsdaModel:
    """Tangent-space discriminant analysis state.

    ``cov`` is a single shared :class:`Covariance` for lda and a tuple with
    one entry per class for qda; ``diag`` records whether the covariances
    were restricted to their diagonals at fit time.
    """

    base: np.ndarray
    class_mu: np.ndarray
    cov: Covariance | tuple[Covariance, ...]
    kind: str
    diag: bool
    log_priors: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.class_mu.shape[0]

    @property
    def d(self) -> int:
        return self.base.shape[-1]

    def to_dict(self) -> dict:
        cov = (
            self.cov.to_dict()
            if self.kind == "lda"
            else [c.to_dict() for c in self.cov]
        )
        return {
            "kind": "tsda",
            "da_kind": self.kind,
            "diag": self.diag,
            "base": self.base.tolist(),
            "class_mu": self.class_mu.tolist(),
            "cov": cov,
            "log_priors": self.log_priors.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TsdaModel":
        if payload["da_kind"] == "lda":
            cov = Covariance.from_dict(payload["cov"])
        else:
            cov = tuple(Covariance.from_dict(c) for c in payload["cov"])
        return cls(
            np.asarray(payload["base"], dtype=float),
            np.asarray(payload["class_mu"], dtype=float),
            cov,
            payload["da_kind"],
            bool(payload["diag"]),
            np.asarray(payload["log_priors"], dtype=float),
        )


@dataclass(frozen=True)
class WdaModel:
    """Wrapped discriminant analysis state: one WgParams per class.

    ``fit_rounds`` and ``fit_cost_trace`` are diagnostics of the shared-
    covariance alternation (empty for the heterogeneous fit); they do not
    participate in equality or serialization.
    """

    class_params: tuple[WgParams, ...]
    shared_sigma: bool
    log_priors: np.ndarray
    fit_rounds: int = field(default=0, compare=False)
    fit_cost_trace: tuple = field(default=(), compare=False)

    @property
    def n_classes(self) -> int:
        return len(self.class_params)

    @property
    def d(self) -> int:
        return self.class_params[0].d

    def to_dict(self) -> dict:
        return {
            "kind": "wda",
            "shared_sigma": self.shared_sigma,
            "class_params": [t.to_dict() for t in self.class_params],
            "log_priors": self.log_priors.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "WdaModel":
        return cls(
            tuple(WgParams.from_dict(t) for t in payload["class_params"]),
            bool(payload["shared_sigma"]),
            np.asarray(payload["log_priors"], dtype=float),
        )


def fit_mdm(
    data: LabeledSpdDataset,
    uniform_priors: bool = False,
    karcher_tol: float = 1e-10,
    karcher_max_iter: int = 200,
) -> MdmModel:
    """Fit the minimum-distance-to-mean classifier.

    Each class is summarized by the Karcher mean of its training matrices;
    classes are fitted in parallel. Priors are stored for interface
    uniformity but do not enter :func:`predict_mdm`.
    """
    _check_classes_nonempty(data, "fit_mdm")

    def mean_of(k: int) -> np.ndarray:
        return karcher_mean(
            data.class_members(k), tol=karcher_tol, max_iter=karcher_max_iter
        )

    with _pool(data.n_classes) as pool:
        means = list(pool.map(mean_of, range(data.n_classes)))
    return MdmModel(np.stack(means), _log_priors(data, uniform_priors))


def predict_mdm(model: MdmModel, x):
    """Label of the nearest class mean in the affine-invariant distance.

    Accepts one matrix or a stack; ties go to the smallest label. The
    decision is invariant under a joint congruence of the model's means and
    the query by any fixed invertible matrix.
    """
    x = _check_dim(model.d, x)
    single = x.ndim == 2
    pts = x[None] if single else x
    dists = np.stack(
        [airm_dist(model.class_means[k], pts) for k in range(model.n_classes)],
        axis=-1,
    )
    return _decide(-dists, single)


def _class_moments(t: np.ndarray, labels: np.ndarray, n_classes: int):
    """Per-class coordinate means and the centered residuals."""
    n = t.shape[-1]
    mus = np.empty((n_classes, n))
    residuals = np.empty_like(t)
    for k in range(n_classes):
        members = labels == k
        mus[k] = t[members].mean(axis=0)
        residuals[members] = t[members] - mus[k]
    return mus, residuals


def _covariance_of(raw: np.ndarray, kind: str, what: str) -> Covariance:
    """Wrap a raw covariance estimate, ridging singular ones with a warning."""
    if _is_singular(raw, kind):
        warnings.warn(
            f"singular {what}; applying ridge regularization",
            RegularizationWarning,
            stacklevel=3,
        )
        raw = _ridge(raw, kind)
    return Covariance(kind, raw)


def fit_tsda(
    data: LabeledSpdDataset,
    kind: str = "lda",
    diag: bool = False,
    uniform_priors: bool = False,
    karcher_tol: float = 1e-10,
    karcher_max_iter: int = 200,
) -> TsdaModel:
    """Fit linear or quadratic discriminant analysis in the tangent space.

    All training matrices are unwrapped at their global Karcher mean. Each
    class contributes its coordinate mean; lda pools the within-class
    scatters into one covariance (biased, divided by the total count), qda
    keeps one covariance per class. ``diag`` keeps only the variances,
    which for qda is the Gaussian naive Bayes classifier. Singular
    covariance estimates are ridged with a warning.
    """
    if kind not in ("lda", "qda"):
        raise InvalidInputError(f"unknown discriminant kind {kind!r}")
    _check_classes_nonempty(data, "fit_tsda")

    base = karcher_mean(data.matrices, tol=karcher_tol, max_iter=karcher_max_iter)
    t = unwrap_point(base, data.matrices)
    mus, residuals = _class_moments(t, data.labels, data.n_classes)
    cov_kind = "diagonal" if diag else "full"

    if kind == "lda":
        if diag:
            raw = np.mean(residuals * residuals, axis=0)
        else:
            raw = residuals.T @ residuals / len(data)
        cov = _covariance_of(raw, cov_kind, "pooled covariance")
    else:
        covs = []
        for k in range(data.n_classes):
            dev = residuals[data.labels == k]
            if diag:
                raw = np.mean(dev * dev, axis=0)
            else:
                raw = dev.T @ dev / dev.shape[0]
            covs.append(_covariance_of(raw, cov_kind, f"covariance of class {k}"))
        cov = tuple(covs)

    return TsdaModel(base, mus, cov, kind, diag, _log_priors(data, uniform_priors))


def _tsda_scores(model: TsdaModel, pts: np.ndarray) -> np.ndarray:
    t = unwrap_point(model.base, pts)
    n = t.shape[-1]
    scores = np.empty((t.shape[0], model.n_classes))
    for k in range(model.n_classes):
        sigma = model.cov if model.kind == "lda" else model.cov[k]
        q = sigma.mahalanobis(t - model.class_mu[k])
        scores[:, k] = (
            _GAUSS.log_norm_const(n)
            - 0.5 * sigma.logdet()
            + _GAUSS.log_radial(q, n)
            + model.log_priors[k]
        )
    return scores


def _wda_scores(model: WdaModel, pts: np.ndarray) -> np.ndarray:
    scores = np.empty((pts.shape[0], model.n_classes))
    for k, theta in enumerate(model.class_params):
        scores[:, k] = log_density(theta, pts) + model.log_priors[k]
    return scores


def predict_tsda(model: TsdaModel, x):
    """Most likely class of a tangent-space discriminant model.

    Scores are Gaussian log likelihoods of the unwrapped coordinates plus
    log priors; the Jacobian factor of the wrapped density is shared by all
    classes at the common base and is omitted. Ties go to the smallest
    label.
    """
    x = _check_dim(model.d, x)
    single = x.ndim == 2
    scores = _tsda_scores(model, x[None] if single else x)
    return _decide(scores, single)


def predict_wda(model: WdaModel, x):
    """Most likely class of a wrapped discriminant model.

    Scores are full wrapped-Gaussian log densities plus log priors; each
    class keeps its own Jacobian term because the base points differ. Ties
    go to the smallest label.
    """
    x = _check_dim(model.d, x)
    single = x.ndim == 2
    scores = _wda_scores(model, x[None] if single else x)
    return _decide(scores, single)


def predict_log_proba(model, x) -> np.ndarray:
    """Log posterior class probabilities under a fitted model.

    Works for :class:`TsdaModel` and :class:`WdaModel`. The returned rows
    are normalized, so exponentiating and summing gives 1.
    """
    x = _check_dim(model.d, x)
    single = x.ndim == 2
    pts = x[None] if single else x
    if isinstance(model, TsdaModel):
        scores = _tsda_scores(model, pts)
    elif isinstance(model, WdaModel):
        scores = _wda_scores(model, pts)
    else:
        raise InvalidInputError(
            f"predict_log_proba supports TsdaModel and WdaModel, got {type(model).__name__}"
        )
    shifted = scores - scores.max(axis=-1, keepdims=True)
    log_post = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    return log_post[0] if single else log_post


def _fit_hewda(data: LabeledSpdDataset, opts: MleOptions):
    def fit_class(k: int) -> WgParams:
        try:
            theta, _ = fit_mle(data.class_members(k), opts)
        except NumericalError as err:
            raise NumericalError(
                f"class {k}: {err}",
                last_iterate=err.last_iterate,
                report=err.report,
            ) from err
        return theta

    with _pool(data.n_classes) as pool:
        return tuple(pool.map(fit_class, range(data.n_classes))), 0, ()


def _class_scatter_stats(p, xs, cov_kind: str):
    """Scatter of class coordinates at base ``p`` and the class Jacobian sum.

    The scatter is centered at the class's own coordinate mean, which is
    the exact conditional maximizer of the mean for any fixed covariance.
    """
    t, log_eigs = _unwrap_with_eigs(p, xs)
    log_jac = _log_jac_from_eigs(log_eigs)
    dev = t - t.mean(axis=0)
    if cov_kind == "full":
        scatter = dev.T @ dev
    else:
        scatter = np.sum(dev * dev, axis=0)
    return scatter, math.fsum(log_jac.tolist())


def _pooled_logdet(scatter_sum, n_total: int, cov_kind: str) -> float:
    """Log determinant of the pooled covariance ``scatter_sum / n_total``."""
    raw = scatter_sum / n_total
    if _is_singular(raw, cov_kind):
        warnings.warn(
            "singular pooled covariance; applying ridge regularization",
            RegularizationWarning,
            stacklevel=4,
        )
        raw = _ridge(raw, cov_kind)
    return Covariance(cov_kind, raw).logdet()


def _fit_howda(data: LabeledSpdDataset, opts: MleOptions, max_rounds: int):
    """Block-coordinate descent for the shared-covariance wrapped model.

    Cycles conjugate-gradient steps over the class base points; inside
    every step the class means and the shared covariance keep their exact
    conditional maximizers (class coordinate means, pooled residual
    covariance), which collapses the joint cost to

        N * (n + log det Sigma_hat(p_1..p_K)) / 2 + sum of log Jacobians

    up to constants. Every accepted step decreases that joint cost, so the
    alternation is monotone; it stops when a full cycle no longer decreases
    it (to roundoff) or at the round cap. With one class this is exactly
    the profiled maximum-likelihood fit.

    Each per-class solve runs a bounded segment of conjugate gradient (at
    most 100 iterations): the alternation revisits every class each round,
    so polishing one base to exact convergence while the others are stale
    buys nothing. The stationary points are unchanged.
    """
    class_data = [data.class_members(k) for k in range(data.n_classes)]
    n_total = len(data)
    n = tangent_dim(data.d)
    cg = CgOptions(
        tol=opts.tol, max_iter=min(100, opts.max_iter), fd_step=opts.fd_step
    )

    bases = [
        karcher_mean(xs, tol=opts.karcher_tol, max_iter=opts.karcher_max_iter)
        for xs in class_data
    ]
    stats = [
        _class_scatter_stats(p_k, xs, opts.cov_kind)
        for p_k, xs in zip(bases, class_data)
    ]

    def cost_from(stats_) -> float:
        scatter_sum = sum(s for s, _ in stats_)
        logdet = _pooled_logdet(scatter_sum, n_total, opts.cov_kind)
        jac = sum(j for _, j in stats_)
        lnc = _GAUSS.log_norm_const(n)
        return (n_total * (-lnc + 0.5 * (logdet + n)) + jac) / n_total

    cost = cost_from(stats)
    trace = [cost]
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        for k in range(data.n_classes):
            def class_cost(p):
                if spectral_condition(p) > COND_LIMIT:
                    return math.inf
                trial = stats.copy()
                trial[k] = _class_scatter_stats(p, class_data[k], opts.cov_kind)
                return cost_from(trial)

            try:
                bases[k], _ = minimize_cg(
                    SpdFactor(data.d), class_cost, bases[k], options=cg
                )
            except NumericalError as err:
                raise NumericalError(
                    f"class {k}: {err}",
                    last_iterate=err.last_iterate,
                    report=err.report,
                ) from err
            stats[k] = _class_scatter_stats(bases[k], class_data[k], opts.cov_kind)
        new_cost = cost_from(stats)
        trace.append(new_cost)
        if cost - new_cost <= 1e-10 * (1.0 + abs(new_cost)):
            cost = new_cost
            break
        cost = new_cost

    scatter_sum = sum(s for s, _ in stats)
    raw = scatter_sum / n_total
    if _is_singular(raw, opts.cov_kind):
        raw = _ridge(raw, opts.cov_kind)
    sigma = Covariance(opts.cov_kind, raw)
    params = []
    for p_k, xs in zip(bases, class_data):
        t = unwrap_point(p_k, xs)
        params.append(WgParams(p_k, t.mean(axis=0), sigma))
    return tuple(params), rounds, tuple(trace)


def fit_wda(
    data: LabeledSpdDataset,
    shared_sigma: bool = False,
    options: MleOptions | None = None,
    uniform_priors: bool = False,
    max_rounds: int = 50,
) -> WdaModel:
    """Fit wrapped discriminant analysis.

    With ``shared_sigma=False`` (heterogeneous), every class gets its own
    maximum-likelihood wrapped Gaussian, fitted independently and in
    parallel. With ``shared_sigma=True`` (homogeneous), the classes share
    one covariance and the joint likelihood is maximized by block-coordinate
    descent; ``max_rounds`` caps the alternation. Class parameters are
    stored as minimal representatives. Optimizer failures carry the index
    of the class that failed.
    """
    _check_classes_nonempty(data, "fit_wda")
    opts = options or MleOptions()
    if shared_sigma:
        params, rounds, trace = _fit_howda(data, opts, max_rounds)
    else:
        params, rounds, trace = _fit_hewda(data, opts)
    params = tuple(minimal_representative(t) for t in params)
    return WdaModel(
        params, shared_sigma, _log_priors(data, uniform_priors), rounds, trace
    )
