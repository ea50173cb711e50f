"""Experiment drivers: estimation-error curves and cross-validated accuracy.

Both drivers split their work into independent cells (one parameter draw
and fit, or one classifier on one fold), run the cells in a thread pool,
and sort the results by key before reporting, so the output is identical
whatever the scheduling. Randomness is rooted per cell: the cell key is
spawned into a ``SeedSequence``, never a shared generator, which keeps
every cell reproducible in isolation.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import median
from typing import Iterable, Sequence

import numpy as np

from ..classifiers import (
    LabeledSpdDataset,
    fit_mdm,
    fit_tsda,
    fit_wda,
    predict_mdm,
    predict_tsda,
    predict_wda,
)
from ..estimation import MleOptions, fit_mle
from ..exceptions import InvalidInputError, NumericalError, SingularCovarianceError, SpdGaussError
from ..geometry import airm_dist
from ..linalg import validate_spd
from ..wrapped import minimal_representative, sample
from .config import ExperimentConfig
from .synthetic import random_wg_params

__all__ = [
    "ResultRow",
    "CvRow",
    "run_mle_curve",
    "write_curve_csv",
    "read_curve_csv",
    "summarize_curve",
    "stratified_folds",
    "run_cv",
    "write_cv_csv",
    "cov_from_series",
]

METRICS = ("dist_p", "err_mu", "dist_sigma")
_METRIC_RANK = {name: i for i, name in enumerate(METRICS)}

CURVE_COLUMNS = ("d", "N", "seed", "metric", "value", "wall_time", "failed")
CV_COLUMNS = ("classifier", "fold", "metric", "value", "wall_time")


@dataclass(frozen=True)
class ResultRow:
    """One measurement of one estimation cell: a (d, N, seed, metric) point.

    ``failed`` marks cells whose optimizer raised; their ``value`` is NaN
    and must be excluded from aggregation.
    """

    d: int
    n: int
    seed: int
    metric: str
    value: float
    wall_time: float
    failed: bool = False

    def key(self) -> tuple:
        return (self.d, self.n, self.seed, _METRIC_RANK.get(self.metric, 99))


@dataclass(frozen=True)
class CvRow:
    """One cross-validation number. ``fold`` is -1 for aggregate rows."""

    classifier: str
    fold: int
    metric: str
    value: float
    wall_time: float

    def key(self) -> tuple:
        return (self.classifier, self.metric, self.fold)


def _n_workers(n_tasks: int, threads: int | None) -> int:
    cap = threads if threads is not None else (os.cpu_count() or 1)
    return max(1, min(n_tasks, cap))


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Estimation-error curves


def _curve_cell(d: int, n: int, seed: int, config: ExperimentConfig) -> list[ResultRow]:
    """Draw truth, sample, fit, and measure one (d, N, seed) cell.

    The truth depends on (seed, d) only, so along the N axis every cell of
    a curve chases the same target with more data. Errors are computed
    between minimal representatives on both sides.
    """
    truth = random_wg_params(d, config.cov_kind, np.random.SeedSequence([seed, d]))
    rng = np.random.default_rng(np.random.SeedSequence([seed, d, n]))
    data = sample(truth, n, rng)
    opts = MleOptions(
        cov_kind=config.cov_kind,
        strategy=config.strategy,
        tol=config.tol,
        max_iter=config.max_iter,
    )
    start = time.perf_counter()
    try:
        theta_hat, _ = fit_mle(data, opts)
    except NumericalError:
        wall = 0.0 if config.deterministic else time.perf_counter() - start
        return [
            ResultRow(d, n, seed, metric, math.nan, wall, failed=True)
            for metric in METRICS
        ]
    wall = 0.0 if config.deterministic else time.perf_counter() - start
    truth = minimal_representative(truth)
    theta_hat = minimal_representative(theta_hat)
    values = {
        "dist_p": float(airm_dist(theta_hat.p, truth.p)),
        "err_mu": float(np.linalg.norm(theta_hat.mu - truth.mu)),
        "dist_sigma": float(airm_dist(theta_hat.sigma.matrix(), truth.sigma.matrix())),
    }
    return [ResultRow(d, n, seed, m, values[m], wall) for m in METRICS]


def run_mle_curve(config: ExperimentConfig, csv_path=None) -> list[ResultRow]:
    """Measure estimation error across the (dims x n_grid x seeds) grid.

    Every cell draws its own ground truth from (seed, d), samples N points,
    runs :func:`fit_mle`, and records three error metrics: the manifold
    distance between base points, the Euclidean distance between tangent
    means, and the manifold distance between covariance matrices. Optimizer
    failures do not stop the run; the cell is kept as NaN rows with the
    ``failed`` flag set.

    Cells run in a thread pool (``config.threads`` caps the width) and the
    returned rows are sorted by (d, N, seed, metric). When ``csv_path`` is
    given the rows are also written there; under ``config.deterministic``
    wall times are recorded as 0.0 so reruns are byte-identical.
    """
    if any(s < 0 for s in config.seeds):
        raise InvalidInputError("curve seeds must be nonnegative")
    cells = [
        (d, n, seed)
        for d in config.dims
        for n in config.n_grid
        for seed in config.seeds
    ]
    with ThreadPoolExecutor(_n_workers(len(cells), config.threads)) as pool:
        chunks = list(pool.map(lambda c: _curve_cell(*c, config), cells))
    rows = sorted((row for chunk in chunks for row in chunk), key=ResultRow.key)
    if csv_path is not None:
        write_curve_csv(rows, csv_path, config)
    return rows


def write_curve_csv(rows: Iterable[ResultRow], path, config: ExperimentConfig | None = None) -> None:
    """Write curve rows as CSV with a commented preamble.

    The preamble records the generator settings; nothing time- or
    machine-dependent goes into the file, so equal runs give equal bytes.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# mle-curve\n")
        if config is not None:
            fh.write(
                f"# cov_kind={config.cov_kind} strategy={config.strategy}"
                f" tol={_fmt(config.tol)} max_iter={config.max_iter}\n"
            )
            fh.write(
                "# dims={} n_grid={} seeds={}\n".format(
                    ",".join(map(str, config.dims)),
                    ",".join(map(str, config.n_grid)),
                    ",".join(map(str, config.seeds)),
                )
            )
            fh.write(f"# deterministic={config.deterministic}\n")
        fh.write("# errors compare minimal representatives of truth and estimate\n")
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for row in rows:
            fh.write(
                f"{row.d},{row.n},{row.seed},{row.metric},"
                f"{_fmt(row.value)},{_fmt(row.wall_time)},{int(row.failed)}\n"
            )


def read_curve_csv(path) -> list[ResultRow]:
    """Read a curve CSV produced by :func:`write_curve_csv`."""
    from ..exceptions import DataFormatError

    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip() and not line.startswith("#")]
    if not lines or lines[0].split(",") != list(CURVE_COLUMNS):
        raise DataFormatError(
            f"expected header {','.join(CURVE_COLUMNS)!r}", path
        )
    rows = []
    for idx, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != len(CURVE_COLUMNS):
            raise DataFormatError(f"expected {len(CURVE_COLUMNS)} fields", path, idx)
        try:
            rows.append(
                ResultRow(
                    int(parts[0]),
                    int(parts[1]),
                    int(parts[2]),
                    parts[3],
                    float(parts[4]),
                    float(parts[5]),
                    bool(int(parts[6])),
                )
            )
        except ValueError as err:
            raise DataFormatError(f"bad field: {err}", path, idx) from err
    return rows


def summarize_curve(rows: Sequence[ResultRow]) -> list[tuple]:
    """Aggregate curve rows to medians: (d, N, metric, median, n_ok, n_failed).

    Failed cells are excluded from the median; a group with no successes
    reports NaN. Output is sorted like the input rows, one line per
    (d, N, metric) group, ready for plotting.
    """
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.d, row.n, row.metric), []).append(row)
    out = []
    for (d, n, metric) in sorted(groups, key=lambda k: (k[0], k[1], _METRIC_RANK.get(k[2], 99))):
        cell = groups[(d, n, metric)]
        ok = [r.value for r in cell if not r.failed and math.isfinite(r.value)]
        med = median(ok) if ok else math.nan
        out.append((d, n, metric, med, len(ok), len(cell) - len(ok)))
    return out


# ---------------------------------------------------------------------------
# Cross-validation


def stratified_folds(
    labels: np.ndarray, k: int, seed: int, n_classes: int | None = None
) -> list[np.ndarray]:
    """Split indices into k stratified folds, deterministically per seed.

    Within each class the indices are shuffled, the classes are
    concatenated, and position ``j`` goes to fold ``j mod k``; a class with
    ``c`` members therefore puts either ``floor(c/k)`` or ``ceil(c/k)``
    members into every fold, which keeps class proportions within one
    sample per class per fold. With ``k == len(labels)`` this is
    leave-one-out. Folds are sorted index arrays covering everything
    exactly once.
    """
    labels = np.asarray(labels)
    n_total = labels.shape[0]
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    if k < 2:
        raise InvalidInputError(f"k_folds must be >= 2, got {k}")
    if k > n_total:
        raise InvalidInputError(f"cannot make {k} folds from {n_total} points")
    if seed < 0:
        raise InvalidInputError("fold seed must be nonnegative")
    counts = np.bincount(labels, minlength=n_classes)
    floor = 2 if k == n_total else k
    for c, cnt in enumerate(counts):
        if 0 < cnt < floor:
            raise InvalidInputError(
                f"stratification impossible: class {c} has {cnt} members, needs >= {floor}"
            )
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    order = []
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        order.append(idx)
    order = np.concatenate(order)
    assign = np.arange(n_total) % k
    return [np.sort(order[assign == f]) for f in range(k)]


def _fit_predict(name: str, train: LabeledSpdDataset, test: LabeledSpdDataset,
                 uniform_priors: bool, options: MleOptions | None) -> np.ndarray:
    if name == "mdm":
        return predict_mdm(fit_mdm(train, uniform_priors), test.matrices)
    if name in ("tslda", "tsqda"):
        kind = "lda" if name == "tslda" else "qda"
        model = fit_tsda(train, kind=kind, uniform_priors=uniform_priors)
        return predict_tsda(model, test.matrices)
    if name in ("howda", "hewda"):
        model = fit_wda(
            train,
            shared_sigma=(name == "howda"),
            options=options,
            uniform_priors=uniform_priors,
        )
        return predict_wda(model, test.matrices)
    raise InvalidInputError(f"unknown classifier {name!r}")


def run_cv(
    data,
    classifiers: Sequence[str] = ("mdm",),
    k: int = 5,
    seed: int = 0,
    uniform_priors: bool = False,
    options: MleOptions | None = None,
    threads: int | None = None,
    deterministic: bool = False,
) -> list[CvRow]:
    """Stratified k-fold cross-validation of the named classifiers.

    ``data`` is a :class:`LabeledSpdDataset` or a dataset file path. Folds
    are shared across classifiers and depend only on (labels, k, seed).
    Every (classifier, fold) pair trains on the other folds and scores
    accuracy on its own; the rows report each fold plus the mean and the
    sample standard deviation over folds (fold index -1). Wall times are
    per fold, summed in the aggregate rows, and forced to 0.0 when
    ``deterministic`` is set.

    A classifier error inside a fold aborts the run: accuracy on a file
    that cannot be fitted is not a meaningful number.
    """
    if isinstance(data, (str, os.PathLike)):
        from .io import load_dataset

        data = load_dataset(data)
    if not isinstance(data, LabeledSpdDataset):
        raise InvalidInputError(
            f"run_cv needs a dataset or a path, got {type(data).__name__}"
        )
    names = list(classifiers)
    if not names:
        raise InvalidInputError("no classifiers requested")
    folds = stratified_folds(data.labels, k, seed, data.n_classes)
    all_idx = np.arange(len(data))

    def one(task: tuple[str, int]) -> tuple[str, int, float, float]:
        name, fold = task
        test_idx = folds[fold]
        train_idx = np.setdiff1d(all_idx, test_idx, assume_unique=True)
        train, test = data.subset(train_idx), data.subset(test_idx)
        start = time.perf_counter()
        pred = _fit_predict(name, train, test, uniform_priors, options)
        wall = 0.0 if deterministic else time.perf_counter() - start
        acc = float(np.mean(pred == test.labels))
        return name, fold, acc, wall

    tasks = [(name, fold) for name in names for fold in range(len(folds))]
    with ThreadPoolExecutor(_n_workers(len(tasks), threads)) as pool:
        results = list(pool.map(one, tasks))

    rows: list[CvRow] = []
    for name in names:
        cell = sorted(r for r in results if r[0] == name)
        accs = np.array([r[2] for r in cell])
        total_wall = 0.0 if deterministic else float(sum(r[3] for r in cell))
        rows.extend(
            CvRow(name, fold, "accuracy", float(acc), wall)
            for (_, fold, acc, wall) in cell
        )
        rows.append(CvRow(name, -1, "accuracy_mean", float(np.mean(accs)), total_wall))
        rows.append(
            CvRow(name, -1, "accuracy_std", float(np.std(accs, ddof=1)), total_wall)
        )
    return sorted(rows, key=CvRow.key)


def write_cv_csv(rows: Iterable[CvRow], path) -> None:
    """Write cross-validation rows as a plain CSV."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CV_COLUMNS)
        for row in rows:
            writer.writerow(
                [row.classifier, row.fold, row.metric, _fmt(row.value), _fmt(row.wall_time)]
            )


# ---------------------------------------------------------------------------
# Covariance preprocessing


def cov_from_series(series, shrinkage: float = 0.0) -> np.ndarray:
    """Shrunk sample covariance of a T x m series: (1-a)*S + a*(tr(S)/m)*I.

    ``S`` is the unbiased sample covariance over the T rows. Shrinkage
    pulls it toward the scalar matrix with the same trace, a standard cure
    for rank deficiency when T is small relative to m. The result must be
    positive definite; otherwise (for example a constant series, whose S is
    zero no matter the shrinkage) :class:`SingularCovarianceError` is
    raised with the raw estimate attached.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim != 2:
        raise InvalidInputError(f"series must be T x m, got shape {series.shape}")
    t_len, m = series.shape
    if t_len < 2:
        raise InvalidInputError(f"series needs at least 2 rows, got {t_len}")
    if not np.all(np.isfinite(series)):
        raise InvalidInputError("series has non-finite entries")
    if not 0.0 <= shrinkage <= 1.0:
        raise InvalidInputError(f"shrinkage must be in [0, 1], got {shrinkage}")
    s = np.atleast_2d(np.cov(series, rowvar=False, ddof=1))
    shrunk = (1.0 - shrinkage) * s + shrinkage * (np.trace(s) / m) * np.eye(m)
    try:
        return validate_spd(shrunk)
    except SpdGaussError as err:
        raise SingularCovarianceError(
            f"shrunk covariance is not positive definite: {err}", sigma_raw=s
        ) from err
