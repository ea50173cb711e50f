"""Command-line interface.

One executable, ``spdgauss``, with subcommands for sampling, density
evaluation, estimation, the estimation-error curve, classification, cross-
validation, covariance preprocessing, and plot preparation. Global flags
(``--seed``, ``--deterministic``, ``--threads``, ``--config``) are accepted
both before and after the subcommand; precedence is command line over
config file over defaults.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
With ``--deterministic`` every wall-time field in the outputs is written as
0.0, which together with ``--seed`` makes output files byte-identical
across reruns.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ..classifiers import (
    LabeledSpdDataset,
    MdmModel,
    TsdaModel,
    WdaModel,
    fit_mdm,
    fit_tsda,
    fit_wda,
    predict_mdm,
    predict_tsda,
    predict_wda,
)
from ..estimation import MleOptions, fit_mle, neg_log_lik
from ..exceptions import (
    DataFormatError,
    InvalidInputError,
    NumericalError,
    SpdGaussError,
)
from ..wrapped import log_density, sample
from .config import CLASSIFIER_NAMES, ExperimentConfig
from .experiments import (
    cov_from_series,
    read_curve_csv,
    run_cv,
    run_mle_curve,
    summarize_curve,
    write_cv_csv,
)
from .io import load_dataset, load_model, load_params, save_dataset, save_matrix, save_model, save_params

__all__ = ["main", "build_parser"]


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps unset flags out of the namespace, so a subcommand-level
    # flag can override a root-level one without clobbering it with None.
    parent = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    parent.add_argument("--seed", type=int, help="root random seed")
    parent.add_argument(
        "--deterministic",
        action="store_true",
        help="write wall times as 0.0 so equal runs give equal bytes",
    )
    parent.add_argument("--threads", type=int, help="worker-pool width")
    parent.add_argument("--config", help="INI config file; flags override it")
    return parent


def build_parser() -> argparse.ArgumentParser:
    shared = _global_flags()
    parser = argparse.ArgumentParser(
        prog="spdgauss",
        parents=[shared],
        description="Wrapped Gaussian distributions on SPD matrices: "
        "sampling, densities, estimation, classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("sample", parents=[shared], help="draw from a wrapped Gaussian")
    p.add_argument("--params", required=True, help="parameter JSON file")
    p.add_argument("--count", type=int, default=argparse.SUPPRESS, help="number of draws")
    p.add_argument("--out", required=True, help="output dataset (.jsonl or .csv)")

    p = sub.add_parser("density", parents=[shared], help="log density of stored points")
    p.add_argument("--params", required=True, help="parameter JSON file")
    p.add_argument("--data", required=True, help="dataset of evaluation points")
    p.add_argument("--out", required=True, help="output CSV (index,log_density)")

    p = sub.add_parser("estimate", parents=[shared], help="maximum-likelihood fit")
    p.add_argument("--data", required=True, help="training dataset")
    p.add_argument("--cov", choices=["full", "diag", "diagonal"], default=argparse.SUPPRESS)
    p.add_argument("--strategy", choices=["profile", "joint"], default=argparse.SUPPRESS)
    p.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="gradient tolerance")
    p.add_argument("--max-iter", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out-params", required=True, help="output parameter JSON")
    p.add_argument("--report", help="optional JSON fit report")

    p = sub.add_parser("mle-curve", parents=[shared], help="estimation-error study")
    p.add_argument("--out-dir", default=argparse.SUPPRESS, help="directory for the CSV")

    p = sub.add_parser("classify", parents=[shared], help="train or apply a classifier")
    csub = p.add_subparsers(dest="classify_command", required=True, metavar="ACTION")
    pt = csub.add_parser("train", parents=[shared])
    pt.add_argument("--data", required=True, help="labeled training dataset")
    pt.add_argument("--model", required=True, choices=list(CLASSIFIER_NAMES))
    pt.add_argument("--diag", action="store_true", default=argparse.SUPPRESS,
                    help="restrict covariances to diagonals")
    pt.add_argument("--uniform-priors", action="store_true", default=argparse.SUPPRESS)
    pt.add_argument("--out", required=True, help="output model JSON")
    pp = csub.add_parser("predict", parents=[shared])
    pp.add_argument("--model-file", required=True, help="model JSON from classify train")
    pp.add_argument("--data", required=True, help="dataset to label")
    pp.add_argument("--out", required=True, help="output CSV (index,label)")

    p = sub.add_parser("cv", parents=[shared], help="stratified k-fold cross-validation")
    p.add_argument("--data", required=True, help="labeled dataset")
    p.add_argument("--models", default=argparse.SUPPRESS,
                   help="comma-separated classifier names")
    p.add_argument("--k", type=int, default=argparse.SUPPRESS, help="number of folds")
    p.add_argument("--out", help="output CSV of per-fold accuracies")

    p = sub.add_parser("cov-from-series", parents=[shared],
                       help="shrunk covariance of a T x m series")
    p.add_argument("--in", dest="series_in", required=True,
                   help="numeric CSV, one observation per row")
    p.add_argument("--shrinkage", type=float, default=argparse.SUPPRESS)
    p.add_argument("--out", required=True, help='output JSON {"d", "matrix"}')

    p = sub.add_parser("plot-prep", parents=[shared],
                       help="aggregate a results CSV to per-cell medians")
    p.add_argument("--in", dest="curve_in", required=True, help="CSV from mle-curve")
    p.add_argument("--out", required=True, help="aggregated CSV")

    return parser


def _resolve_config(ns: argparse.Namespace) -> ExperimentConfig:
    """Layer the configuration: defaults, then file, then explicit flags."""
    config_path = getattr(ns, "config", None)
    config = ExperimentConfig.from_ini(config_path) if config_path else ExperimentConfig()
    overrides = {}
    for name in ("seed", "deterministic", "threads", "count", "tol", "diag",
                 "uniform_priors", "strategy", "k_folds", "max_iter", "shrinkage"):
        if hasattr(ns, name):
            overrides[name] = getattr(ns, name)
    if hasattr(ns, "cov"):
        overrides["cov_kind"] = ns.cov
    if hasattr(ns, "models"):
        overrides["classifiers"] = tuple(ns.models.replace(",", " ").split())
    if hasattr(ns, "k"):
        overrides["k_folds"] = ns.k
    if hasattr(ns, "out_dir"):
        overrides["out_dir"] = ns.out_dir
    return config.updated(**overrides)


def _mle_options(config: ExperimentConfig) -> MleOptions:
    return MleOptions(
        cov_kind=config.cov_kind,
        strategy=config.strategy,
        tol=config.tol,
        max_iter=config.max_iter,
        determinism=True,
        seed=config.seed,
    )


def _cmd_sample(ns: argparse.Namespace, config: ExperimentConfig) -> int:
    theta = load_params(ns.params)
    if config.count < 1:
        raise InvalidInputError(f"sample count must be >= 1, got {config.count}")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed]))
    draws = sample(theta, config.count, rng)
    data = LabeledSpdDataset(draws, np.zeros(config.count, dtype=int), 1)
    save_dataset(data, ns.out)
    print(f"wrote {config.count} samples to {ns.out}")
    return 0


def _cmd_density(ns: argparse.Namespace, config: ExperimentConfig) -> int:
    theta = load_params(ns.params)
    data = load_dataset(ns.data)
    if data.d != theta.d:
        raise InvalidInputError(
            f"parameters are {theta.d}x{theta.d} but the data is {data.d}x{data.d}"
        )
    values = np.atleast_1d(log_density(theta, data.matrices))
    with open(ns.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,log_density\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{float(v)!r}\n")
    print(f"wrote {values.shape[0]} log densities to {ns.out}")
    return 0


def _cmd_estimate(ns: argparse.Namespace, config: ExperimentConfig) -> int:
    data = load_dataset(ns.data)
    theta_hat, report = fit_mle(data.matrices, _mle_options(config))
    save_params(theta_hat, ns.out_params)
    if getattr(ns, "report", None):
        import json

        payload = report.to_dict()
        if config.deterministic:
            payload["wall_time"] = 0.0
        payload["nll"] = neg_log_lik(theta_hat, data.matrices)
        with open(ns.report, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    status = "converged" if report.converged else "stopped early"
    print(
        f"estimate {status} after {report.iterations} iterations; "
        f"parameters written to {ns.out_params}"
    )
    return 0


def _cmd_mle_curve(ns: argparse.Namespace, config: ExperimentConfig) -> int:
    import os

    os.makedirs(config.out_dir, exist_ok=True)
    out_csv = os.path.join(config.out_dir, "mle_curve.csv")
    rows = run_mle_curve(config, out_csv)
    n_failed = sum(1 for r in rows if r.failed)
    note = f" ({n_failed} failed rows)" if n_failed else ""
    print(f"wrote {len(rows)} rows to {out_csv}{note}")
    return 0


def _cmd_classify_train(ns: argparse.Namespace, config: ExperimentConfig) -> int:
    data = load_dataset(ns.data)
    name = ns.model
    if name == "mdm":
        model = fit_mdm(data, uniform_priors=config.uniform_priors)
    elif name in ("tslda", "tsqda"):
        model = fit_tsda(
            data,
            kind="lda" if name == "tslda" else "qda",
            diag=config.diag,
            uniform_priors=config.uniform_priors,
        )
    else:
        opts = _mle_options(
            config.updated(cov_kind="diagonal") if config.diag else config
        )
        model = fit_wda(
            data,
            shared_sigma=(name == "howda"),
            options=opts,
            uniform_priors=config.uniform_priors,
        )
    save_model(model, ns.out)
    print(f"trained {name} on {len(data)} points; model written to {ns.out}")
    return 0


def _cmd_classify_predict(ns: argparse.Namespace, config: ExperimentConfig) -> int:
    model = load_model(ns.model_file)
    data = load_dataset(ns.data)
    if isinstance(model, MdmModel):
        pred = predict_mdm(model, data.matrices)
    elif isinstance(model, TsdaModel):
        pred = predict_tsda(model, data.matrices)
    elif isinstance(model, WdaModel):
        pred = predict_wda(model, data.matrices)
    else:
        raise InvalidInputError(f"cannot predict with {type(model).__name__}")
    pred = np.atleast_1d(pred)
    with open(ns.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,label\n")
        for i, label in enumerate(pred):
            fh.write(f"{i},{int(label)}\n")
    print(f"wrote {pred.shape[0]} predictions to {ns.out}")
    return 0


def _cmd_cv(ns: argparse.Namespace, config: ExperimentConfig) -> int:
    rows = run_cv(
        ns.data,
        classifiers=config.classifiers,
        k=config.k_folds,
        seed=config.seed,
        uniform_priors=config.uniform_priors,
        options=_mle_options(config),
        threads=config.threads,
        deterministic=config.deterministic,
    )
    if getattr(ns, "out", None):
        write_cv_csv(rows, ns.out)
    stats = {
        (row.classifier, row.metric): row.value for row in rows if row.fold == -1
    }
    for name in config.classifiers:
        mean = stats[(name, "accuracy_mean")]
        std = stats[(name, "accuracy_std")]
        print(f"{name}: accuracy {mean:.4f} +/- {std:.4f}")
    return 0


def _cmd_cov_from_series(ns: argparse.Namespace, config: ExperimentConfig) -> int:
    rows = []
    with open(ns.series_in, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as err:
                raise DataFormatError(
                    f"non-numeric field: {err}", ns.series_in, len(rows)
                ) from err
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise DataFormatError("rows have inconsistent widths", ns.series_in)
    matrix = cov_from_series(np.asarray(rows, dtype=float), config.shrinkage)
    save_matrix(matrix, ns.out)
    print(f"wrote a {matrix.shape[0]}x{matrix.shape[0]} covariance to {ns.out}")
    return 0


def _cmd_plot_prep(ns: argparse.Namespace, config: ExperimentConfig) -> int:
    rows = read_curve_csv(ns.curve_in)
    summary = summarize_curve(rows)
    with open(ns.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("d,N,metric,median,n_ok,n_failed\n")
        for d, n, metric, med, n_ok, n_failed in summary:
            fh.write(f"{d},{n},{metric},{float(med)!r},{n_ok},{n_failed}\n")
    print(f"wrote {len(summary)} aggregated rows to {ns.out}")
    return 0


_COMMANDS = {
    "sample": _cmd_sample,
    "density": _cmd_density,
    "estimate": _cmd_estimate,
    "mle-curve": _cmd_mle_curve,
    "cv": _cmd_cv,
    "cov-from-series": _cmd_cov_from_series,
    "plot-prep": _cmd_plot_prep,
}


def main(argv: list[str] | None = None) -> int:
    """Entry point. Returns the exit code instead of calling sys.exit."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        config = _resolve_config(ns)
        if ns.command == "classify":
            handler = (
                _cmd_classify_train
                if ns.classify_command == "train"
                else _cmd_classify_predict
            )
        else:
            handler = _COMMANDS[ns.command]
        return handler(ns, config)
    except DataFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except InvalidInputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except SpdGaussError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
