"""Experiment configuration: one dataclass, an INI reader, CLI merging.

Configuration files use INI syntax (``configparser``). Section names are
organizational only; keys are matched against :class:`ExperimentConfig`
field names wherever they appear, and a key repeated in a later section
overrides the earlier one. Every command-line flag has a same-named field
here, and explicit command-line values override file values.

Example::

    [experiment]
    kind = mle_curve
    dims = 2 5
    n_grid = 100 1000 10000
    seeds = 0 1 2 3 4
    cov_kind = full

    [optim]
    strategy = profile
    tol = 1e-6

    [run]
    out_dir = results
    deterministic = true
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Any

from ..exceptions import DataFormatError, InvalidInputError
from .synthetic import normalize_cov_kind

__all__ = ["ExperimentConfig", "CLASSIFIER_NAMES"]

CLASSIFIER_NAMES = ("mdm", "tslda", "tsqda", "howda", "hewda")

_KINDS = ("mle_curve", "cv_benchmark", "sample", "density_eval")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(text.replace(",", " ").split())


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a harness run needs, with conservative defaults.

    ``dims`` x ``n_grid`` x ``seeds`` spans the estimation-curve grid;
    ``classifiers`` and ``k_folds`` drive cross-validation; the path fields
    point at input and output files. ``seed``, ``deterministic``, and
    ``threads`` mirror the global command-line flags.
    """

    kind: str = "mle_curve"
    d: int = 2
    dims: tuple[int, ...] = (2,)
    n_grid: tuple[int, ...] = (100, 1000, 10000)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    cov_kind: str = "full"
    strategy: str = "profile"
    tol: float = 1e-6
    max_iter: int = 2000
    classifiers: tuple[str, ...] = CLASSIFIER_NAMES
    k_folds: int = 5
    count: int = 100
    shrinkage: float = 0.0
    diag: bool = False
    uniform_priors: bool = False
    data_path: str | None = None
    params_path: str | None = None
    model_path: str | None = None
    out_path: str | None = None
    out_dir: str = "."
    seed: int = 0
    deterministic: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidInputError(
                f"unknown experiment kind {self.kind!r}; choose from {_KINDS}"
            )
        for name in ("dims", "n_grid", "seeds", "classifiers"):
            if len(getattr(self, name)) == 0:
                raise InvalidInputError(f"config grid {name!r} must be nonempty")
        if any(n < 2 for n in self.n_grid):
            raise InvalidInputError("every sample count in n_grid must be >= 2")
        if any(d < 1 for d in self.dims):
            raise InvalidInputError("every dimension in dims must be >= 1")
        if self.k_folds < 2:
            raise InvalidInputError(f"k_folds must be >= 2, got {self.k_folds}")
        for name in self.classifiers:
            if name not in CLASSIFIER_NAMES:
                raise InvalidInputError(
                    f"unknown classifier {name!r}; choose from {CLASSIFIER_NAMES}"
                )
        if self.strategy not in ("profile", "joint"):
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        if not 0.0 <= self.shrinkage <= 1.0:
            raise InvalidInputError(f"shrinkage must be in [0, 1], got {self.shrinkage}")
        if self.threads is not None and self.threads < 1:
            raise InvalidInputError(f"threads must be >= 1, got {self.threads}")
        object.__setattr__(self, "cov_kind", normalize_cov_kind(self.cov_kind))

    @classmethod
    def from_ini(cls, path) -> "ExperimentConfig":
        """Read a config file; unknown keys are rejected with their location."""
        parser = configparser.ConfigParser()
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as err:
            raise DataFormatError(f"cannot read config: {err}", path) from err
        except configparser.Error as err:
            raise DataFormatError(f"bad INI syntax: {err}", path) from err
        values: dict[str, Any] = {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                values[key] = _convert(key, raw, path, section)
        return cls(**values)

    def updated(self, **overrides) -> "ExperimentConfig":
        """Copy with the given fields replaced; ``None`` values are ignored."""
        clean = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **clean) if clean else self


_FIELD_PARSERS = {
    "dims": _parse_int_list,
    "n_grid": _parse_int_list,
    "seeds": _parse_int_list,
    "classifiers": _parse_str_list,
    "d": int,
    "k_folds": int,
    "count": int,
    "max_iter": int,
    "seed": int,
    "threads": int,
    "tol": float,
    "shrinkage": float,
    "diag": _parse_bool,
    "uniform_priors": _parse_bool,
    "deterministic": _parse_bool,
}

_STR_FIELDS = {
    "kind",
    "cov_kind",
    "strategy",
    "data_path",
    "params_path",
    "model_path",
    "out_path",
    "out_dir",
}

# Catch field drift at import time: every config field must be parseable.
assert set(_FIELD_PARSERS) | _STR_FIELDS == {
    f.name for f in dataclasses.fields(ExperimentConfig)
}


def _convert(key: str, raw: str, path, section: str) -> Any:
    if key in _STR_FIELDS:
        return raw.strip()
    parser = _FIELD_PARSERS.get(key)
    if parser is None:
        raise DataFormatError(f"unknown config key {key!r} in section [{section}]", path)
    try:
        return parser(raw)
    except ValueError as err:
        raise DataFormatError(
            f"bad value for {key!r} in section [{section}]: {err}", path
        ) from err
