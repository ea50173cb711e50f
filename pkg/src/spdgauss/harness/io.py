"""File formats: labeled datasets, parameter files, fitted models.

Two dataset encodings, both human-inspectable and language-neutral:

* JSON lines. The first line is a header ``{"d": int, "classes": int}``;
  every following line is ``{"label": int, "matrix": [[row], ...]}`` with
  the full ``d x d`` matrix.
* CSV. The first line is the comment ``# d=<d> classes=<K>``; every
  following line is the label and the ``d*(d+1)/2`` upper-triangular
  entries in row-major order. Storage keeps raw matrix entries; the
  root-two weighting of off-diagonal coordinates belongs to the tangent
  vectorization, not to files.

Floats are written with full round-trip precision, so ``load(save(x))``
reproduces ``x`` exactly and both encodings of a dataset load equal.
Loaders validate each record: near-symmetry (asymmetry at most 1e-9, then
symmetrized) and positive definiteness; violations raise
:class:`DataFormatError` carrying the path and the zero-based record index.
"""

from __future__ import annotations

import json
import os
from typing import Any

import numpy as np

from ..classifiers import LabeledSpdDataset, MdmModel, TsdaModel, WdaModel
from ..exceptions import DataFormatError, InvalidInputError, SpdGaussError
from ..geometry import tangent_dim
from ..linalg import validate_spd
from ..wrapped import WgParams, minimal_representative

__all__ = [
    "load_dataset",
    "save_dataset",
    "load_params",
    "save_params",
    "load_model",
    "save_model",
    "load_matrix",
    "save_matrix",
]

_MODEL_KINDS = {"mdm": MdmModel, "tsda": TsdaModel, "wda": WdaModel}


def _fmt(x: float) -> str:
    """Shortest decimal string that parses back to exactly ``x``."""
    return repr(float(x))


def _infer_format(path: str, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("jsonl", "csv"):
            raise InvalidInputError(f"unknown dataset format {fmt!r}")
        return fmt
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix in (".jsonl", ".json"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    raise InvalidInputError(
        f"cannot infer dataset format from {path!r}; pass fmt='jsonl' or 'csv'"
    )


def _check_record_matrix(mat: np.ndarray, d: int, path, record: int) -> np.ndarray:
    if mat.shape != (d, d):
        raise DataFormatError(
            f"matrix has shape {mat.shape}, expected ({d}, {d})", path, record
        )
    if not np.all(np.isfinite(mat)):
        raise DataFormatError("matrix has non-finite entries", path, record)
    asym = float(np.max(np.abs(mat - mat.T))) if d > 1 else 0.0
    if asym > 1e-9:
        raise DataFormatError(
            f"matrix asymmetry {asym:.3e} exceeds 1e-9", path, record
        )
    mat = 0.5 * (mat + mat.T)
    try:
        return validate_spd(mat)
    except SpdGaussError as err:
        raise DataFormatError(f"matrix is not positive definite: {err}", path, record) from err


def _tri_row_major(d: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(d)


def save_dataset(data: LabeledSpdDataset, path, fmt: str | None = None) -> None:
    """Write a labeled dataset to ``path`` in the JSON-lines or CSV encoding.

    The format is inferred from the suffix (``.jsonl``/``.json`` or
    ``.csv``) unless ``fmt`` is given. Writing is deterministic: equal
    datasets produce byte-identical files.
    """
    fmt = _infer_format(path, fmt)
    d = data.d
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if fmt == "jsonl":
            fh.write(json.dumps({"d": d, "classes": data.n_classes}) + "\n")
            for label, mat in zip(data.labels, data.matrices):
                rec = {"label": int(label), "matrix": mat.tolist()}
                fh.write(json.dumps(rec) + "\n")
        else:
            rows, cols = _tri_row_major(d)
            fh.write(f"# d={d} classes={data.n_classes}\n")
            for label, mat in zip(data.labels, data.matrices):
                entries = ",".join(_fmt(v) for v in mat[rows, cols])
                fh.write(f"{int(label)},{entries}\n")


def _load_jsonl(path) -> LabeledSpdDataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in (raw.strip() for raw in fh) if line]
    if not lines:
        raise DataFormatError("empty dataset file", path)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise DataFormatError(f"header is not valid JSON: {err}", path) from err
    if not isinstance(header, dict) or "d" not in header or "classes" not in header:
        raise DataFormatError(
            'header must be an object {"d": int, "classes": int}', path
        )
    d, classes = int(header["d"]), int(header["classes"])
    if d < 1 or classes < 1:
        raise DataFormatError(f"header values out of range: d={d}, classes={classes}", path)
    mats, labels = [], []
    for idx, line in enumerate(lines[1:]):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as err:
            raise DataFormatError(f"record is not valid JSON: {err}", path, idx) from err
        if not isinstance(rec, dict) or "label" not in rec or "matrix" not in rec:
            raise DataFormatError(
                'record must be an object {"label": int, "matrix": [[...]]}', path, idx
            )
        label = rec["label"]
        if not isinstance(label, int) or isinstance(label, bool):
            raise DataFormatError(f"label {label!r} is not an integer", path, idx)
        if not 0 <= label < classes:
            raise DataFormatError(
                f"label {label} outside [0, {classes})", path, idx
            )
        try:
            mat = np.asarray(rec["matrix"], dtype=float)
        except (TypeError, ValueError) as err:
            raise DataFormatError(f"matrix is not numeric: {err}", path, idx) from err
        mats.append(_check_record_matrix(mat, d, path, idx))
        labels.append(label)
    if not mats:
        raise DataFormatError("dataset has a header but no records", path)
    return LabeledSpdDataset(np.stack(mats), np.asarray(labels), classes)


def _load_csv(path) -> LabeledSpdDataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in (raw.strip() for raw in fh) if line]
    if not lines or not lines[0].startswith("#"):
        raise DataFormatError(
            "CSV dataset must start with a '# d=<d> classes=<K>' line", path
        )
    meta: dict[str, str] = {}
    for tok in lines[0].lstrip("#").split():
        if "=" in tok:
            key, _, val = tok.partition("=")
            meta[key] = val
    try:
        d, classes = int(meta["d"]), int(meta["classes"])
    except (KeyError, ValueError) as err:
        raise DataFormatError(f"bad CSV metadata line {lines[0]!r}", path) from err
    if d < 1 or classes < 1:
        raise DataFormatError(f"header values out of range: d={d}, classes={classes}", path)
    rows, cols = _tri_row_major(d)
    width = tangent_dim(d)
    mats, labels = [], []
    for idx, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != width + 1:
            raise DataFormatError(
                f"expected 1 label + {width} entries, got {len(parts)} fields",
                path,
                idx,
            )
        try:
            label = int(parts[0])
            entries = np.array([float(v) for v in parts[1:]])
        except ValueError as err:
            raise DataFormatError(f"non-numeric field: {err}", path, idx) from err
        if not 0 <= label < classes:
            raise DataFormatError(f"label {label} outside [0, {classes})", path, idx)
        mat = np.zeros((d, d))
        mat[rows, cols] = entries
        mat[cols, rows] = entries
        mats.append(_check_record_matrix(mat, d, path, idx))
        labels.append(label)
    if not mats:
        raise DataFormatError("dataset has a header but no records", path)
    return LabeledSpdDataset(np.stack(mats), np.asarray(labels), classes)


def load_dataset(path, fmt: str | None = None) -> LabeledSpdDataset:
    """Read a labeled dataset, validating every record.

    Each matrix must be finite, symmetric to 1e-9 (it is symmetrized), and
    positive definite; labels must be integers inside the header's class
    range. Violations raise :class:`DataFormatError` naming the file and
    the zero-based record index.
    """
    fmt = _infer_format(path, fmt)
    if not os.path.exists(path):
        raise DataFormatError("no such file", path)
    return _load_jsonl(path) if fmt == "jsonl" else _load_csv(path)


def save_params(theta: WgParams, path) -> None:
    """Write wrapped-Gaussian parameters as JSON, in minimal form.

    Files always hold the minimal representative of the parameter class, so
    equivalent parameter triples serialize to the same form up to the
    floating-point round-off of the reduction itself.
    """
    payload = minimal_representative(theta).to_dict()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_params(path) -> WgParams:
    """Read wrapped-Gaussian parameters from a JSON file."""
    payload = _load_json_object(path, ("d", "p", "mu", "sigma_kind", "sigma"))
    try:
        theta = WgParams.from_dict(payload)
    except (SpdGaussError, KeyError, TypeError, ValueError) as err:
        raise DataFormatError(f"invalid parameters: {err}", path) from err
    if theta.d != int(payload["d"]):
        raise DataFormatError(
            f"declared d={payload['d']} but the base point is {theta.d}x{theta.d}", path
        )
    return theta


def save_model(model, path) -> None:
    """Write a fitted classifier (mdm, tsda, or wda) as JSON."""
    if not isinstance(model, (MdmModel, TsdaModel, WdaModel)):
        raise InvalidInputError(f"cannot serialize {type(model).__name__}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model.to_dict(), fh, indent=2)
        fh.write("\n")


def load_model(path):
    """Read a classifier written by :func:`save_model`; dispatches on its kind."""
    payload = _load_json_object(path, ("kind",))
    kind = payload["kind"]
    cls = _MODEL_KINDS.get(kind)
    if cls is None:
        raise DataFormatError(f"unknown model kind {kind!r}", path)
    try:
        return cls.from_dict(payload)
    except (SpdGaussError, KeyError, TypeError, ValueError) as err:
        raise DataFormatError(f"invalid {kind} model: {err}", path) from err


def save_matrix(matrix: np.ndarray, path) -> None:
    """Write a single square matrix as JSON ``{"d": m, "matrix": [[...]]}``."""
    matrix = np.asarray(matrix, dtype=float)
    payload = {"d": int(matrix.shape[0]), "matrix": matrix.tolist()}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_matrix(path) -> np.ndarray:
    """Read a matrix written by :func:`save_matrix`."""
    payload = _load_json_object(path, ("d", "matrix"))
    mat = np.asarray(payload["matrix"], dtype=float)
    d = int(payload["d"])
    if mat.shape != (d, d):
        raise DataFormatError(
            f"declared d={d} but the matrix has shape {mat.shape}", path
        )
    return mat


def _load_json_object(path, required: tuple[str, ...]) -> dict[str, Any]:
    if not os.path.exists(path):
        raise DataFormatError("no such file", path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as err:
            raise DataFormatError(f"not valid JSON: {err}", path) from err
    if not isinstance(payload, dict):
        raise DataFormatError("top-level JSON value must be an object", path)
    missing = [key for key in required if key not in payload]
    if missing:
        raise DataFormatError(f"missing keys: {', '.join(missing)}", path)
    return payload
