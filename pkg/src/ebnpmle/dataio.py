"""Reading and writing datasets, observation files, models and run manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifiers import LabeledDataset
from .errors import DataError

log = logging.getLogger(__name__)

try:
    from importlib.metadata import version as _pkg_version

    TOOL_VERSION = _pkg_version("artifact")
except Exception:  # not installed, e.g. running from a source tree
    TOOL_VERSION = "0.1.0"


@dataclass
class RawTable:
    header: list | None
    features: np.ndarray
    labels: np.ndarray | None
    feature_names: list | None = None


def _resolve_label_column(label_column, header, ncols):
    if label_column is None:
        return None
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None or label_column not in header:
            raise DataError(f"label column {label_column!r} not found in header")
        return header.index(label_column)
    idx = int(label_column)
    if idx < 0:
        idx += ncols
    if not 0 <= idx < ncols:
        raise DataError(f"label column {label_column} out of range for {ncols} columns")
    return idx


def _parse_label(cell, row, col):
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"unparseable label {cell!r}", row, col) from None
    if v not in (0.0, 1.0):
        raise DataError(f"label {cell!r} is not 0 or 1", row, col)
    return int(v)


def read_table(path, delimiter: str = ",", label_column=-1, has_header: bool = True, transpose: bool = False) -> RawTable:
    """Parse a delimited sample-by-feature table.

    Rows are samples and columns features, with one label column (index or
    header name; ``None`` for unlabeled files). With ``transpose`` the file is
    feature-major: rows are features, columns samples, and the label is a row.
    Error locations are 1-based data rows (header excluded) and file columns.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: no data")
    header = [c.strip() for c in rows[0]] if has_header else None
    body = rows[1:] if has_header else rows
    if not body:
        raise DataError(f"{path}: no data rows")
    width = len(header) if header is not None else len(body[0])
    for i, r in enumerate(body, start=1):
        if len(r) != width:
            raise DataError(f"{path}: expected {width} fields, found {len(r)}", row=i)
    if transpose:
        return _read_transposed(path, header, body, label_column)
    lab = _resolve_label_column(label_column, header, width)
    feat_cols = [c for c in range(width) if c != lab]
    X = np.empty((len(body), len(feat_cols)))
    y = np.empty(len(body), dtype=np.int8) if lab is not None else None
    for i, r in enumerate(body, start=1):
        for k, c in enumerate(feat_cols):
            try:
                X[i - 1, k] = float(r[c])
            except ValueError:
                raise DataError(f"{path}: unparseable value {r[c]!r}", i, c + 1) from None
            if not np.isfinite(X[i - 1, k]):
                raise DataError(f"{path}: non-finite value {r[c]!r}", i, c + 1)
        if lab is not None:
            y[i - 1] = _parse_label(r[lab].strip(), i, lab + 1)
    names = [header[c] for c in feat_cols] if header is not None else None
    log.info("%s: %d samples, %d features", path, X.shape[0], X.shape[1])
    return RawTable(header, X, y, names)


def _read_transposed(path, header, body, label_column):
    # first column holds feature names (and the label row's name)
    names = [r[0].strip() for r in body]
    lab = None
    if label_column is not None:
        if isinstance(label_column, str) and label_column in names:
            lab = names.index(label_column)
        else:
            lab = _resolve_label_column(label_column, None, len(body))
    feat_rows = [i for i in range(len(body)) if i != lab]
    nsamp = len(body[0]) - 1
    X = np.empty((nsamp, len(feat_rows)))
    for k, i in enumerate(feat_rows):
        for s in range(nsamp):
            cell = body[i][s + 1]
            try:
                X[s, k] = float(cell)
            except ValueError:
                raise DataError(f"{path}: unparseable value {cell!r}", i + 1, s + 2) from None
            if not np.isfinite(X[s, k]):
                raise DataError(f"{path}: non-finite value {cell!r}", i + 1, s + 2)
    y = None
    if lab is not None:
        y = np.array([_parse_label(body[lab][s + 1].strip(), lab + 1, s + 2) for s in range(nsamp)], dtype=np.int8)
    log.info("%s: %d samples, %d features (transposed)", path, X.shape[0], X.shape[1])
    return RawTable(header, X, y, [names[i] for i in feat_rows])


def load_dataset(path, delimiter: str = ",", label_column=-1, has_header: bool = True, transpose: bool = False) -> LabeledDataset:
    t = read_table(path, delimiter, label_column, has_header, transpose)
    if t.labels is None:
        raise DataError(f"{path}: a label column is required")
    if not (np.any(t.labels == 0) and np.any(t.labels == 1)):
        raise DataError(f"{path}: both labels 0 and 1 must occur")
    return LabeledDataset(t.features, t.labels)


def dataset_to_csv(dataset: LabeledDataset, feature_names=None) -> str:
    names = feature_names or [f"x{j + 1}" for j in range(dataset.N)]
    lines = [",".join([*names, "label"])]
    for row, lab in zip(dataset.features, dataset.labels):
        lines.append(",".join([*(repr(float(v)) for v in row), str(int(lab))]))
    return "\n".join(lines) + "\n"


def write_dataset(path, dataset: LabeledDataset, feature_names=None):
    atomic_write_text(path, dataset_to_csv(dataset, feature_names))


@dataclass
class ScaleReport:
    scales: np.ndarray
    zero_variance: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def standardize(train: LabeledDataset, test_features=None):
    """Divide every feature by its training standard deviation (ddof=1).

    The test rows get the same training-derived scales. Zero-variance features
    are left unscaled and listed in the report.
    """
    X = train.features
    if X.shape[0] < 2:
        raise DataError("standardization needs at least two training samples")
    sd = X.std(axis=0, ddof=1)
    zero = sd == 0
    scales = np.where(zero, 1.0, sd)
    train_s = LabeledDataset(X / scales, train.labels)
    test_s = None if test_features is None else np.asarray(test_features, dtype=float) / scales
    return train_s, test_s, ScaleReport(scales, np.flatnonzero(zero))


def read_observations(path) -> np.ndarray:
    """One real per line; blank lines and ``#`` comments are ignored."""
    vals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                v = float(text)
            except ValueError:
                raise DataError(f"{path}: unparseable value {text!r}", row=lineno) from None
            if not np.isfinite(v):
                raise DataError(f"{path}: non-finite value {text!r}", row=lineno)
            vals.append(v)
    if not vals:
        raise DataError(f"{path}: no observations")
    return np.array(vals)


def atomic_write_text(path, text: str):
    """Write via a temporary file in the same directory and rename over ``path``."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def file_digest(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: int | None
    tool_version: str = TOOL_VERSION
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)

    @staticmethod
    def now() -> str:
        return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")

    def write(self, path):
        atomic_write_text(path, dumps_json(asdict(self)))
