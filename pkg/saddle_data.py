import math
import os

import numpy as np

from saddle_core import Dataset
from saddle_exceptions import DatasetFormatError, InvalidProblemError
from saddle_sampling import DATA_STREAM, DrawStream

DATASET_FORMATS = ("dense-csv", "sparse-svm")
NUMBER_FORMAT = "%.17g"


def _parse_label(token, path, line_no):
    try:
        value = float(token)
    except ValueError:
        raise DatasetFormatError(f"Label '{token}' is not a number.", path, line_no)
    if not math.isfinite(value):
        raise DatasetFormatError(f"Label '{token}' is not finite.", path, line_no)
    if value != int(value):
        raise DatasetFormatError(f"Label '{token}' is not an integer.", path, line_no)
    if value < 1:
        raise DatasetFormatError(f"Label {int(value)} is out of range; labels are 1-based.", path, line_no)
    return int(value)


def _parse_float(token, path, line_no):
    try:
        value = float(token)
    except ValueError:
        raise DatasetFormatError(f"Value '{token}' is not a number.", path, line_no)
    if not math.isfinite(value):
        raise DatasetFormatError(f"Value '{token}' is not finite.", path, line_no)
    return value


def _read_dense_csv(path, lines):
    labels, rows = [], []
    width = None
    for line_no, line in lines:
        tokens = [token.strip() for token in line.split(",")]
        if len(tokens) < 2:
            raise DatasetFormatError("Expected 'label,f1,...,fd'.", path, line_no)
        if width is None:
            width = len(tokens) - 1
        elif len(tokens) - 1 != width:
            raise DatasetFormatError(f"Expected {width} features, found {len(tokens) - 1}.", path, line_no)
        labels.append((_parse_label(tokens[0], path, line_no), line_no))
        rows.append([_parse_float(token, path, line_no) for token in tokens[1:]])
    return labels, np.array(rows, dtype=np.float64)


def _read_sparse_svm(path, lines, d=None):
    labels, entries = [], []
    max_index = 0
    for line_no, line in lines:
        tokens = line.split()
        labels.append((_parse_label(tokens[0], path, line_no), line_no))
        row = []
        for token in tokens[1:]:
            index_text, sep, value_text = token.partition(":")
            if not sep:
                raise DatasetFormatError(f"Expected 'index:value', found '{token}'.", path, line_no)
            try:
                index = int(index_text)
            except ValueError:
                raise DatasetFormatError(f"Feature index '{index_text}' is not an integer.", path, line_no)
            if index < 1:
                raise DatasetFormatError(f"Feature index {index} is out of range; indices are 1-based.",
                                         path, line_no)
            if d is not None and index > d:
                raise DatasetFormatError(f"Feature index {index} exceeds the dimension {d}.", path, line_no)
            row.append((index - 1, _parse_float(value_text, path, line_no)))
            max_index = max(max_index, index)
        entries.append(row)
    X = np.zeros((len(entries), d if d is not None else max_index))
    for j, row in enumerate(entries):
        for i, value in row:
            X[j, i] = value
    return labels, X


def load_dataset(path, fmt="dense-csv", k=None, d=None) -> Dataset:
    """
    Reads a labelled dataset.

    dense-csv:  one example per line, "label,f1,...,fd"
    sparse-svm: "label idx:val idx:val ..." with 1-based feature indices
    Labels are 1-based; k defaults to the largest label.
    """
    if fmt not in DATASET_FORMATS:
        raise InvalidProblemError(f"Unknown dataset format '{fmt}'. Use one of {DATASET_FORMATS}.")
    print(f"  - Loading dataset: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [(no, line.strip()) for no, line in enumerate(f, start=1) if line.strip()]
    except FileNotFoundError:
        raise DatasetFormatError("Dataset file not found.", path)
    except OSError as e:
        raise DatasetFormatError(f"Could not read dataset: {e}", path)
    if not lines:
        raise DatasetFormatError("Dataset file is empty.", path)

    if fmt == "dense-csv":
        labels, X = _read_dense_csv(path, lines)
    else:
        labels, X = _read_sparse_svm(path, lines, d)
    if X.shape[1] == 0:
        raise DatasetFormatError("Dataset has no features.", path)

    inferred = max(label for label, _ in labels)
    k = inferred if k is None else int(k)
    for label, line_no in labels:
        if label > k:
            raise DatasetFormatError(f"Label {label} exceeds the number of classes {k}.", path, line_no)

    dataset = Dataset(X=X, y=np.array([label - 1 for label, _ in labels], dtype=np.int64), k=k)
    print(f"  - Loaded {dataset.n} examples, {dataset.d} features, {dataset.k} classes.")
    return dataset


def save_dataset(path, dataset: Dataset, fmt="dense-csv"):
    if fmt not in DATASET_FORMATS:
        raise InvalidProblemError(f"Unknown dataset format '{fmt}'. Use one of {DATASET_FORMATS}.")
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        for x, label in zip(dataset.X, dataset.y):
            if fmt == "dense-csv":
                f.write(",".join([str(int(label) + 1)] + [NUMBER_FORMAT % value for value in x]) + "\n")
            else:
                pairs = [f"{i + 1}:{NUMBER_FORMAT % value}" for i, value in enumerate(x) if value != 0.0]
                f.write(" ".join([str(int(label) + 1)] + pairs) + "\n")


def save_model(path, U: np.ndarray):
    """Dense d x k model, one CSV row per feature, 17 significant digits."""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        for row in np.atleast_2d(U):
            f.write(",".join(NUMBER_FORMAT % value for value in row) + "\n")


def save_triplets(path, triplets, d: int, k: int):
    """Header "d k nnz" followed by one "i l value" line per entry, 1-based."""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{d} {k} {len(triplets)}\n")
        for i, l, value in triplets:
            f.write(f"{i + 1} {l + 1} {NUMBER_FORMAT % value}\n")


def load_model(path) -> np.ndarray:
    """Reads a model written by save_model or save_triplets."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [(no, line.strip()) for no, line in enumerate(f, start=1) if line.strip()]
    except FileNotFoundError:
        raise DatasetFormatError("Model file not found.", path)
    if not lines:
        raise DatasetFormatError("Model file is empty.", path)

    header = lines[0][1].split()
    if "," not in lines[0][1] and len(header) == 3 and all(token.isdigit() for token in header):
        return _read_triplets(path, lines)
    rows = [[_parse_float(token, path, no) for token in line.split(",")] for no, line in lines]
    if len({len(row) for row in rows}) != 1:
        raise DatasetFormatError("Model rows have different lengths.", path)
    return np.array(rows, dtype=np.float64)


def _read_triplets(path, lines):
    d, k, nnz = (int(token) for token in lines[0][1].split())
    if len(lines) - 1 != nnz:
        raise DatasetFormatError(f"Header announces {nnz} entries, found {len(lines) - 1}.", path, lines[0][0])
    U = np.zeros((d, k))
    for line_no, line in lines[1:]:
        tokens = line.split()
        if len(tokens) != 3:
            raise DatasetFormatError("Expected 'i l value'.", path, line_no)
        try:
            i, l = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise DatasetFormatError("Triplet indices must be integers.", path, line_no)
        if not (1 <= i <= d and 1 <= l <= k):
            raise DatasetFormatError(f"Triplet index ({i}, {l}) outside {d} x {k}.", path, line_no)
        U[i - 1, l - 1] = _parse_float(tokens[2], path, line_no)
    return U


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def planted_model(d: int, k: int) -> np.ndarray:
    """Leading rectangular identity."""
    return np.eye(d, k)


def synth_generate(n: int, d: int, k: int, seed: int, noise_scale: float = 1.0):
    """
    Gaussian features and labels from the planted model:
        y_j = argmax_l { x_j^T U(:, l) + noise_scale * g_l / sqrt(d) },  g ~ N(0, I_k)
    Returns (dataset, planted U).
    """
    for name, value in (("n", n), ("d", d), ("k", k)):
        if value < 1:
            raise InvalidProblemError(f"Size {name} must be positive, got {value}.")
    generator = DrawStream(seed, DATA_STREAM).generator
    X = generator.standard_normal((n, d))
    noise = generator.standard_normal((n, k))
    U_planted = planted_model(d, k)
    scores = X @ U_planted + (noise_scale / math.sqrt(d)) * noise
    y = np.argmax(scores, axis=1)
    return Dataset(X=X, y=y, k=k), U_planted
