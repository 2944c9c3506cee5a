"""Small input-validation helpers shared by the estimator-facing surfaces."""

from __future__ import annotations

import numpy as np

LABELS = ("ASD", "NT")
POSITIVE_LABEL = "ASD"
NEGATIVE_LABEL = "NT"


def as_float_vector(x, name="x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def as_float_matrix(x, name="X") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name="array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_labels(y, name="y") -> np.ndarray:
    """Validate a label sequence against the strict ASD/NT vocabulary."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    for v in arr:
        if v not in LABELS:
            raise ValueError(f"unknown label {v!r} in {name} (expected one of {LABELS})")
    return arr.astype(object)


def labels_to_binary(y) -> np.ndarray:
    """Map ASD/NT labels to 1/0 (positive class = ASD)."""
    arr = check_labels(y)
    return (arr == POSITIVE_LABEL).astype(np.int8)


def binary_to_labels(b) -> np.ndarray:
    return np.where(np.asarray(b).astype(bool), POSITIVE_LABEL, NEGATIVE_LABEL).astype(object)
