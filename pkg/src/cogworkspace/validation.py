"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted as _sk_check_is_fitted

__all__ = [
    "NotFittedError",
    "check_chunking",
    "check_is_fitted",
    "check_positive_int",
    "check_probability",
    "check_query",
    "check_unit_norm",
]


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_chunking(chunk_size, overlap) -> None:
    check_positive_int(chunk_size, "chunk_size")
    if not isinstance(overlap, numbers.Integral) or not 0 <= overlap < chunk_size:
        raise ValueError(f"overlap must satisfy 0 <= overlap < chunk_size, got {overlap!r}")


def check_probability(value, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_unit_norm(vec, tol: float = 1e-9) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"vector is not unit norm (|v|={norm})")
    return vec


def check_query(query) -> str:
    if not isinstance(query, str) or not query.strip():
        raise ValueError("query must be a non-empty string")
    return query


def check_is_fitted(estimator, attributes) -> None:
    _sk_check_is_fitted(estimator, attributes)
