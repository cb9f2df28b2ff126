"""Dense vector/matrix primitives with strict contracts.

Vectors are 1-D float64 numpy arrays, matrices 2-D. Everything is computed in
double precision; gradient checking elsewhere in the package depends on that.
All public operations validate shapes and reject non-finite inputs instead of
propagating NaNs.
"""

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError

NORM_EPS = 1e-12


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidArgumentError(f"expected a 1-D vector, got shape {v.shape}")
    if v.size == 0:
        raise InvalidArgumentError("empty vector")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("vector contains NaN or Inf")
    return v


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidArgumentError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("matrix contains NaN or Inf")
    return a


def l2_normalize(v) -> np.ndarray:
    """v / max(||v||, eps); returns the zero vector unchanged instead of erroring."""
    v = as_vector(v)
    norm = float(np.linalg.norm(v))
    if norm <= NORM_EPS:
        return np.zeros_like(v)
    return v / norm


def elementwise_product(a, b) -> np.ndarray:
    a, b = as_vector(a), as_vector(b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a * b


def dot(a, b) -> float:
    a, b = as_vector(a), as_vector(b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.dot(a, b))


def cosine(a, b) -> float:
    a, b = as_vector(a), as_vector(b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na <= NORM_EPS or nb <= NORM_EPS:
        raise DegenerateInputError("cosine of a (near-)zero vector is undefined")
    # clip float rounding, never a real value: |cos| <= 1 + 1e-9 by contract
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def matvec(a, v) -> np.ndarray:
    a, v = as_matrix(a), as_vector(v)
    if a.shape[1] != v.shape[0]:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} @ ({v.shape[0]},)")
    return a @ v


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def transpose(a) -> np.ndarray:
    return as_matrix(a).T.copy()


def axpy(alpha: float, x, y) -> np.ndarray:
    """alpha * x + y"""
    x, y = as_vector(x), as_vector(y)
    if x.shape != y.shape:
        raise InvalidArgumentError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if not np.isfinite(alpha):
        raise InvalidArgumentError("alpha is not finite")
    return alpha * x + y
