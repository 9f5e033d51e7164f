"""Sample-covariance spectra of zero-filled incomplete matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .datagen import IncompleteMatrix
from .errors import DimensionError, NumericalError, TrimError

CLAMP_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray  # nonincreasing, length d
    d: int
    n: int

    @property
    def gamma_n(self) -> float:
        return self.d / self.n

    def __len__(self):
        return len(self.eigenvalues)


def _as_array(x) -> np.ndarray:
    if isinstance(x, IncompleteMatrix):
        return x.values
    return np.asarray(x, dtype=float)


def _gram(x: np.ndarray) -> np.ndarray:
    d, n = x.shape
    return (x @ x.T if d <= n else x.T @ x) / n


def _diagnose(g: np.ndarray) -> str:
    finite = bool(np.all(np.isfinite(g)))
    if not finite:
        return "matrix contains non-finite entries"
    cond = np.linalg.cond(g) if g.size else 0.0
    return f"norm={np.linalg.norm(g):.3e}, condition={cond:.3e}"


def sample_cov_eigs(x) -> SpectrumResult:
    """Eigenvalues of ``X^o X^o^T / n`` in descending order.

    The eigenproblem is solved on the ``min(d, n)`` Gram side and padded with
    zeros up to length ``d``.
    """
    arr = _as_array(x)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"need a non-empty 2-D matrix, got shape {arr.shape}")
    d, n = arr.shape
    g = _gram(arr)
    try:
        w = np.linalg.eigvalsh(g)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed to converge: {_diagnose(g)}") from exc
    w = w[::-1]
    top = max(w[0], 0.0)
    if w[-1] < -CLAMP_RTOL * max(top, 1e-300) and w[-1] < -1e-300:
        raise NumericalError(f"sample covariance has eigenvalue {w[-1]:.3e} far below zero: {_diagnose(g)}")
    w = np.clip(w, 0.0, None)
    if len(w) < d:
        w = np.concatenate([w, np.zeros(d - len(w))])
    return SpectrumResult(w, d, n)


def largest_eigenvalue(x) -> float:
    """Largest eigenvalue of ``X X^T / n`` (respects the input dtype)."""
    arr = x.values if isinstance(x, IncompleteMatrix) else np.asarray(x)
    d, n = arr.shape
    g = (arr @ arr.T if d <= n else arr.T @ arr) / arr.dtype.type(n)
    m = g.shape[0]
    try:
        top = scipy.linalg.eigvalsh(g, subset_by_index=[m - 1, m - 1], check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"eigensolver failed to converge: {_diagnose(g)}") from exc
    return float(top[0])


def trimmed_moments(spec: SpectrumResult, r_hat: int):
    """Bulk averages of eigenvalues and their squares, skipping the top ``r_hat``."""
    if r_hat < 0 or r_hat >= spec.d:
        raise TrimError(f"cannot trim {r_hat} of {spec.d} eigenvalues")
    tail = spec.eigenvalues[r_hat:]
    return float(tail.mean()), float(np.mean(tail * tail))


def moment_of_matrix(a, k: int) -> float:
    """``tr(A^k) / dim(A)`` for a square matrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"need a square matrix, got shape {a.shape}")
    if k == 1:
        return float(np.trace(a)) / a.shape[0]
    if k == 2:
        return float(np.sum(a * a.T)) / a.shape[0]
    return float(np.trace(np.linalg.matrix_power(a, k))) / a.shape[0]
