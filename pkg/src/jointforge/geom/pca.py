from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateInputError


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so that its largest-magnitude component is positive."""
    v = np.asarray(v, dtype=float)
    return -v if v[np.argmax(np.abs(v))] < 0 else v


@dataclass(frozen=True, eq=False)
class PcaResult:
    mean: np.ndarray
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, same order as eigenvalues

    @property
    def primary(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    @property
    def normal(self) -> np.ndarray:
        return self.eigenvectors[:, 2]


def pca(points) -> PcaResult:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) < 3:
        raise DegenerateInputError(f"PCA needs at least 3 points, got {len(p)}")
    mean = p.mean(axis=0)
    c = p - mean
    if np.abs(c).max() <= 1e-12:
        raise DegenerateInputError("all points coincide")
    cov = c.T @ c / len(p)
    w, v = np.linalg.eigh(cov)
    w = w[::-1]
    v = v[:, ::-1]
    w = np.where(w < 0.0, 0.0, w)
    v = np.column_stack([canonical_sign(v[:, k]) for k in range(3)])
    return PcaResult(mean, w, v)
