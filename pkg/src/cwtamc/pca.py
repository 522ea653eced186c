"""Covariance-based linear PCA with a cyclic Jacobi eigensolver."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidInputError

PCA_FORMAT_VERSION = 1


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm drops below ``tol`` times
    the matrix norm. Returns ``(eigenvalues, eigenvectors)`` unsorted, with
    eigenvectors in columns.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError("matrix must be square")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise InvalidInputError("matrix must be symmetric")
    a = (a + a.T) / 2
    d = a.shape[0]
    v = np.eye(d)
    scale = np.linalg.norm(a)
    if scale == 0:
        return np.zeros(d), v
    for _ in range(max_sweeps):
        off = np.sqrt(2 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-300 or abs(apq) <= 1e-18 * (abs(a[p, p]) + abs(a[q, q])):
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * apq)
                if abs(theta) > 1e150:
                    t = 1 / (2 * theta)
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1))
                c = 1 / np.sqrt(t * t + 1)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return np.diag(a).copy(), v


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # columns: flip so the largest-magnitude entry is positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1
    return vectors * signs


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (n, d), rows are principal axes
    eigenvalues: np.ndarray  # retained, non-increasing
    spectrum: np.ndarray  # all d eigenvalues, non-increasing
    layout: str = ""

    @property
    def n(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    def to_dict(self) -> dict:
        return {
            "format": "pca",
            "version": PCA_FORMAT_VERSION,
            "feature_layout": self.layout,
            "n": self.n,
            "dim": self.dim,
            "mean": self.mean.tolist(),
            "components": self.components.ravel().tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "spectrum": self.spectrum.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict, layout: str | None = None) -> "PcaModel":
        if data.get("format") != "pca" or data.get("version") != PCA_FORMAT_VERSION:
            raise InvalidInputError("not a version-1 PCA model")
        if layout is not None and data.get("feature_layout") != layout:
            raise InvalidInputError("PCA model was fitted on a different feature layout")
        n, dim = int(data["n"]), int(data["dim"])
        return cls(
            mean=np.asarray(data["mean"], dtype=float),
            components=np.asarray(data["components"], dtype=float).reshape(n, dim),
            eigenvalues=np.asarray(data["eigenvalues"], dtype=float),
            spectrum=np.asarray(data["spectrum"], dtype=float),
            layout=data.get("feature_layout", ""),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str, layout: str | None = None) -> "PcaModel":
        return cls.from_dict(json.loads(text), layout)


def fit_pca(features, n: int, layout: str = "") -> PcaModel:
    """Fit PCA on the rows of ``features`` keeping ``n`` components.

    Covariance uses the ``1/(p-1)`` normalization. Components are sign-fixed so
    that the largest-magnitude entry is positive, which makes the fit
    deterministic.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise InvalidInputError("features must be a 2-D array (samples x features)")
    p, d = x.shape
    if p < 2:
        raise InvalidInputError("need at least 2 samples")
    if not 1 <= n <= d:
        raise InvalidInputError(f"n must lie in [1, {d}]")
    if p < n + 1:
        raise InvalidInputError(f"need at least n+1={n + 1} samples, got {p}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features contain non-finite values")
    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.T @ centred / (p - 1)
    if not np.any(cov):
        raise DegenerateInputError("all samples are identical")
    vals, vecs = jacobi_eigh(cov)
    vals = np.maximum(vals, 0.0)
    vecs = _fix_signs(vecs)
    order = sorted(range(d), key=lambda i: (-vals[i], tuple(-vecs[:, i])))
    vals, vecs = vals[order], vecs[:, order]
    return PcaModel(mean, vecs[:, :n].T.copy(), vals[:n].copy(), vals.copy(), layout)


def transform(model: PcaModel, x) -> np.ndarray:
    """Project one vector or a row-stack of vectors: ``components @ (x - mean)``."""
    x = np.asarray(x, dtype=float)
    return (x - model.mean) @ model.components.T


def inverse_transform(model: PcaModel, y) -> np.ndarray:
    return np.asarray(y, dtype=float) @ model.components + model.mean


def explained_variance(model: PcaModel) -> np.ndarray:
    """Cumulative fraction of total variance over the full eigenvalue spectrum."""
    total = model.spectrum.sum()
    if total <= 0:
        raise DegenerateInputError("total variance is zero")
    return np.cumsum(model.spectrum) / total
