"""Embedding preprocessing chain.

A single trainable affine map (weighted LDA projection with per-component
mean/variance normalization folded in) followed by length normalization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

LENGTH_NORM_EPS = 1e-10
_COND_LIMIT = 1e10
_RIDGE_SCALE = 1e-6


@dataclass(frozen=True)
class AffinePreproc:
    """Affine map y = A x + b; callers length-normalize the output."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
            raise ValueError("A must be (out_dim, in_dim) and b (out_dim,)")
        if A.shape[0] < 1 or A.shape[0] > A.shape[1]:
            raise ValueError("require 1 <= out_dim <= in_dim")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("affine parameters must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def in_dim(self) -> int:
        return self.A.shape[1]

    @property
    def out_dim(self) -> int:
        return self.A.shape[0]

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Apply to a batch of row vectors, including length normalization."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.in_dim:
            raise ValueError(f"expected dim {self.in_dim}, got {X.shape[1]}")
        Z = X @ self.A.T + self.b
        norms = np.linalg.norm(Z, axis=1)
        if np.any(norms < LENGTH_NORM_EPS):
            raise ValueError("degenerate embedding: affine output has near-zero norm")
        return Z / norms[:, None]


def length_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector to unit Euclidean norm."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm < LENGTH_NORM_EPS:
        raise ValueError("degenerate embedding: near-zero norm")
    return v / norm


def apply(preproc: AffinePreproc, x: np.ndarray) -> np.ndarray:
    """lengthnorm(A x + b) for a single vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("apply expects a single vector")
    return length_normalize(preproc.A @ x + preproc.b)


def fit_lda(
    X: np.ndarray,
    labels,
    weights: np.ndarray | None,
    out_dim: int,
) -> AffinePreproc:
    """Weighted LDA projection with mean/variance normalization folded in.

    Rows of A are the leading generalized eigenvectors of the weighted
    between-class scatter against the weighted within-class scatter, scaled
    and shifted so the projected training data has zero mean and unit
    variance per component. Requires out_dim <= #classes - 1 and every
    class to have at least two samples.
    """
    X = np.asarray(X, dtype=np.float64)
    n, in_dim = X.shape
    if weights is None:
        weights = np.ones(n)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n,) or np.any(weights <= 0):
        raise ValueError("weights must be positive, one per record")
    labels = np.array(list(labels), dtype=object)
    classes = sorted(set(labels))
    if out_dim > len(classes) - 1:
        raise ValueError(
            f"out_dim {out_dim} exceeds LDA rank bound #classes-1 = {len(classes) - 1}"
        )
    if out_dim < 1:
        raise ValueError("out_dim must be >= 1")

    total_w = weights.sum()
    global_mean = weights @ X / total_w
    S_w = np.zeros((in_dim, in_dim))
    S_b = np.zeros((in_dim, in_dim))
    for cls in classes:
        mask = labels == cls
        if mask.sum() < 2:
            raise ValueError(f"class {cls!r} has fewer than 2 samples")
        w = weights[mask]
        Xc = X[mask]
        n_c = w.sum()
        mean_c = w @ Xc / n_c
        D = Xc - mean_c
        S_w += (w[:, None] * D).T @ D
        dm = mean_c - global_mean
        S_b += n_c * np.outer(dm, dm)
    S_w /= total_w
    S_b /= total_w

    cond = np.linalg.cond(S_w)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        ridge = _RIDGE_SCALE * np.trace(S_w) / in_dim
        logger.warning(
            "within-class scatter ill-conditioned (cond=%.3g); adding ridge %.3g", cond, ridge
        )
        S_w = S_w + ridge * np.eye(in_dim)

    try:
        eigvals, eigvecs = scipy.linalg.eigh(S_b, S_w)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(f"within-class scatter is singular: {exc}") from exc
    order = np.argsort(eigvals)[::-1][:out_dim]
    A0 = eigvecs[:, order].T
    # Sign convention: largest-magnitude component of each direction positive.
    for row in A0:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0

    Z = X @ A0.T
    mean_z = weights @ Z / total_w
    var_z = weights @ (Z - mean_z) ** 2 / total_w
    if np.any(var_z < 1e-18):
        raise ValueError("projected component has (near) zero variance")
    scale = 1.0 / np.sqrt(var_z)
    return AffinePreproc(A=scale[:, None] * A0, b=-mean_z * scale)
