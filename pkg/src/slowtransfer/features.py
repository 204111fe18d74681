"""PCA and slow feature analysis over trajectory-segmented activation data.

Both extractors are affine maps fitted on the row-concatenation of per-episode
activation matrices. PCA keeps the directions of maximal variance of the
hidden-layer signal. SFA whitens the signal first, then finds the unit-variance
directions whose discrete time derivative has minimal mean square: the fitted
features are zero-mean, unit-variance, mutually decorrelated, and ordered by
slowness (ascending delta value, where delta is the mean squared one-step
difference). Time derivatives are forward differences taken strictly inside
each trajectory; no difference ever spans an episode boundary.

The eigensolver is a deterministic cyclic Jacobi iteration with a fixed sweep
order and a fixed sign convention (each eigenvector's largest-magnitude entry
is positive), so fitted models are reproducible bit-for-bit across runs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MODEL_MAGIC = b"STFX"
KIND_PCA = 0
KIND_SFA = 1

EPS_WHITE = 1e-7  # relative variance cutoff for rank-deficient directions


class DegenerateDataError(ValueError):
    """Input data has no variance left to analyze."""


class ModelFormatError(ValueError):
    pass


@dataclass
class ActivationDataset:
    """Row-concatenated trajectories plus the start index of each trajectory."""

    X: np.ndarray
    boundaries: np.ndarray  # start row of each trajectory, first entry 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.boundaries = np.asarray(self.boundaries, dtype=int)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D (rows x units)")
        if len(self.boundaries) == 0 or self.boundaries[0] != 0:
            raise ValueError("boundaries must start at 0")
        if np.any(np.diff(self.boundaries) <= 0):
            raise ValueError("boundaries must be strictly increasing")
        if self.boundaries[-1] >= len(self.X):
            raise ValueError("last boundary exceeds row count")


def concat_trajectories(trajectories) -> ActivationDataset:
    """Stack a list of (T_i x D) matrices; every T_i must be >= 2."""
    trajectories = [np.asarray(t, dtype=float) for t in trajectories]
    if not trajectories:
        raise ValueError("need at least one trajectory")
    d = trajectories[0].shape[1]
    starts, at = [], 0
    for t in trajectories:
        if t.ndim != 2 or t.shape[1] != d:
            raise ValueError("trajectories must share one unit dimension")
        if t.shape[0] < 2:
            raise ValueError("every trajectory needs at least 2 timesteps")
        starts.append(at)
        at += t.shape[0]
    return ActivationDataset(np.concatenate(trajectories, axis=0), np.array(starts))


def _as_dataset(data) -> ActivationDataset:
    if isinstance(data, ActivationDataset):
        return data
    if isinstance(data, (list, tuple)):
        return concat_trajectories(data)
    x = np.asarray(data, dtype=float)
    return ActivationDataset(x, np.array([0]))


# -- eigensolver ----------------------------------------------------------------

def _off_norm(a):
    return np.sqrt(np.sum(a * a) - np.sum(np.diag(a) ** 2))


def symmetric_eig(a: np.ndarray):
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Returns (eigenvalues, eigenvectors) with eigenvalues in descending order
    and eigenvectors as orthonormal columns. Deterministic: fixed row-major
    sweep order, convergence at off-diagonal norm 1e-12 relative to the input
    norm, and each eigenvector's largest-magnitude entry made positive.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(np.max(np.abs(a)), 1.0) if a.size else 1.0
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric within 1e-12")
    n = a.shape[0]
    a = (a + a.T) / 2.0
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    tol = 1e-12 * max(np.linalg.norm(a), np.finfo(float).tiny)
    skip = tol / (n * n)
    for _ in range(60):
        if _off_norm(a) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi iteration did not converge in 60 sweeps")
    evals = a.diagonal().copy()
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    v = v[:, order]
    for j in range(n):
        i = int(np.argmax(np.abs(v[:, j])))
        if v[i, j] < 0.0:
            v[:, j] = -v[:, j]
    return evals, v


# -- PCA --------------------------------------------------------------------------

@dataclass
class PCAModel:
    """Affine projector onto the top-k covariance eigenvectors.

    components has shape (D, k) with orthonormal columns ordered by descending
    eigenvalue; the eigenvalues are the variances of the projected training data.
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.components.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[1]


def fit_pca(data, k: int) -> PCAModel:
    ds = _as_dataset(data)
    n, d = ds.X.shape
    if n < 2:
        raise ValueError("need at least 2 rows to fit PCA")
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    mean = ds.X.mean(axis=0)
    xc = ds.X - mean
    cov = (xc.T @ xc) / (n - 1)
    evals, evecs = symmetric_eig(cov)
    return PCAModel(mean, evecs[:, :k].copy(), np.maximum(evals[:k], 0.0))


def transform_pca(model: PCAModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    if rows.shape[-1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} columns, got {rows.shape[-1]}")
    return (rows - model.mean) @ model.components


# -- whitening and SFA -------------------------------------------------------------

def whiten(data):
    """Center and decorrelate to unit covariance, dropping dead directions.

    Directions with variance below EPS_WHITE times the largest variance are
    discarded (relu layers routinely produce constant units). Returns the
    (D x m) whitening matrix and the whitened rows; the output sample
    covariance is the m x m identity.
    """
    ds = _as_dataset(data)
    n, _ = ds.X.shape
    if n < 2:
        raise ValueError("need at least 2 rows to whiten")
    mean = ds.X.mean(axis=0)
    xc = ds.X - mean
    cov = (xc.T @ xc) / (n - 1)
    evals, evecs = symmetric_eig(cov)
    if evals[0] <= 0.0:
        raise DegenerateDataError("data is constant in every direction")
    keep = evals >= EPS_WHITE * evals[0]
    whitener = evecs[:, keep] / np.sqrt(evals[keep])
    return whitener, xc @ whitener


def time_derivative(data) -> np.ndarray:
    """Forward differences z(t+1) - z(t), computed within each trajectory only."""
    ds = _as_dataset(data)
    lengths = np.diff(np.append(ds.boundaries, len(ds.X)))
    if np.any(lengths < 2):
        raise ValueError("every trajectory needs at least 2 timesteps")
    diffs = np.diff(ds.X, axis=0)
    drop = ds.boundaries[1:] - 1  # rows that would mix two trajectories
    return np.delete(diffs, drop, axis=0)


@dataclass
class SFAModel:
    """Affine slow-feature extractor: whiten, then project on the slowest axes.

    combined = whitener @ projection maps centered input rows straight to the
    k slowest features; delta_values are the mean squared one-step differences
    of the fitted features, in ascending order.
    """

    mean: np.ndarray
    whitener: np.ndarray
    projection: np.ndarray
    delta_values: np.ndarray
    combined: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.whitener.shape[0]

    @property
    def k(self) -> int:
        return self.projection.shape[1]


def fit_sfa(data, k: int) -> SFAModel:
    """Fit slow feature analysis on trajectory-segmented data.

    data may be a list of (T_i x D) trajectory matrices or an
    ActivationDataset. The solution whitens the concatenated data,
    eigendecomposes the covariance of the within-trajectory forward
    differences, and keeps the k eigenvectors with the smallest eigenvalues.
    """
    ds = _as_dataset(data)
    mean = ds.X.mean(axis=0)
    whitener, z = whiten(ds)
    m = whitener.shape[1]
    if not 1 <= k <= m:
        raise ValueError(f"k must be in [1, {m}] after whitening, got {k}")
    zdot = time_derivative(ActivationDataset(z, ds.boundaries))
    if len(zdot) < 2:
        raise DegenerateDataError("not enough difference rows for a covariance")
    dcov = (zdot.T @ zdot) / (len(zdot) - 1)
    evals, evecs = symmetric_eig(dcov)
    # slowest directions live at the small end of the spectrum
    idx = np.arange(m - 1, m - 1 - k, -1)
    projection = evecs[:, idx].copy()
    delta = np.maximum(evals[idx], 0.0)
    return SFAModel(mean, whitener, projection, delta, whitener @ projection)


def transform_sfa(model: SFAModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    if rows.shape[-1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} columns, got {rows.shape[-1]}")
    return (rows - model.mean) @ model.combined


def sfa_constraint_residuals(model: SFAModel, data) -> dict:
    """Max deviations of fitted outputs from the SFA constraints on data."""
    ds = _as_dataset(data)
    y = transform_sfa(model, ds.X)
    n = len(y)
    mean = y.mean(axis=0)
    cov = (y - mean).T @ (y - mean) / (n - 1)
    off = cov - np.diag(np.diag(cov))
    return {
        "max_abs_mean": float(np.max(np.abs(mean))),
        "max_abs_var_minus_1": float(np.max(np.abs(np.diag(cov) - 1.0))),
        "max_abs_cross_cov": float(np.max(np.abs(off))) if model.k > 1 else 0.0,
    }


# -- serialization ------------------------------------------------------------------

def _write_array(fh, arr):
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        if isinstance(model, PCAModel):
            fh.write(struct.pack("<BIII", KIND_PCA, model.input_dim, 0, model.k))
            _write_array(fh, model.mean)
            _write_array(fh, model.components)
            _write_array(fh, model.eigenvalues)
        elif isinstance(model, SFAModel):
            m = model.whitener.shape[1]
            fh.write(struct.pack("<BIII", KIND_SFA, model.input_dim, m, model.k))
            _write_array(fh, model.mean)
            _write_array(fh, model.whitener)
            _write_array(fh, model.projection)
            _write_array(fh, model.delta_values)
        else:
            raise TypeError("expected a PCAModel or SFAModel")


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise ModelFormatError("bad magic bytes, not a feature model file")
    kind, d, m, k = struct.unpack("<BIII", blob[4:17])
    offset = 17

    def take(*shape):
        nonlocal offset
        count = int(np.prod(shape))
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise ModelFormatError("truncated model file")
        arr = np.frombuffer(blob[offset:offset + nbytes], dtype="<f8")
        offset += nbytes
        return arr.reshape(shape).astype(float)

    if kind == KIND_PCA:
        model = PCAModel(take(d), take(d, k), take(k))
    elif kind == KIND_SFA:
        mean, whitener, projection, delta = take(d), take(d, m), take(m, k), take(k)
        model = SFAModel(mean, whitener, projection, delta, whitener @ projection)
    else:
        raise ModelFormatError(f"unknown model kind byte {kind}")
    if offset != len(blob):
        raise ModelFormatError("trailing bytes after model payload")
    return model
