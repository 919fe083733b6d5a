"""Frequency-domain differentiation and coefficient/time-sample transforms.

Coefficient vectors are plain 1-D float arrays of length ``N * D`` in
DOF-major order (``D = basis.per_dof_dim``).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .basis import RATIONAL, TruncationBasis, combined_frequency, freq_gcd
from .collocation import CollocationMatrices


def _check_length(xhat: np.ndarray, basis: TruncationBasis) -> int:
    D = basis.per_dof_dim
    if xhat.ndim != 1 or xhat.size % D:
        raise ValueError(f"coefficient vector of length {xhat.size} does not fit "
                         f"per-DOF dimension {D}")
    return xhat.size // D


def grad_block(basis: TruncationBasis) -> np.ndarray:
    """Per-DOF derivative operator: zero for the constant, ``[[0, w], [-w, 0]]`` per harmonic."""
    D = basis.per_dof_dim
    G = np.zeros((D, D))
    for k, w in enumerate(basis.combined()):
        j = 1 + 2 * k
        G[j, j + 1] = w
        G[j + 1, j] = -w
    return G


def grad_matrix(basis: TruncationBasis, N: int = 1) -> np.ndarray:
    return np.kron(np.eye(N), grad_block(basis))


def grad2_block(basis: TruncationBasis) -> np.ndarray:
    G = grad_block(basis)
    return G @ G


def grad2_matrix(basis: TruncationBasis, N: int = 1) -> np.ndarray:
    return np.kron(np.eye(N), grad2_block(basis))


def grad_frequency_derivative(basis: TruncationBasis, which: int) -> np.ndarray:
    """d(grad_block)/d(w_which): the derivative operator's sensitivity to one base frequency."""
    D = basis.per_dof_dim
    G = np.zeros((D, D))
    for k, idx in enumerate(basis.harmonics):
        m = idx[which]
        j = 1 + 2 * k
        G[j, j + 1] = m
        G[j + 1, j] = -m
    return G


def time_matrix(basis: TruncationBasis, times) -> np.ndarray:
    """Rows ``[1, cos w_1 t, sin w_1 t, ...]`` at arbitrary ``times``."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    W = np.empty((t.size, basis.per_dof_dim))
    W[:, 0] = 1.0
    for k, idx in enumerate(basis.harmonics):
        ph = combined_frequency(idx, basis.frequencies) * t
        W[:, 1 + 2 * k] = np.cos(ph)
        W[:, 2 + 2 * k] = np.sin(ph)
    return W


def synthesize(xhat, basis: TruncationBasis, times) -> np.ndarray:
    """Evaluate the trigonometric series at ``times``; returns shape (len(times), N)."""
    xhat = np.asarray(xhat, dtype=float)
    N = _check_length(xhat, basis)
    W = time_matrix(basis, times)
    return W @ xhat.reshape(N, -1).T


def analyze(samples, matrices: CollocationMatrices) -> np.ndarray:
    """Apply ``E*`` to node samples of shape (M, N) and flatten DOF-major."""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    M = matrices.plan.M
    if X.shape != (M, matrices.N):
        raise ValueError(f"samples of shape {X.shape} do not match (M, N) = {(M, matrices.N)}")
    return (matrices.E_star_block @ X).T.reshape(-1)


def to_nodes(xhat, matrices: CollocationMatrices) -> np.ndarray:
    """``E x_hat`` as an (N, M) array."""
    xhat = np.asarray(xhat, dtype=float)
    return xhat.reshape(matrices.N, -1) @ matrices.E_block.T


def amplitude(xhat, basis: TruncationBasis, dof: int, harmonic: Iterable[int]) -> float:
    """``sqrt(c**2 + s**2)`` of one harmonic of one DOF (``|c|`` for the constant)."""
    xhat = np.asarray(xhat, dtype=float)
    N = _check_length(xhat, basis)
    if not 0 <= dof < N:
        raise IndexError(f"dof {dof} out of range for N={N}")
    j, _ = basis.position(tuple(harmonic))
    base = dof * basis.per_dof_dim
    if j == 0:
        return float(abs(xhat[base]))
    return float(np.hypot(xhat[base + j], xhat[base + j + 1]))


def coefficient_records(xhat, basis: TruncationBasis, names: Sequence[str] | None = None):
    """Flatten a coefficient vector into ``{dof, index, part, value}`` records."""
    xhat = np.asarray(xhat, dtype=float)
    N = _check_length(xhat, basis)
    D = basis.per_dof_dim
    out = []
    for d in range(N):
        label = names[d] if names else d
        row = xhat[d * D:(d + 1) * D]
        out.append({"dof": label, "index": list(basis.indices[0]), "part": "c",
                    "value": float(row[0])})
        for k, idx in enumerate(basis.harmonics):
            out.append({"dof": label, "index": list(idx), "part": "c",
                        "value": float(row[1 + 2 * k])})
            out.append({"dof": label, "index": list(idx), "part": "s",
                        "value": float(row[2 + 2 * k])})
    return out


def unit_coefficient(basis: TruncationBasis, N: int, dof: int, harmonic, part: str = "c") -> np.ndarray:
    x = np.zeros(N * basis.per_dof_dim)
    j, sign = basis.position(tuple(harmonic))
    if part == "s":
        if j == 0:
            raise KeyError("the constant index has no sine coefficient")
        x[dof * basis.per_dof_dim + j + 1] = sign
    else:
        x[dof * basis.per_dof_dim + j] = 1.0
    return x


def torus_transforms(basis: TruncationBasis, K: int):
    """Synthesis and analysis matrices on a uniform ``K**t`` grid of torus angles.

    Rows of the synthesis matrix are ``[1, cos(h.theta), sin(h.theta), ...]``
    at each grid point; the analysis matrix is its scaled transpose.  Both are
    exact for products whose indices stay below ``K`` in every component.
    """
    axes = np.meshgrid(*([2.0 * np.pi * np.arange(K) / K] * basis.t), indexing="ij")
    theta = np.stack([a.reshape(-1) for a in axes], axis=1)
    S = np.empty((theta.shape[0], basis.per_dof_dim))
    S[:, 0] = 1.0
    for k, idx in enumerate(basis.harmonics):
        ph = theta @ np.asarray(idx, dtype=float)
        S[:, 1 + 2 * k] = np.cos(ph)
        S[:, 2 + 2 * k] = np.sin(ph)
    A = (2.0 / theta.shape[0]) * S.T
    A[0] *= 0.5
    return S, A, theta


def series_peak(xhat, basis: TruncationBasis, dof: int = 0, *, T: float | None = None,
                samples: int = 200_000, K: int = 256) -> float:
    """Peak ``max |x(t)|`` of one DOF of the series.

    Rational bases are sampled over one period ``T`` (``2 pi / GCD`` by
    default); a quasi-periodic series fills its torus densely, so its peak is
    the maximum over a ``K**t`` grid of torus angles.
    """
    xhat = np.asarray(xhat, dtype=float)
    N = _check_length(xhat, basis)
    row = xhat.reshape(N, -1)[dof]
    if basis.t == 1 or basis.ratio_class == RATIONAL:
        if T is None:
            base = basis.frequencies[0] if basis.t == 1 else freq_gcd(basis.frequencies)
            T = 2.0 * np.pi / base.value
        t = np.linspace(0.0, T, samples, endpoint=False)
        return float(np.abs(time_matrix(basis, t) @ row).max())
    S, _, _ = torus_transforms(basis, K)
    return float(np.abs(S @ row).max())


def embed_coefficients(xhat, source: TruncationBasis, target: TruncationBasis) -> np.ndarray:
    """Copy coefficients into a larger basis, zero-filling the new harmonics.

    Harmonics of ``source`` missing from ``target`` raise ``KeyError``.
    """
    xhat = np.asarray(xhat, dtype=float)
    N = _check_length(xhat, source)
    Ds, Dt = source.per_dof_dim, target.per_dof_dim
    out = np.zeros(N * Dt)
    for d in range(N):
        out[d * Dt] = xhat[d * Ds]
        for k, idx in enumerate(source.harmonics):
            j, _ = target.position(idx)
            out[d * Dt + j] = xhat[d * Ds + 1 + 2 * k]
            out[d * Dt + j + 1] = xhat[d * Ds + 2 + 2 * k]
    return out
