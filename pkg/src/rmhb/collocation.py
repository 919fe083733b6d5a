"""Collocation matrices, sampling plans and aliasing diagnostics.

Only the per-DOF blocks are stored; the full operators are ``I_N (x) block``
with the DOF-major layout used throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .basis import (
    IRRATIONAL,
    RATIONAL,
    ExpandedIndexSet,
    Frequency,
    TruncationBasis,
    expanded_set,
    freq_gcd,
)

ZERO_TOL = 1e-10
REPORT_THRESHOLD = 1e-4
MAX_ELEMENTS = 10**8


class PlanError(ValueError):
    """A sampling plan cannot be formed from the given inputs."""


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SamplingPlan:
    """``M`` equispaced nodes ``t_i = T*(i-1)/M`` over one sampling period ``T``.

    For the rational class ``gcd`` is the exact common divisor of the base
    frequencies and ``critical_M`` the de-aliasing bound; the plan is
    de-aliased iff ``M > critical_M``.
    """

    T: float
    M: int
    ratio_class: str
    phi: int = 1
    critical_M: int | None = None
    gcd: Frequency | None = None

    @property
    def de_aliased(self) -> bool:
        return self.critical_M is not None and self.M > self.critical_M

    @property
    def nodes(self) -> np.ndarray:
        return self.T * np.arange(self.M) / self.M

    def with_M(self, M: int) -> "SamplingPlan":
        return SamplingPlan(self.T, int(M), self.ratio_class, self.phi, self.critical_M, self.gcd)


def _harmonic_multiples(indices, frequencies, gcd: Frequency) -> list[int] | None:
    """Exact integers ``k`` with ``combined = k * gcd``, or None if not exact."""
    if gcd is None or gcd.rational is None:
        return None
    if any(f.rational is None or f.unit != gcd.unit for f in frequencies):
        return None
    out = []
    for idx in indices:
        q = sum(m * f.rational for m, f in zip(idx, frequencies)) / gcd.rational
        if q.denominator != 1:
            return None
        out.append(int(q))
    return out


def sampling_plan(basis: TruncationBasis, phi: int,
                  budget: Mapping[str, float] | None = None) -> SamplingPlan:
    """Choose ``(T, M)`` for ``basis`` under a degree-``phi`` nonlinearity.

    Rational bases get ``T = 2*pi/GCD`` and ``M = critical_M + 1`` unless the
    budget asks for another ``M``; a budget ``M`` at or below the bound yields a
    plan that is simply not de-aliased.  Irrational bases need an explicit
    ``budget={'T': ..., 'M': ...}`` which is used verbatim.
    """
    if phi < 1:
        raise PlanError("phi must be >= 1")
    budget = dict(budget or {})
    freqs = basis.frequencies
    p = basis.order
    if basis.ratio_class == RATIONAL:
        if len(freqs) == 1 and freqs[0].rational is None:
            gcd = None
            T = 2.0 * math.pi / freqs[0].value
            ratio = 1
        else:
            gcd = freq_gcd(freqs)
            T = 2.0 * math.pi / (gcd.scale * float(gcd.rational))
            ratio = max(f.rational for f in freqs) / gcd.rational
            assert ratio.denominator == 1
            ratio = int(ratio)
        critical = (phi + 1) * p * ratio
        if budget.get("T") is not None and not math.isclose(float(budget["T"]), T, rel_tol=1e-12):
            raise PlanError(f"rational plan fixes T = {T!r}; budget T = {budget['T']!r} differs")
        M = int(budget["M"]) if budget.get("M") is not None else critical + 1
        if M < 1:
            raise PlanError("M must be positive")
        return SamplingPlan(T, M, RATIONAL, phi, critical, gcd)
    if budget.get("T") is None or budget.get("M") is None:
        raise PlanError("irrational frequency ratio: an explicit budget {T, M} is required")
    T, M = float(budget["T"]), int(budget["M"])
    if not (T > 0 and M >= 1):
        raise PlanError("budget T and M must be positive")
    return SamplingPlan(T, M, IRRATIONAL, phi, None, None)


def _phases(indices, frequencies, plan: SamplingPlan) -> np.ndarray:
    """(M, len(indices)) array of combined_frequency * t_i."""
    i = np.arange(plan.M)
    ks = _harmonic_multiples(indices, frequencies, plan.gcd) \
        if plan.ratio_class == RATIONAL else None
    if ks is not None and all(k >= 0 for k in ks):
        # exact residues keep the trig identities at machine precision for huge T
        k = np.asarray(ks, dtype=np.int64)
        return (2.0 * np.pi / plan.M) * np.mod(np.outer(i, k), plan.M)
    w = np.array([sum(m * f.value for m, f in zip(idx, frequencies)) for idx in indices])
    return np.outer(plan.nodes, w)


def trig_columns(indices, frequencies, plan: SamplingPlan) -> np.ndarray:
    """``[cos, sin]`` column pairs for ``indices`` at the plan nodes."""
    out = np.empty((plan.M, 2 * len(indices)))
    if not indices:
        return out
    ph = _phases(list(indices), frequencies, plan)
    out[:, 0::2] = np.cos(ph)
    out[:, 1::2] = np.sin(ph)
    return out


@dataclass(frozen=True)
class CollocationMatrices:
    """Per-DOF collocation block ``E_block`` (M x D) and transformation ``E_star_block`` (D x M)."""

    E_block: np.ndarray
    E_star_block: np.ndarray
    basis: TruncationBasis
    plan: SamplingPlan
    N: int

    @property
    def E(self) -> np.ndarray:
        return np.kron(np.eye(self.N), self.E_block)

    @property
    def E_star(self) -> np.ndarray:
        return np.kron(np.eye(self.N), self.E_star_block)

    @property
    def gram_block(self) -> np.ndarray:
        return self.E_star_block @ self.E_block


def collocation_block(basis: TruncationBasis, plan: SamplingPlan) -> np.ndarray:
    E = np.empty((plan.M, basis.per_dof_dim))
    E[:, 0] = 1.0
    E[:, 1:] = trig_columns(basis.harmonics, basis.frequencies, plan)
    return E


def transformation_block(E_block: np.ndarray) -> np.ndarray:
    M = E_block.shape[0]
    Es = (2.0 / M) * E_block.T.copy()
    Es[0] *= 0.5
    return Es


def build_matrices(basis: TruncationBasis, plan: SamplingPlan, N: int = 1,
                   max_elements: int = MAX_ELEMENTS) -> CollocationMatrices:
    if N < 1:
        raise PlanError("N must be >= 1")
    size = N * plan.M * N * basis.per_dof_dim
    if size > max_elements:
        raise MemoryError(
            f"collocation operator of {size} elements exceeds the bound {max_elements}")
    E = collocation_block(basis, plan)
    return CollocationMatrices(E, transformation_block(E), basis, plan, int(N))


def gram(matrices: CollocationMatrices) -> np.ndarray:
    """``E* E`` over all DOFs (identity when sampling is de-aliased)."""
    return np.kron(np.eye(matrices.N), matrices.gram_block)


def identity_deviation(matrices: CollocationMatrices) -> float:
    A = matrices.gram_block
    return float(np.max(np.abs(A - np.eye(A.shape[0]))))


def aliasing_matrix(basis: TruncationBasis, phi: int, plan: SamplingPlan,
                    extra: ExpandedIndexSet | None = None) -> np.ndarray:
    """Per-DOF block of ``E_A = E* E_1``.

    Columns come in ``(cos, sin)`` pairs over the expanded set of harmonics
    generated by a degree-``phi`` product; for ``phi == 1`` the result has
    no columns.
    """
    extra = extra or expanded_set(basis, phi)
    E_star = transformation_block(collocation_block(basis, plan))
    if not extra.extra_indices:
        return np.zeros((basis.per_dof_dim, 0))
    E1 = trig_columns(extra.extra_indices, basis.frequencies, plan)
    return E_star @ E1


@dataclass(frozen=True)
class AliasingReport:
    max_abs: float
    frac_above_threshold: float
    threshold: float
    is_zero: bool


def aliasing_report(E_A: np.ndarray, threshold: float = REPORT_THRESHOLD,
                    zero_tol: float = ZERO_TOL) -> AliasingReport:
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    a = np.abs(np.asarray(E_A, dtype=float))
    if a.size == 0:
        return AliasingReport(0.0, 0.0, threshold, True)
    mx = float(a.max())
    return AliasingReport(mx, float(np.count_nonzero(a > threshold)) / a.size,
                          threshold, mx <= zero_tol)


def pseudo_inverse_transform(E: np.ndarray, rcond: float = 1e-12) -> np.ndarray:
    """Least-squares pseudo-inverse of a full-column-rank collocation matrix."""
    E = np.asarray(E, dtype=float)
    U, s, Vt = np.linalg.svd(E, full_matrices=False)
    if s.size == 0 or s[-1] <= rcond * s[0]:
        raise RankDeficiencyError(
            f"collocation matrix is rank deficient (sigma_min/sigma_max = "
            f"{(s[-1] / s[0]) if s.size else 0.0:.3e})")
    return (Vt.T / s) @ U.T


def aliasing_sweep(basis: TruncationBasis, phi: int, Ms, T_equals_M: bool = False,
                   threshold: float = REPORT_THRESHOLD):
    """Yield ``(T, M, AliasingReport)`` across a sweep of collocation counts.

    With ``T_equals_M`` the period follows the node count (one node per unit
    time), as used for incommensurate frequencies.
    """
    extra = expanded_set(basis, phi)
    for M in Ms:
        if T_equals_M:
            plan = sampling_plan(basis, phi, {"T": float(M), "M": int(M)}) \
                if basis.ratio_class == IRRATIONAL else \
                SamplingPlan(float(M), int(M), IRRATIONAL, phi)
        else:
            plan = sampling_plan(basis, phi, {"M": int(M)})
        EA = aliasing_matrix(basis, phi, plan, extra)
        yield plan.T, plan.M, aliasing_report(EA, threshold)

