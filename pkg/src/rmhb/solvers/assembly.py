"""Residual assembly for the collocation-reconstructed balance equations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..basis import Frequency, TruncationBasis, combined_frequency
from ..collocation import (
    CollocationMatrices,
    SamplingPlan,
    build_matrices,
    pseudo_inverse_transform,
)
from ..models import ForcingSpec, StructuralModel, SystemModel
from ..operators import grad_block, grad_frequency_derivative, torus_transforms

RMHB_FIRST = "RMHB-first-order"
RMHB_SECOND = "RMHB-second-order"
HDHB = "HDHB"
MHB_ORACLE = "MHB-oracle-p1-cubic"
MHB_TORUS = "MHB-torus-galerkin"

FINITE_DIFFERENCE = "finite-difference"
USER_SUPPLIED = "user-supplied"


class AssemblyError(ValueError):
    pass


@dataclass
class ResidualSystem:
    """A square nonlinear algebraic system ``residual(z) = 0``.

    ``z`` holds the coefficient vector, followed by any free base
    frequencies (in the basis' own angular units).
    """

    dimension: int
    residual: Callable[[np.ndarray], np.ndarray]
    provenance: str
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    basis: TruncationBasis | None = None
    matrices: CollocationMatrices | None = None
    N: int = 1
    free_frequencies: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def jacobian_mode(self) -> str:
        return USER_SUPPLIED if self.jacobian is not None else FINITE_DIFFERENCE

    @property
    def n_coeffs(self) -> int:
        return self.dimension - len(self.free_frequencies)

    def split(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        k = self.n_coeffs
        return z[:k], z[k:]

    def solved_basis(self, z) -> TruncationBasis:
        """Basis carrying the frequencies encoded in ``z``."""
        if self.basis is None:
            raise AssemblyError("system carries no basis")
        if not self.free_frequencies:
            return self.basis
        _, w = self.split(z)
        freqs = list(self.basis.frequencies)
        for k, val in zip(self.free_frequencies, w):
            freqs[k] = Frequency.irrational(float(val))
        return self.basis.with_frequencies(freqs)

    def initial(self, xhat) -> np.ndarray:
        """Append the nominal values of free frequencies to a coefficient guess."""
        xhat = np.asarray(xhat, dtype=float)
        if xhat.size == self.dimension:
            return xhat.copy()
        if xhat.size != self.n_coeffs:
            raise AssemblyError(f"initial vector of size {xhat.size}, expected {self.n_coeffs}")
        w = [self.basis.frequencies[k].value for k in self.free_frequencies]
        return np.concatenate([xhat, w])


def _forcing_placement(forcing: ForcingSpec, basis: TruncationBasis, N: int):
    """Exact coefficient vector of the forcing if every term is a basis harmonic, else None."""
    D = basis.per_dof_dim
    out = np.zeros(N * D)
    for term in forcing.terms:
        hit = None
        for k, idx in enumerate(basis.harmonics):
            w = combined_frequency(idx, basis.frequencies)
            if math.isclose(w, term.frequency.value, rel_tol=1e-13):
                hit = k
                break
        if hit is None:
            return None
        j = term.dof * D + 1 + 2 * hit
        out[j] += term.amplitude * math.cos(term.phase)
        out[j + 1] -= term.amplitude * math.sin(term.phase)
    return out


def _check_free(free, model_forcing: ForcingSpec, basis: TruncationBasis, N: int, phase_dof: int):
    free = tuple(sorted(set(int(k) for k in free)))
    for k in free:
        if not 0 <= k < basis.t:
            raise AssemblyError(f"free frequency index {k} out of range")
        w = basis.frequencies[k].value
        if any(math.isclose(w, f.value, rel_tol=1e-13) for f in model_forcing.frequencies):
            raise AssemblyError(f"base frequency {k} is imposed by the forcing and cannot be free")
    if free and not 0 <= phase_dof < N:
        raise AssemblyError(f"phase_dof {phase_dof} out of range")
    return free


def _phase_rows(basis: TruncationBasis, free, phase_dof: int, n_coeffs: int) -> list[int]:
    """Coefficient positions pinned to zero: sine of each free unit harmonic on ``phase_dof``."""
    rows = []
    for k in free:
        unit = tuple(1 if i == k else 0 for i in range(basis.t))
        j, _ = basis.position(unit)
        rows.append(phase_dof * basis.per_dof_dim + j + 1)
    return rows


class _FreeFrequencyGrad:
    """Derivative operator as a function of the (possibly free) base frequencies."""

    def __init__(self, basis: TruncationBasis, free):
        self.basis = basis
        self.free = free
        self.G0 = grad_block(basis)
        self.parts = {k: grad_frequency_derivative(basis, k) for k in free}

    def at(self, w) -> np.ndarray:
        if not self.free:
            return self.G0
        G = self.G0.copy()
        for k, val in zip(self.free, w):
            G += (val - self.basis.frequencies[k].value) * self.parts[k]
        return G


def assemble_rmhb_first_order(model: SystemModel, basis: TruncationBasis, plan: SamplingPlan,
                              N: int | None = None, *, forcing_mode: str = "sampled",
                              free_frequencies: Sequence[int] = (), phase_dof: int = 0,
                              analytic_jacobian: bool = True,
                              matrices: CollocationMatrices | None = None) -> ResidualSystem:
    """Residual ``(E*E) grad x - E* f(E x, t)`` for a first-order model.

    ``forcing_mode='sampled'`` transforms the forcing through ``E*`` like any
    other term; ``'exact'`` places it directly on its basis harmonic when it
    is one (falling back to sampling otherwise).  Free frequencies become extra
    unknowns, each balanced by pinning a sine coefficient on ``phase_dof``.
    """
    N = model.N if N is None else N
    if N != model.N:
        raise AssemblyError(f"model has N={model.N}, assembly asked for N={N}")
    if forcing_mode not in ("sampled", "exact"):
        raise AssemblyError(f"unknown forcing_mode {forcing_mode!r}")
    mats = matrices or build_matrices(basis, plan, N)
    if mats.basis.indices != basis.indices or mats.plan != plan:
        raise AssemblyError("collocation matrices were built for another basis or plan")
    free = _check_free(free_frequencies, model.forcing, basis, N, phase_dof)
    E, Es = mats.E_block, mats.E_star_block
    A = Es @ E
    D = basis.per_dof_dim
    t = plan.nodes
    grads = _FreeFrequencyGrad(basis, free)

    placed = _forcing_placement(model.forcing, basis, N) if forcing_mode == "exact" else None
    if placed is not None or not model.forcing.terms:
        F_const = placed if placed is not None else np.zeros(N * D)
        def f_nodes(X):
            return model.rhs(X, t)
    else:
        F_const = np.zeros(N * D)
        H = model.forcing.evaluate(t, N)
        def f_nodes(X):
            return model.rhs(X, t) + H
    n_c = N * D
    pins = _phase_rows(basis, free, phase_dof, n_c)

    def residual(z):
        z = np.asarray(z, dtype=float)
        Xh = z[:n_c].reshape(N, D)
        G = grads.at(z[n_c:])
        X = Xh @ E.T
        lin = (Xh @ G.T) @ A.T
        r = (lin - f_nodes(X) @ Es.T).reshape(-1) - F_const
        if free:
            r = np.concatenate([r, z[pins]])
        return r

    def jacobian(z):
        z = np.asarray(z, dtype=float)
        Xh = z[:n_c].reshape(N, D)
        G = grads.at(z[n_c:])
        X = Xh @ E.T
        dF = model.eval_jac(X, t)
        dim = n_c + len(free)
        J = np.zeros((dim, dim))
        AG = A @ G
        for i in range(N):
            for j in range(N):
                blk = -(Es * dF[i, j][None, :]) @ E
                if i == j:
                    blk += AG
                J[i * D:(i + 1) * D, j * D:(j + 1) * D] = blk
        for c, k in enumerate(free):
            J[:n_c, n_c + c] = ((Xh @ grads.parts[k].T) @ A.T).reshape(-1)
            J[n_c + c, pins[c]] = 1.0
        return J

    return ResidualSystem(
        dimension=n_c + len(free), residual=residual, provenance=RMHB_FIRST,
        jacobian=jacobian if analytic_jacobian else None, basis=basis, matrices=mats, N=N,
        free_frequencies=free, meta={"forcing_mode": "exact" if placed is not None else "sampled",
                                     "phase_dof": phase_dof})


def assemble_rmhb_second_order(model: StructuralModel, basis: TruncationBasis, plan: SamplingPlan,
                               *, forcing_mode: str = "sampled",
                               free_frequencies: Sequence[int] = (), phase_dof: int = 0,
                               analytic_jacobian: bool = True,
                               matrices: CollocationMatrices | None = None) -> ResidualSystem:
    """Residual of ``M q'' + C q' + K q + P q^3 = forcing`` in reconstructed form.

    Each term is ``(matrix (x) I)`` acting on ``E*E grad^k q`` (or on
    ``E* q^3`` for the cubic term), with the forcing handled as in
    :func:`assemble_rmhb_first_order`.
    """
    n = model.dof
    mats = matrices or build_matrices(basis, plan, n)
    if mats.basis.indices != basis.indices or mats.plan != plan:
        raise AssemblyError("collocation matrices were built for another basis or plan")
    free = _check_free(free_frequencies, model.forcing, basis, n, phase_dof)
    E, Es = mats.E_block, mats.E_star_block
    A = Es @ E
    D = basis.per_dof_dim
    t = plan.nodes
    grads = _FreeFrequencyGrad(basis, free)
    Mm, Cm, Km, Pm = model.M_mat, model.C_mat, model.K_mat, model.P_mat

    placed = _forcing_placement(model.forcing, basis, n) if forcing_mode == "exact" else None
    if placed is not None:
        F_hat = placed
    elif model.forcing.terms:
        F_hat = (model.forcing.evaluate(t, n) @ Es.T).reshape(-1)
    else:
        F_hat = np.zeros(n * D)
    n_c = n * D
    pins = _phase_rows(basis, free, phase_dof, n_c)

    def residual(z):
        z = np.asarray(z, dtype=float)
        Q = z[:n_c].reshape(n, D)
        G = grads.at(z[n_c:])
        Lin = Mm @ (Q @ (A @ G @ G).T) + Cm @ (Q @ (A @ G).T) + Km @ (Q @ A.T)
        q = Q @ E.T
        r = (Lin + Pm @ ((q ** 3) @ Es.T)).reshape(-1) - F_hat
        if free:
            r = np.concatenate([r, z[pins]])
        return r

    def jacobian(z):
        z = np.asarray(z, dtype=float)
        Q = z[:n_c].reshape(n, D)
        G = grads.at(z[n_c:])
        q = Q @ E.T
        AG2, AG = A @ G @ G, A @ G
        cubic = [(Es * (3 * q[j] ** 2)[None, :]) @ E for j in range(n)]
        dim = n_c + len(free)
        J = np.zeros((dim, dim))
        for i in range(n):
            for j in range(n):
                blk = Mm[i, j] * AG2 + Cm[i, j] * AG + Km[i, j] * A
                if Pm[i, j] != 0.0:
                    blk = blk + Pm[i, j] * cubic[j]
                J[i * D:(i + 1) * D, j * D:(j + 1) * D] = blk
        for c, k in enumerate(free):
            Gk = grads.parts[k]
            dG2 = Gk @ G + G @ Gk
            col = Mm @ (Q @ (A @ dG2).T) + Cm @ (Q @ (A @ Gk).T)
            J[:n_c, n_c + c] = col.reshape(-1)
            J[n_c + c, pins[c]] = 1.0
        return J

    return ResidualSystem(
        dimension=n_c + len(free), residual=residual, provenance=RMHB_SECOND,
        jacobian=jacobian if analytic_jacobian else None, basis=basis, matrices=mats, N=n,
        free_frequencies=free, meta={"phase_dof": phase_dof})


def assemble_hdhb(model: SystemModel, basis: TruncationBasis, plan: SamplingPlan,
                  *, analytic_jacobian: bool = True,
                  matrices: CollocationMatrices | None = None) -> ResidualSystem:
    """Time-domain system in node values: ``E grad pinv(E) x~ - f(x~, t)``.

    The unknown vector holds the ``M`` node values of each DOF, DOF-major.
    """
    N = model.N
    mats = matrices or build_matrices(basis, plan, N)
    E = mats.E_block
    P = pseudo_inverse_transform(E)
    H = E @ grad_block(basis) @ P
    t = plan.nodes
    M = plan.M

    def residual(z):
        X = np.asarray(z, dtype=float).reshape(N, M)
        return (X @ H.T - model.eval_f(X, t)).reshape(-1)

    def jacobian(z):
        X = np.asarray(z, dtype=float).reshape(N, M)
        dF = model.eval_jac(X, t)
        J = np.zeros((N * M, N * M))
        for i in range(N):
            for j in range(N):
                blk = -np.diag(dF[i, j])
                if i == j:
                    blk = blk + H
                J[i * M:(i + 1) * M, j * M:(j + 1) * M] = blk
        return J

    return ResidualSystem(
        dimension=N * M, residual=residual, provenance=HDHB,
        jacobian=jacobian if analytic_jacobian else None, basis=basis, matrices=mats, N=N,
        meta={"pinv": P})


def hdhb_coefficients(system: ResidualSystem, z) -> np.ndarray:
    """Fourier coefficients recovered from HDHB node values via the pseudo-inverse."""
    P = system.meta["pinv"]
    X = np.asarray(z, dtype=float).reshape(system.N, -1)
    return (X @ P.T).reshape(-1)


def hdhb_initial(system: ResidualSystem, xhat) -> np.ndarray:
    """Node values ``E x_hat`` used to start an HDHB solve from coefficients."""
    E = system.matrices.E_block
    return (np.asarray(xhat, dtype=float).reshape(system.N, -1) @ E.T).reshape(-1)


def assemble_mhb_torus(model: SystemModel, basis: TruncationBasis, phi: int | None = None,
                       *, K: int | None = None) -> ResidualSystem:
    """Exact Galerkin balance ``grad x - <f(x)>`` evaluated on the torus of base angles.

    An independent route to the classical MHB equations that never samples
    physical time, so it carries no aliasing for any frequency ratio.  The
    state-dependent part of the model must not depend on ``t`` explicitly and
    every forcing term must sit on a unit base harmonic.
    """
    phi = model.phi if phi is None else phi
    K = (phi + 1) * basis.order + 1 if K is None else int(K)
    if K <= (phi + 1) * basis.order:
        raise AssemblyError(f"torus grid K={K} aliases degree-{phi} products at order {basis.order}")
    N = model.N
    D = basis.per_dof_dim
    S, A, theta = torus_transforms(basis, K)
    H = np.zeros((N, theta.shape[0]))
    for term in model.forcing.terms:
        hit = None
        for i, f in enumerate(basis.frequencies):
            if math.isclose(f.value, term.frequency.value, rel_tol=1e-13):
                hit = i
        if hit is None:
            raise AssemblyError(f"forcing at {term.frequency.value} is not a base frequency")
        H[term.dof] += term.amplitude * np.cos(theta[:, hit] + term.phase)
    G = grad_block(basis)
    t0 = np.zeros(theta.shape[0])

    def residual(z):
        Xh = np.asarray(z, dtype=float).reshape(N, D)
        X = Xh @ S.T
        return (Xh @ G.T - (model.rhs(X, t0) + H) @ A.T).reshape(-1)

    def jacobian(z):
        Xh = np.asarray(z, dtype=float).reshape(N, D)
        dF = model.eval_jac(Xh @ S.T, t0)
        J = np.zeros((N * D, N * D))
        for i in range(N):
            for j in range(N):
                blk = -(A * dF[i, j][None, :]) @ S
                if i == j:
                    blk += G
                J[i * D:(i + 1) * D, j * D:(j + 1) * D] = blk
        return J

    return ResidualSystem(dimension=N * D, residual=residual, provenance=MHB_TORUS,
                          jacobian=jacobian, basis=basis, N=N, meta={"K": K})
