"""Newton-Raphson and the global optimal iterative algorithm (GOIA)."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .assembly import ResidualSystem

NEWTON = "newton"
GOIA = "goia"
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class SingularJacobianError(np.linalg.LinAlgError):
    pass


class StagnationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    method: str = NEWTON
    tol_residual_inf: float = 1e-10
    max_iter: int = 100
    fd_step: float = 1e-6
    gamma: float = 0.1
    seed: int = 0
    damping: bool = True
    max_halvings: int = 20
    jacobian: str = "auto"  # "auto" uses the system's own Jacobian when present
    singular: str = "raise"  # or "lstsq": minimum-norm step on singular Jacobians
    golden_iters: int = 30
    keep_trace: bool = True

    def __post_init__(self):
        if self.method not in (NEWTON, GOIA):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must satisfy 0 <= gamma < 1")
        if self.tol_residual_inf <= 0 or self.max_iter < 1 or self.fd_step <= 0:
            raise ValueError("tolerance, max_iter and fd_step must be positive")
        if self.jacobian not in ("auto", "fd"):
            raise ValueError("jacobian must be 'auto' or 'fd'")
        if self.singular not in ("raise", "lstsq"):
            raise ValueError("singular must be 'raise' or 'lstsq'")

    def but(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


@dataclass
class SolveResult:
    xhat: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    wall_time: float
    trace: list[float] = field(default_factory=list)
    message: str = ""


def fd_jacobian(residual, x, step: float = 1e-6, f0=None) -> np.ndarray:
    """Central-difference Jacobian with per-coordinate step ``step * max(1, |x_j|)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        h = step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        cols.append((np.asarray(residual(xp)) - np.asarray(residual(xm))) / (2.0 * h))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def _jacobian(system: ResidualSystem, x, config: SolverConfig):
    if config.jacobian == "auto" and system.jacobian is not None:
        return system.jacobian(x)
    return fd_jacobian(system.residual, x, config.fd_step)


def _inf(v) -> float:
    v = np.asarray(v)
    if v.size == 0:
        return 0.0
    n = float(np.max(np.abs(v)))
    return n if np.isfinite(n) else np.inf


def _lu(J):
    try:
        with warnings.catch_warnings():
            # singularity is judged from the pivots below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(J, check_finite=True)
    except ValueError as exc:
        raise SingularJacobianError(f"non-finite Jacobian: {exc}") from None
    d = np.abs(np.diag(lu))
    if d.size and (d.min() == 0.0 or d.min() <= np.finfo(float).eps * d.max() * 1e-2):
        raise SingularJacobianError(
            f"Jacobian is numerically singular (pivot ratio {d.min() / max(d.max(), 1e-300):.2e})")
    return lu, piv


def _newton_step(J, F, config):
    try:
        return sla.lu_solve(_lu(J), F)
    except SingularJacobianError:
        if config.singular != "lstsq" or not np.all(np.isfinite(J)):
            raise
    return sla.lstsq(J, F, cond=1e-12)[0]


def newton_solve(system: ResidualSystem, x0, config: SolverConfig | None = None) -> SolveResult:
    """Damped Newton-Raphson with dense LU (partial pivoting).

    A step is halved (up to ``max_halvings`` times) while it fails to reduce
    the residual 2-norm.  Singular Jacobians raise
    :class:`SingularJacobianError`; non-convergence is reported in the result.
    """
    config = config or SolverConfig()
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    if x.size != system.dimension:
        raise ValueError(f"initial vector of size {x.size}, system has {system.dimension}")
    F = np.asarray(system.residual(x), dtype=float)
    norm = _inf(F)
    trace = [norm]
    message = ""
    it = 0
    while norm > config.tol_residual_inf and it < config.max_iter:
        J = _jacobian(system, x, config)
        dx = _newton_step(J, F, config)
        it += 1
        if not config.damping:
            x = x - dx
            F = np.asarray(system.residual(x), dtype=float)
            norm = _inf(F)
            trace.append(norm)
            if not np.isfinite(norm):
                message = "residual became non-finite"
                break
            continue
        f2 = float(np.dot(F, F))
        lam = 1.0
        for _ in range(config.max_halvings + 1):
            xn = x - lam * dx
            Fn = np.asarray(system.residual(xn), dtype=float)
            fn2 = float(np.dot(Fn, Fn))
            if np.isfinite(fn2) and fn2 < f2:
                break
            lam *= 0.5
        else:
            message = "line search failed to reduce the residual"
            break
        x, F = xn, Fn
        norm = _inf(F)
        trace.append(norm)
    converged = norm <= config.tol_residual_inf
    if not converged and not message:
        message = "maximum iterations reached"
    return SolveResult(x, norm, it, converged, time.perf_counter() - start,
                       trace if config.keep_trace else [], message)


def goia_solve(system: ResidualSystem, x0, config: SolverConfig | None = None) -> SolveResult:
    """Residual-driven iteration ``x <- x - (1-gamma) (F.v / |v|^2) u`` without inverting the Jacobian.

    The descent vector ``u = a F + (1-a) B^T F`` mixes the residual with the
    gradient of ``|F|^2/2`` (``B`` is the Jacobian), ``v = B u``, and the
    weight ``a`` in ``[0, 1]`` is picked by a golden-section search on the
    post-step residual norm.
    """
    config = config or SolverConfig(method=GOIA)
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    if x.size != system.dimension:
        raise ValueError(f"initial vector of size {x.size}, system has {system.dimension}")
    F = np.asarray(system.residual(x), dtype=float)
    norm = _inf(F)
    trace = [norm]
    it = 0
    message = ""
    scale = 1.0 - config.gamma
    while norm > config.tol_residual_inf and it < config.max_iter:
        B = _jacobian(system, x, config)
        BF = B @ F
        BtF = B.T @ F
        BBtF = B @ BtF

        def step(a):
            u = a * F + (1.0 - a) * BtF
            v = a * BF + (1.0 - a) * BBtF
            vv = float(np.dot(v, v))
            if vv == 0.0:
                return None, np.inf
            xn = x - scale * (float(np.dot(F, v)) / vv) * u
            Fn = np.asarray(system.residual(xn), dtype=float)
            val = float(np.dot(Fn, Fn))
            return (xn, Fn), val if np.isfinite(val) else np.inf

        lo, hi = 0.0, 1.0
        c = hi - _GOLDEN * (hi - lo)
        d = lo + _GOLDEN * (hi - lo)
        sc, fc = step(c)
        sd, fd = step(d)
        for _ in range(config.golden_iters):
            if fc <= fd:
                hi, d, sd, fd = d, c, sc, fc
                c = hi - _GOLDEN * (hi - lo)
                sc, fc = step(c)
            else:
                lo, c, sc, fc = c, d, sd, fd
                d = lo + _GOLDEN * (hi - lo)
                sd, fd = step(d)
        best, fbest = (sc, fc) if fc <= fd else (sd, fd)
        for a in (0.0, 1.0):
            s, f = step(a)
            if f < fbest:
                best, fbest = s, f
        it += 1
        if best is None:
            raise StagnationError("GOIA stagnated: combination vector vanished")
        x, F = best
        norm = _inf(F)
        trace.append(norm)
        if not np.isfinite(norm):
            message = "residual became non-finite"
            break
    converged = norm <= config.tol_residual_inf
    if not converged and not message:
        message = "maximum iterations reached"
    return SolveResult(x, norm, it, converged, time.perf_counter() - start,
                       trace if config.keep_trace else [], message)


def solve(system: ResidualSystem, x0, config: SolverConfig | None = None) -> SolveResult:
    config = config or SolverConfig()
    return (goia_solve if config.method == GOIA else newton_solve)(system, x0, config)
