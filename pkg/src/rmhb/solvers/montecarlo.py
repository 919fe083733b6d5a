"""Random-restart census of the roots of a balance system."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .assembly import ResidualSystem
from .nonlinear import SolverConfig, solve

MATCH_TOL = 1e-4
NON_PHYSICAL = -1
NOT_CONVERGED = -2


@dataclass
class MonteCarloResult:
    counts: list[int]
    non_physical: int
    non_converged: int
    n_samples: int
    labels: np.ndarray     # branch index per sample, or NON_PHYSICAL / NOT_CONVERGED
    distances: np.ndarray  # normalized distance to the nearest branch (nan if not converged)
    branches: list[np.ndarray] = field(default_factory=list)

    @property
    def converged(self) -> int:
        return self.n_samples - self.non_converged

    def percentages(self) -> dict:
        """Shares of the converged runs: one entry per branch plus ``non_physical``."""
        n = self.converged
        scale = 100.0 / n if n else 0.0
        out = {f"branch_{k}": c * scale for k, c in enumerate(self.counts)}
        out["non_physical"] = self.non_physical * scale
        return out


def sample_initial(seed: int, index: int, dim: int, init_range: float) -> np.ndarray:
    """Initial vector number ``index``: uniform in ``[-init_range, init_range]^dim``.

    Each draw has its own stream keyed by ``(seed, index)``, so a sample never
    depends on how many others were drawn before it or on which worker ran it.
    """
    rng = np.random.default_rng([int(seed), int(index)])
    return rng.uniform(-init_range, init_range, dim)


def branch_distance(x, branch) -> float:
    """Coefficient inf-norm distance, normalized by the branch amplitude."""
    b = np.asarray(branch, dtype=float)
    return float(np.max(np.abs(np.asarray(x) - b)) / max(np.max(np.abs(b)), 1e-300))


def classify(x, branches, match_tol: float = MATCH_TOL) -> tuple[int, float]:
    d = [branch_distance(x, b) for b in branches]
    k = int(np.argmin(d))
    return (k if d[k] <= match_tol else NON_PHYSICAL), d[k]


def _safe_solve(system, x0, config):
    try:
        r = solve(system, x0, config)
    except (np.linalg.LinAlgError, ArithmeticError, RuntimeError):
        return None
    return r if r.converged else None


def find_branches(system: ResidualSystem, n_points: int = 256, init_range: float = 5.0,
                  config: SolverConfig | None = None, dedup_tol: float = 1e-6,
                  sort_harmonic: int | None = None) -> list[np.ndarray]:
    """Distinct roots reached from a deterministic low-discrepancy set of initials.

    Points come from an unscrambled Halton sequence over the box
    ``[-init_range, init_range]^dim``.  Roots are sorted by coefficient norm
    (or by the norm of the first ``sort_harmonic`` entries when given).
    """
    config = config or SolverConfig(singular="lstsq")
    pts = qmc.Halton(d=system.dimension, scramble=False).random(n_points + 1)[1:]
    pts = (2.0 * pts - 1.0) * init_range
    roots: list[np.ndarray] = []
    for x0 in pts:
        r = _safe_solve(system, x0, config)
        if r is None:
            continue
        if all(branch_distance(r.xhat, q) > dedup_tol for q in roots):
            roots.append(r.xhat)
    key = (lambda v: np.linalg.norm(v)) if sort_harmonic is None else \
        (lambda v: np.linalg.norm(v[:sort_harmonic]))
    return sorted(roots, key=key)


def monte_carlo_branches(system: ResidualSystem, n_samples: int, init_range: float,
                         config: SolverConfig | None, reference_branches,
                         match_tol: float = MATCH_TOL, seed: int = 0,
                         workers: int = 1, prepare=None) -> MonteCarloResult:
    """Solve from ``n_samples`` random initials and sort the roots onto known branches.

    A converged root within ``match_tol`` (see :func:`branch_distance`) of a
    reference branch counts towards it; any other converged root is
    non-physical.  Runs that fail to converge are counted separately and left
    out of the percentages.  ``prepare`` optionally maps each raw initial
    vector before solving.
    """
    branches = [np.asarray(b, dtype=float) for b in reference_branches]
    if not branches:
        raise ValueError("reference_branches must be nonempty")
    config = config or SolverConfig(singular="lstsq")

    def one(i):
        x0 = sample_initial(seed, i, system.dimension, init_range)
        if prepare is not None:
            x0 = prepare(x0)
        r = _safe_solve(system, x0, config)
        if r is None:
            return NOT_CONVERGED, np.nan
        return classify(r.xhat, branches, match_tol)

    if workers > 1 and n_samples > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n_samples)))
    else:
        results = [one(i) for i in range(n_samples)]
    labels = np.array([r[0] for r in results], dtype=int)
    dist = np.array([r[1] for r in results], dtype=float)
    counts = [int(np.sum(labels == k)) for k in range(len(branches))]
    return MonteCarloResult(counts, int(np.sum(labels == NON_PHYSICAL)),
                            int(np.sum(labels == NOT_CONVERGED)), int(n_samples),
                            labels, dist, branches)
