"""Study protocols for the worked examples, shared by the CLI and the acceptance suite.

Every function returns plain records (dicts of numbers) so the callers can
tabulate, serialize or assert on them without re-running anything.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .basis import Frequency, build_basis
from .collocation import aliasing_sweep, build_matrices, identity_deviation, aliasing_matrix, sampling_plan
from .models import (
    airfoil_store,
    duffing_mc_structural,
    duffing_two_input,
    recast_to_first_order,
    vdp_forced,
)
from .operators import amplitude, embed_coefficients, grad_block, series_peak, time_matrix
from .reference import amplitude_spectrum, default_dt, rk4_integrate, spectral_peaks, steady_window
from .solvers.assembly import (
    assemble_hdhb,
    assemble_mhb_torus,
    assemble_rmhb_first_order,
    assemble_rmhb_second_order,
    hdhb_coefficients,
    hdhb_initial,
)
from .solvers.montecarlo import find_branches, monte_carlo_branches
from .solvers.nonlinear import GOIA, SolverConfig, newton_solve, solve

AIRFOIL_X_BETA = 0.2


def _unit_guess(basis, N, values: dict, velocity: bool = True) -> np.ndarray:
    """Cosine coefficients on DOF 0 from ``{index: value}``; velocities from the derivative."""
    D = basis.per_dof_dim
    x = np.zeros(N * D)
    for idx, v in values.items():
        j, _ = basis.position(idx)
        x[j] = v
    if velocity and N == 2:
        x[D:] = grad_block(basis) @ x[:D]
    return x


CELL_ERRORS = (np.linalg.LinAlgError, ArithmeticError, RuntimeError, ValueError)


def _cell(fn, label: dict) -> dict:
    """Run one grid cell; a failure becomes a record with ``failed`` set instead of an exception."""
    try:
        row = fn()
    except CELL_ERRORS as exc:
        return {**label, "failed": f"{type(exc).__name__}: {exc}"}
    return {**label, **row}


def _timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------- Duffing census

def duffing_mc_system(M: int, p: int = 1):
    model = duffing_mc_structural()
    basis = build_basis(model.frequencies, p)
    plan = sampling_plan(basis, model.phi, {"M": M})
    return assemble_rmhb_second_order(model, basis, plan), plan


def duffing_mc_reference_branches(p: int = 1, n_points: int = 256, init_range: float = 5.0,
                                  config: SolverConfig | None = None):
    """Roots at three times the critical node count, pooled from a Halton set of initials."""
    _, plan = duffing_mc_system(1, p)
    system, _ = duffing_mc_system(3 * plan.critical_M, p)
    return find_branches(system, n_points, init_range, config)


def duffing_mc_census(Ms=(20, 41, 60), n_samples: int = 500, init_range: float = 5.0,
                      seed: int = 0, config: SolverConfig | None = None, workers: int = 1,
                      branches=None):
    config = config or SolverConfig(singular="lstsq")
    branches = duffing_mc_reference_branches(config=config) if branches is None else branches
    rows = []
    for M in Ms:
        system, plan = duffing_mc_system(M)
        res, dt = _timed(monte_carlo_branches, system, n_samples, init_range, config, branches,
                         seed=seed + M, workers=workers)
        row = {"M": M, "de_aliased": plan.de_aliased, "n_samples": n_samples,
               "non_converged": res.non_converged, "counts": res.counts,
               "non_physical": res.non_physical, "wall_time": dt, "result": res}
        row.update(res.percentages())
        rows.append(row)
    return {"branches": branches, "rows": rows}


def duffing_mc_aliasing(Ms=range(5, 121), p: int = 1):
    model = duffing_mc_structural()
    basis = build_basis(model.frequencies, p)
    return aliasing_sweep(basis, model.phi, list(Ms))


def duffing_mc_identity(M: int = 41, p: int = 1):
    model = duffing_mc_structural()
    basis = build_basis(model.frequencies, p)
    plan = sampling_plan(basis, model.phi, {"M": M})
    mats = build_matrices(basis, plan, 1)
    EA = aliasing_matrix(basis, model.phi, plan)
    return {"M": M, "T": plan.T, "critical_M": plan.critical_M,
            "identity_deviation": identity_deviation(mats),
            "aliasing_max": float(np.abs(EA).max()) if EA.size else 0.0}


# ---------------------------------------------------------------- Van der Pol

VDP_GUESS = {(1, 0): 0.3, (0, 1): 1.9}


def vdp_mhb_solution(p: int = 1, model=None):
    """Aliasing-free balance solution on the torus of base angles (the large-T limit)."""
    model = model or vdp_forced()
    basis = build_basis(model.frequencies, p)
    system = assemble_mhb_torus(model, basis)
    res = newton_solve(system, _unit_guess(basis, 2, VDP_GUESS), SolverConfig(damping=False))
    if not res.converged:
        raise RuntimeError(f"torus balance solve failed: {res.message}")
    return res.xhat, basis


def vdp_rk4_peak(t_end: float = 4000.0, discard: float = 0.5, model=None) -> float:
    model = model or vdp_forced()
    dt = default_dt(model.frequencies)
    traj = rk4_integrate(model, [2.0, 0.0], dt, int(round(t_end / dt)), store_every=2)
    return steady_window(traj, discard).peak(0)


def vdp_rmhb(TM: float, p: int = 1, config: SolverConfig | None = None, model=None,
             forcing_mode: str = "sampled"):
    model = model or vdp_forced()
    basis = build_basis(model.frequencies, p)
    plan = sampling_plan(basis, model.phi, {"T": float(TM), "M": int(TM)})
    system = assemble_rmhb_first_order(model, basis, plan, forcing_mode=forcing_mode)
    config = config or SolverConfig(damping=False)
    res = solve(system, _unit_guess(basis, 2, VDP_GUESS), config)
    return res, basis, system


def vdp_sweep(TMs=(100, 500, 5000), p: int = 1, config: SolverConfig | None = None,
              rk4_peak: float | None = None):
    """RMHB at ``T = M`` from the standard guess; errors against the torus balance limit.

    ``aliasing_error`` compares peak amplitudes with the aliasing-free
    solution of the same order; ``rk4_error`` (when a reference peak is
    given) compares with time integration.
    """
    ref, basis = vdp_mhb_solution(p)
    ref_peak = series_peak(ref, basis, 0)
    rows = []
    for TM in TMs:
        res, basis, _ = vdp_rmhb(TM, p, config)
        row = {"T": TM, "M": TM, "converged": res.converged, "iterations": res.iterations,
               "wall_time": res.wall_time, "message": res.message}
        if res.converged:
            peak = series_peak(res.xhat, basis, 0)
            row.update(amp_10=amplitude(res.xhat, basis, 0, (1, 0)),
                       amp_01=amplitude(res.xhat, basis, 0, (0, 1)),
                       aliasing_error=abs(peak - ref_peak))
            if rk4_peak is not None:
                row["rk4_error"] = abs(peak - rk4_peak)
        rows.append(row)
    return {"limit_peak": ref_peak, "limit_amp_10": amplitude(ref, basis, 0, (1, 0)),
            "limit_amp_01": amplitude(ref, basis, 0, (0, 1)), "rows": rows}


def vdp_hdhb_contrast(TMs=(100, 1000), p: int = 1, config: SolverConfig | None = None):
    """Wall time and peak error of RMHB and HDHB with the same harmonics and nodes.

    HDHB has no exact root once ``M`` exceeds the number of coefficients, so
    its error is taken at wherever the damped solver stops.
    """
    model = vdp_forced()
    ref, basis = vdp_mhb_solution(p, model)
    ref_peak = series_peak(ref, basis, 0)
    config = config or SolverConfig()
    x0 = _unit_guess(basis, 2, VDP_GUESS)

    def one(TM):
        plan = sampling_plan(basis, model.phi, {"T": float(TM), "M": int(TM)})
        t0 = time.perf_counter()
        rsys = assemble_rmhb_first_order(model, basis, plan)
        rm = newton_solve(rsys, x0, config.but(damping=False))
        t_rm = time.perf_counter() - t0
        t0 = time.perf_counter()
        hsys = assemble_hdhb(model, basis, plan)
        hd = newton_solve(hsys, hdhb_initial(hsys, x0), config)
        t_hd = time.perf_counter() - t0
        xh = hdhb_coefficients(hsys, hd.xhat)
        return {"rmhb_time": t_rm, "hdhb_time": t_hd,
                "rmhb_converged": rm.converged, "hdhb_converged": hd.converged,
                "rmhb_error": abs(series_peak(rm.xhat, basis, 0) - ref_peak),
                "hdhb_error": abs(series_peak(xh, basis, 0) - ref_peak),
                "hdhb_residual": hd.residual_norm}

    return [_cell(lambda: one(TM), {"T": TM, "M": TM}) for TM in TMs]


def vdp_goia_contrast(TM: float = 2e4, p: int = 3, goia_iters: int = 2000):
    """Undamped Newton against GOIA from the standard guess on a higher-order plan."""
    res_n, basis, system = vdp_rmhb(TM, p, SolverConfig(damping=False, max_iter=100))
    x0 = _unit_guess(basis, 2, VDP_GUESS)
    res_g = solve(system, x0, SolverConfig(method=GOIA, max_iter=goia_iters))
    return {"T": TM, "M": TM, "p": p,
            "newton": {"converged": res_n.converged, "iterations": res_n.iterations,
                       "residual": res_n.residual_norm, "trace": res_n.trace,
                       "message": res_n.message},
            "goia": {"converged": res_g.converged, "iterations": res_g.iterations,
                     "residual": res_g.residual_norm, "trace": res_g.trace,
                     "message": res_g.message}}


# ---------------------------------------------------------------- two-input Duffing

DUFFING2_GUESS = {(1, 0): 0.2, (0, 1): 0.8}


def duffing2_rk4_peak(periods: int = 6, model=None) -> float:
    """Peak of the last forcing period after ``periods - 1`` periods of transient."""
    model = model or duffing_two_input()
    T = 400.0 * math.pi
    steps_per_period = int(math.ceil(T / default_dt(model.frequencies)))
    dt = T / steps_per_period
    traj = rk4_integrate(model, [0.0, 0.0], dt, periods * steps_per_period)
    return float(np.abs(traj.states[-steps_per_period - 1:, 0]).max())


def duffing2_rmhb(p: int, model=None, continuation: bool = True, M: int | None = None):
    """RMHB of order ``p``; with ``continuation`` each order is seeded from the one below."""
    model = model or duffing_two_input()
    orders = range(1, p + 1) if continuation else [p]
    x = None
    prev = None
    total = 0.0
    for q in orders:
        basis = build_basis(model.frequencies, q)
        plan = sampling_plan(basis, model.phi, {"M": M} if (M and q == p) else None)
        system = assemble_rmhb_first_order(model, basis, plan)
        x0 = _unit_guess(basis, 2, DUFFING2_GUESS) if x is None else embed_coefficients(x, prev, basis)
        res = newton_solve(system, x0)
        total += res.wall_time
        if not res.converged:
            return res, basis, plan, total
        x, prev = res.xhat, basis
    return res, basis, plan, total


def duffing2_rhb(order: int = 200, M: int = 801, model=None):
    """Single-base-frequency reconstruction at the common frequency ``GCD = 1/200``."""
    model = model or duffing_two_input()
    basis = build_basis((Frequency.exact(1, 200),), order)
    plan = sampling_plan(basis, model.phi, {"M": M})
    system = assemble_rmhb_first_order(model, basis, plan)
    x0 = _unit_guess(basis, 2, {(200,): DUFFING2_GUESS[(1, 0)], (23,): DUFFING2_GUESS[(0, 1)]})
    res = newton_solve(system, x0)
    return res, basis, plan


def duffing2_study(orders=(1, 5), rhb_orders=((200, 801),), ref_peak: float | None = None):
    if not orders and not rhb_orders:
        return {"reference_peak": ref_peak, "rows": []}
    ref_peak = duffing2_rk4_peak() if ref_peak is None else ref_peak
    T = 400.0 * math.pi

    def rmhb(p):
        res, basis, plan, wall = duffing2_rmhb(p)
        return {"M": plan.M, "converged": res.converged,
                "amplitude_error": abs(series_peak(res.xhat, basis, 0, T=T) - ref_peak),
                "wall_time": wall}

    def rhb(order, M):
        res, basis, plan = duffing2_rhb(order, M)
        return {"M": plan.M, "converged": res.converged,
                "amplitude_error": abs(series_peak(res.xhat, basis, 0, T=T) - ref_peak),
                "wall_time": res.wall_time}

    rows = [_cell(lambda: rmhb(p), {"method": f"RMHB{p}"}) for p in orders]
    rows += [_cell(lambda: rhb(order, M), {"method": f"RHB{order}", "M": M}) for order, M in rhb_orders]
    return {"reference_peak": ref_peak, "rows": rows}


# ---------------------------------------------------------------- airfoil with store

@dataclass
class AirfoilReference:
    times: np.ndarray
    states: np.ndarray  # (K, 3) displacements over the steady window
    peaks: np.ndarray
    frequencies: tuple[float, float]  # refined base frequencies, cycles per unit time


def airfoil_reference(x_beta: float = AIRFOIL_X_BETA, t_end: float = 30000.0,
                      discard: float = 1.0 / 3.0, model=None) -> AirfoilReference:
    """RK4 trajectory from a small disturbance, its steady peaks and refined base frequencies.

    Each nominal base frequency is refined to the strongest plunge spectral
    line within 5% of it.
    """
    model = model or airfoil_store(x_beta)
    fo = recast_to_first_order(model)
    dt = default_dt(model.frequencies)
    traj = rk4_integrate(fo, [0.01, 0.01, 0.01, 0.0, 0.0, 0.0], dt, int(round(t_end / dt)),
                         store_every=2)
    win = steady_window(traj, discard)
    freqs, mags = amplitude_spectrum(win, 0)
    refined = []
    for f in model.frequencies:
        nominal = f.value / (2 * math.pi)
        band = np.abs(freqs - nominal) <= 0.05 * nominal
        refined.append(float(freqs[band][np.argmax(mags[band])]))
    states = win.states[:, :3]
    return AirfoilReference(win.times, states, np.abs(states).max(axis=0), tuple(refined))


def airfoil_initial(ref: AirfoilReference, basis, stride: int = 4) -> np.ndarray:
    """Least-squares projection of the reference onto the basis at the refined frequencies."""
    fb = basis.with_frequencies([Frequency.irrational(2 * math.pi * f) for f in ref.frequencies])
    t = ref.times[::stride] - ref.times[0]
    W = time_matrix(fb, t)
    coef = np.linalg.lstsq(W, ref.states[::stride], rcond=None)[0]
    return np.concatenate([coef.T.reshape(-1), [f.value for f in fb.frequencies]])


def airfoil_rmhb(p: int, ref: AirfoilReference, x_beta: float = AIRFOIL_X_BETA,
                 config: SolverConfig | None = None):
    """Second-order RMHB with both base frequencies free and phase pinned on plunge."""
    model = airfoil_store(x_beta)
    basis = build_basis(model.frequencies, p)
    plan = sampling_plan(basis, model.phi)
    system = assemble_rmhb_second_order(model, basis, plan, free_frequencies=(0, 1), phase_dof=0)
    config = config or SolverConfig(max_iter=300, singular="lstsq")
    res, wall = _timed(newton_solve, system, airfoil_initial(ref, basis), config)
    xh, w = system.split(res.xhat)
    solved = system.solved_basis(res.xhat)
    peaks = np.array([series_peak(xh, solved, d) for d in range(3)])
    return {"p": p, "T": plan.T, "M": plan.M, "converged": res.converged,
            "iterations": res.iterations, "wall_time": wall,
            "frequencies_cycles": (w / (2 * math.pi)).tolist(),
            "peaks": peaks.tolist(), "errors": np.abs(peaks - ref.peaks).tolist(),
            "amp_h_10": amplitude(xh, basis, 0, (1, 0)), "amp_h_01": amplitude(xh, basis, 0, (0, 1))}


def airfoil_study(orders=(1, 3), x_beta: float = AIRFOIL_X_BETA, ref: AirfoilReference | None = None):
    ref = airfoil_reference(x_beta) if ref is None else ref
    return {"reference_peaks": ref.peaks.tolist(), "reference_frequencies": list(ref.frequencies),
            "rows": [_cell(lambda: airfoil_rmhb(p, ref, x_beta), {"p": p}) for p in orders]}
