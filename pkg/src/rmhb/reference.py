"""Fixed-step RK4 reference trajectories and the error metrics built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .basis import TruncationBasis
from .operators import series_peak, synthesize

DEFAULT_STEPS_PER_PERIOD = 200


class IntegrationError(FloatingPointError):
    def __init__(self, step: int, message: str = ""):
        super().__init__(message or f"state became non-finite at step {step}")
        self.step = step


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray   # (K,)
    states: np.ndarray  # (K, N)
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("times and states disagree in length")

    def __len__(self):
        return self.times.shape[0]

    def peak(self, dof: int = 0) -> float:
        return float(np.abs(self.states[:, dof]).max())


@dataclass(frozen=True)
class ErrorMetrics:
    amplitude_error: float
    rms_error: float
    window: tuple[float, float]
    dof: int = 0
    shift: float = 0.0


def rk4_integrate(model, x0, dt: float, steps: int, t0: float = 0.0,
                  store_every: int = 1) -> Trajectory:
    """Classical fourth-order Runge-Kutta with a fixed step.

    ``model`` is anything with ``eval_f(state, t)`` (or a plain callable).
    Every ``store_every``-th state is kept.  A non-finite state raises
    :class:`IntegrationError` carrying the step index.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 0 or store_every < 1:
        raise ValueError("steps must be >= 0 and store_every >= 1")
    f = model.eval_f if hasattr(model, "eval_f") else model
    x = np.array(x0, dtype=float)
    n_keep = steps // store_every + 1
    out = np.empty((n_keep, x.size))
    out[0] = x
    h2 = 0.5 * dt
    t = t0
    j = 1
    for i in range(1, steps + 1):
        k1 = f(x, t)
        k2 = f(x + h2 * k1, t + h2)
        k3 = f(x + h2 * k2, t + h2)
        k4 = f(x + dt * k3, t + dt)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + i * dt
        if not np.all(np.isfinite(x)):
            raise IntegrationError(i)
        if i % store_every == 0:
            out[j] = x
            j += 1
    times = t0 + dt * store_every * np.arange(n_keep)
    return Trajectory(times, out, dt * store_every)


def default_dt(frequencies, per_period: int = DEFAULT_STEPS_PER_PERIOD) -> float:
    """Step resolving the shortest base period with ``per_period`` steps."""
    w = max(f.value if hasattr(f, "value") else float(f) for f in frequencies)
    return 2.0 * math.pi / w / per_period


def steady_window(traj: Trajectory, discard_fraction: float) -> Trajectory:
    if not 0.0 <= discard_fraction < 1.0:
        raise WindowError("discard_fraction must lie in [0, 1)")
    start = int(math.floor(len(traj) * discard_fraction))
    if start >= len(traj):
        raise WindowError("steady window is empty")
    return Trajectory(traj.times[start:], traj.states[start:], traj.dt)


def amplitude_error(peak_a: float, peak_b: float) -> float:
    return abs(float(peak_a) - float(peak_b))


def _best_shift(x_fn, ref: np.ndarray, times: np.ndarray, period: float) -> tuple[float, float]:
    def rms(s):
        return float(np.sqrt(np.mean((x_fn(times + s) - ref) ** 2)))

    grid = np.linspace(0.0, period, 64, endpoint=False)
    vals = [rms(s) for s in grid]
    k = int(np.argmin(vals))
    step = period / 64
    res = minimize_scalar(rms, bounds=(grid[k] - step, grid[k] + step), method="bounded",
                          options={"xatol": period * 1e-7})
    return (float(res.x), float(res.fun)) if res.fun < vals[k] else (float(grid[k]), vals[k])


def compare(xhat, basis: TruncationBasis, traj: Trajectory, dof: int = 0, *,
            align: bool = True, peak: str = "window") -> ErrorMetrics:
    """Peak-amplitude and RMS differences between a series and a reference trajectory.

    ``peak='window'`` takes the series maximum over the trajectory's own
    times; ``peak='series'`` uses the window-free :func:`series_peak`.  The
    RMS error is evaluated at the time shift (searched over one shortest
    base period) that best aligns the series with the reference.
    """
    if len(traj) < 2:
        raise WindowError("reference window holds fewer than two samples")
    t = traj.times
    ref = traj.states[:, dof]
    if ref.size == 0:
        raise WindowError("window mismatch: empty reference")

    def x_fn(times):
        return synthesize(xhat, basis, times)[:, dof]

    x_win = x_fn(t)
    x_peak = float(np.abs(x_win).max()) if peak == "window" else series_peak(xhat, basis, dof)
    amp = amplitude_error(x_peak, np.abs(ref).max())
    shift = 0.0
    rms = float(np.sqrt(np.mean((x_win - ref) ** 2)))
    if align:
        period = 2.0 * math.pi / max(f.value for f in basis.frequencies)
        shift, rms = _best_shift(x_fn, ref, t, period)
    return ErrorMetrics(amp, rms, (float(t[0]), float(t[-1])), dof, shift)


def amplitude_spectrum(traj: Trajectory, dof: int = 0, window: bool = True):
    """One-sided DFT magnitudes of the mean-removed signal; frequencies in cycles per unit time."""
    x = traj.states[:, dof] - traj.states[:, dof].mean()
    w = np.hanning(x.size) if window else np.ones(x.size)
    mag = np.abs(np.fft.rfft(x * w)) * 2.0 / w.sum()
    return np.fft.rfftfreq(x.size, traj.dt), mag


def spectral_peaks(freqs, mags, count: int = 4, separation: float | None = None):
    """The ``count`` largest magnitudes at least ``separation`` apart in frequency."""
    separation = 5 * (freqs[1] - freqs[0]) if separation is None else separation
    out = []
    for i in np.argsort(mags)[::-1]:
        if freqs[i] == 0.0:
            continue
        if all(abs(freqs[i] - f) > separation for f, _ in out):
            out.append((float(freqs[i]), float(mags[i])))
        if len(out) == count:
            break
    return out
