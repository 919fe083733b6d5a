"""Dynamical-system models of the form ``x' = f(x, t)``.

``eval_f`` broadcasts: ``state`` may be ``(N,)`` with scalar ``t`` or
``(N, K)`` with ``t`` of shape ``(K,)``; the result has the shape of
``state``.  ``jac_f`` (optional) returns ``df_i/dx_j`` with shape ``(N, N, K)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .basis import Frequency


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ForcingTerm:
    amplitude: float
    frequency: Frequency
    phase: float = 0.0
    dof: int = 0


@dataclass(frozen=True)
class ForcingSpec:
    """Sum of ``amplitude * cos(w t + phase)`` terms, each acting on one equation."""

    terms: tuple[ForcingTerm, ...] = ()

    def evaluate(self, t, N: int) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros((N,) + t.shape)
        for term in self.terms:
            out[term.dof] = out[term.dof] + term.amplitude * np.cos(term.frequency.value * t + term.phase)
        return out

    @property
    def frequencies(self) -> list[Frequency]:
        return [term.frequency for term in self.terms]


@dataclass(frozen=True)
class SystemModel:
    """First-order model ``x' = f_aut(x) + forcing(t)``.

    ``rhs`` is the state-dependent part (it may still depend on ``t``);
    ``forcing`` is kept separate so residual assembly can place it on
    basis harmonics exactly.  ``eval_f`` is the full right-hand side.
    """

    N: int
    phi: int
    rhs: Callable
    jac_f: Callable | None = None
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    frequencies: tuple[Frequency, ...] = ()
    description: str = ""
    state_names: tuple[str, ...] = ()
    autonomous: bool = False
    # frequencies of the response that are not fixed by any input
    free_frequency_hint: tuple[int, ...] = ()

    def eval_f(self, state, t):
        x = np.asarray(state, dtype=float)
        out = np.asarray(self.rhs(x, t), dtype=float)
        if self.forcing.terms:
            out = out + self.forcing.evaluate(t, self.N)
        return out

    def __call__(self, state, t):
        return self.eval_f(state, t)

    def eval_jac(self, state, t, step: float = 1e-6) -> np.ndarray:
        """State Jacobian ``(N, N, K)``; central differences when ``jac_f`` is absent."""
        X = np.asarray(state, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.jac_f is not None:
            return np.asarray(self.jac_f(X, t), dtype=float)
        J = np.empty((self.N, self.N, X.shape[1]))
        for j in range(self.N):
            h = step * np.maximum(1.0, np.abs(X[j]))
            Xp = X.copy()
            Xm = X.copy()
            Xp[j] += h
            Xm[j] -= h
            J[:, j, :] = (self.rhs(Xp, t) - self.rhs(Xm, t)) / (2 * h)
        return J


@dataclass(frozen=True)
class StructuralModel:
    """``M q'' + C q' + K q + P [q_1^3, ..., q_n^3] = forcing(t)``."""

    M_mat: np.ndarray
    C_mat: np.ndarray
    K_mat: np.ndarray
    P_mat: np.ndarray
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    frequencies: tuple[Frequency, ...] = ()
    description: str = ""
    dof_names: tuple[str, ...] = ()
    autonomous: bool = False
    phi: int = 3

    def __post_init__(self):
        n = np.asarray(self.M_mat).shape[0]
        for name in ("M_mat", "C_mat", "K_mat", "P_mat"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (n, n):
                raise ModelError(f"{name} must be {n}x{n}, got {a.shape}")
            object.__setattr__(self, name, a)
        if np.linalg.cond(self.M_mat) > 1e14:
            raise ModelError("mass matrix is singular")

    @property
    def dof(self) -> int:
        return self.M_mat.shape[0]


def vdp_forced(epsilon: float = 0.1, F: float = 0.25,
               omega1: Frequency | None = None,
               omega2: Frequency | None = None) -> SystemModel:
    """Forced Van der Pol oscillator recast as a cubic first-order system.

    ``x' = u``, ``u' = (eps*u - x) - eps*x**2*u + F*cos(w1*t)``; the second
    base frequency is the self-excited one near 1.
    """
    omega1 = omega1 or Frequency.irrational(4.0 / math.pi)
    omega2 = omega2 or Frequency.exact(1)
    eps = float(epsilon)

    def rhs(X, t):
        x, u = X[0], X[1]
        return np.stack([u, eps * u - x - eps * x * x * u])

    def jac(X, t):
        x, u = X[0], X[1]
        J = np.zeros((2, 2) + np.shape(x))
        J[0, 1] = 1.0
        J[1, 0] = -1.0 - 2 * eps * x * u
        J[1, 1] = eps - eps * x * x
        return J

    return SystemModel(
        N=2, phi=3, rhs=rhs, jac_f=jac,
        forcing=ForcingSpec((ForcingTerm(float(F), omega1, 0.0, 1),)),
        frequencies=(omega1, omega2),
        description=f"forced Van der Pol, eps={eps}, F={F}, w1={omega1}",
        state_names=("x", "u"), free_frequency_hint=(1,),
    )


def _duffing(c, k, alpha, amps, freqs, description):
    def rhs(X, t):
        x, v = X[0], X[1]
        return np.stack([v, -c * v - k * x - alpha * x ** 3])

    def jac(X, t):
        x = X[0]
        J = np.zeros((2, 2) + np.shape(x))
        J[0, 1] = 1.0
        J[1, 0] = -k - 3 * alpha * x * x
        J[1, 1] = -c
        return J

    forcing = ForcingSpec(tuple(ForcingTerm(float(a), w, 0.0, 1) for a, w in zip(amps, freqs)))
    return SystemModel(N=2, phi=3, rhs=rhs, jac_f=jac, forcing=forcing,
                       frequencies=tuple(freqs), description=description,
                       state_names=("x", "v"))


def duffing_two_input(c: float = 0.05, k: float = 1.0, alpha: float = 1.0,
                      A1: float = 0.3, A2: float = 1.5,
                      omega1: Frequency | None = None,
                      omega2: Frequency | None = None) -> SystemModel:
    omega1 = omega1 or Frequency.exact(1)
    omega2 = omega2 or Frequency.exact(23, 200)
    return _duffing(c, k, alpha, (A1, A2), (omega1, omega2),
                    f"Duffing x''+{c}x'+{k}x+{alpha}x^3 = {A1}cos({omega1}t)+{A2}cos({omega2}t)")


def duffing_mc() -> SystemModel:
    """``x'' + 0.2x' + x + 0.2x^3 = 3cos4t + 5cos2.8t`` (the multi-solution study)."""
    return _duffing(0.2, 1.0, 0.2, (3.0, 5.0), (Frequency.exact(4), Frequency.exact(14, 5)),
                    "Duffing x''+0.2x'+x+0.2x^3 = 3cos4t+5cos2.8t")


def duffing_mc_structural() -> StructuralModel:
    """The same oscillator in second-order form (one coordinate)."""
    w = (Frequency.exact(4), Frequency.exact(14, 5))
    return StructuralModel(
        [[1.0]], [[0.2]], [[1.0]], [[0.2]],
        forcing=ForcingSpec((ForcingTerm(3.0, w[0]), ForcingTerm(5.0, w[1]))),
        frequencies=w, description="Duffing (second-order form)", dof_names=("x",))


AIRFOIL_DEFAULTS = dict(
    Q=8.0, mu=12.8, mu_beta=4.0, x_alpha=0.15, r_alpha2=0.3, r_beta2=0.89,
    L_bar=0.18, a=-0.41, b=0.118, c_h=0.2, c_alpha=0.2, c_beta=0.0,
    omega_h=34.6, omega_alpha=88.0, omega_beta=60.0,
    k_h3=0.0, k_alpha3=0.0, k_beta3=10.0,
)


def airfoil_store(x_beta: float, **overrides) -> StructuralModel:
    """Airfoil with external store: plunge ``h``, pitch ``alpha``, store pitch ``beta``.

    ``x_beta`` (store offset) has no default and must be supplied.  The
    response base frequencies are ``f1 = 0.0685`` and ``f2 = 0.0873`` cycles
    per unit time.  ``b`` is accepted for completeness but does not enter the
    matrices.
    """
    unknown = set(overrides) - set(AIRFOIL_DEFAULTS)
    if unknown:
        raise ModelError(f"unknown airfoil parameters: {sorted(unknown)}")
    p = dict(AIRFOIL_DEFAULTS, **overrides)
    xb = float(x_beta)
    mu, mub, L, Q = p["mu"], p["mu_beta"], p["L_bar"], p["Q"]
    xa, ra2, rb2 = p["x_alpha"], p["r_alpha2"], p["r_beta2"]
    m01 = mu * xa + mub * xb - mub * L
    M = [[mu + mub, m01, mub * xb],
         [m01, mu * ra2 + mub * rb2 + mub * L ** 2 - 2 * mub * xb * L, mub * rb2 - mub * xb * L],
         [mub * xb, mub * rb2 - mub * xb * L, mub * rb2]]
    C = np.diag([p["c_h"], p["c_alpha"], p["c_beta"]])
    K = [[mu * (p["omega_h"] / p["omega_alpha"]) ** 2, 2 * Q, 0.0],
         [0.0, mu * ra2 - 2 * (L + p["a"]) * Q, 0.0],
         [0.0, 0.0, mub * rb2 * (p["omega_beta"] / p["omega_alpha"]) ** 2]]
    P = np.diag([p["k_h3"], p["k_alpha3"], p["k_beta3"]])
    freqs = (Frequency.exact(685, 10000, unit="cycles"), Frequency.exact(873, 10000, unit="cycles"))
    return StructuralModel(M, C, K, P, frequencies=freqs, autonomous=True,
                           description=f"airfoil with external store, x_beta={xb}",
                           dof_names=("h", "alpha", "beta"))


def recast_to_first_order(model: StructuralModel) -> SystemModel:
    """State ``[q; q']`` with ``q'' = M^-1 (forcing - C q' - K q - P q^3)``."""
    n = model.dof
    Minv = np.linalg.inv(model.M_mat)
    A_C = Minv @ model.C_mat
    A_K = Minv @ model.K_mat
    A_P = Minv @ model.P_mat
    fterms = []
    for term in model.forcing.terms:
        # M^-1 spreads one physical load over every acceleration equation
        for i in range(n):
            if Minv[i, term.dof] != 0.0:
                fterms.append(ForcingTerm(term.amplitude * Minv[i, term.dof], term.frequency,
                                          term.phase, n + i))

    def rhs(X, t):
        q, v = X[:n], X[n:]
        acc = -(np.tensordot(A_C, v, 1) + np.tensordot(A_K, q, 1) + np.tensordot(A_P, q ** 3, 1))
        return np.concatenate([v, acc])

    def jac(X, t):
        q = X[:n]
        K = X.shape[1] if X.ndim > 1 else 1
        J = np.zeros((2 * n, 2 * n, K))
        J[:n, n:] = np.eye(n)[:, :, None]
        J[n:, :n] = -A_K[:, :, None] - A_P[:, :, None] * (3 * q.reshape(n, -1) ** 2)[None, :, :]
        J[n:, n:] = -A_C[:, :, None]
        return J

    names = tuple(model.dof_names) + tuple(f"{d}_dot" for d in model.dof_names)
    return SystemModel(N=2 * n, phi=model.phi, rhs=rhs, jac_f=jac,
                       forcing=ForcingSpec(tuple(fterms)), frequencies=model.frequencies,
                       description=model.description + " (first-order form)",
                       state_names=names, autonomous=model.autonomous)


def polynomial_form(model_name: str, params: Mapping | None = None):
    """Explicitly expanded polynomial right-hand sides used to check declared degrees.

    Returns ``(fn, degree)`` with ``fn(state) -> rhs`` built from monomials.
    """
    params = dict(params or {})
    if model_name == "vdp_forced":
        eps = params.get("epsilon", 0.1)
        terms = [  # (equation, coefficient, powers of (x, u))
            (0, 1.0, (0, 1)), (1, eps, (0, 1)), (1, -1.0, (1, 0)), (1, -eps, (2, 1))]
    elif model_name in ("duffing_two_input", "duffing_mc"):
        c, k, a = ((params.get("c", 0.05), params.get("k", 1.0), params.get("alpha", 1.0))
                   if model_name == "duffing_two_input" else (0.2, 1.0, 0.2))
        terms = [(0, 1.0, (0, 1)), (1, -c, (0, 1)), (1, -k, (1, 0)), (1, -a, (3, 0))]
    else:
        raise ModelError(f"no polynomial form for {model_name!r}")

    def fn(X):
        X = np.asarray(X, dtype=float)
        out = np.zeros_like(X)
        for eq, coef, powers in terms:
            out[eq] += coef * np.prod([X[i] ** e for i, e in enumerate(powers)], axis=0)
        return out

    return fn, max(sum(p) for _, _, p in terms)


def _freq_from_config(spec) -> Frequency:
    """``{"num": 1, "den": 200, "unit": "rad"}`` or ``{"value": 1.27, "irrational": true}``."""
    if isinstance(spec, Frequency):
        return spec
    if isinstance(spec, Mapping):
        if "num" in spec:
            return Frequency.exact(int(spec["num"]), int(spec.get("den", 1)), spec.get("unit", "rad"))
        if "value" in spec:
            return Frequency.irrational(float(spec["value"]))
    if isinstance(spec, (list, tuple)) and len(spec) == 2 and all(isinstance(v, int) for v in spec):
        return Frequency.exact(spec[0], spec[1])
    if isinstance(spec, int) and not isinstance(spec, bool):
        return Frequency.exact(spec)
    raise ModelError(f"cannot read frequency from {spec!r}; floats must be tagged irrational "
                     "({'value': ..}) or given as exact integer pairs")


def _vdp_from_params(params):
    kw = dict(params)
    for f in ("omega1", "omega2"):
        if f in kw:
            kw[f] = _freq_from_config(kw[f])
    return vdp_forced(**kw)


def _duffing2_from_params(params):
    kw = dict(params)
    for f in ("omega1", "omega2"):
        if f in kw:
            kw[f] = _freq_from_config(kw[f])
    return duffing_two_input(**kw)


def _airfoil_from_params(params):
    kw = dict(params)
    if "x_beta" not in kw:
        raise ModelError("airfoil_store requires 'x_beta' (no default)")
    return airfoil_store(**kw)


def _duffing_mc_from_params(params):
    if params:
        raise ModelError("duffing_mc takes no parameters")
    return duffing_mc()


MODEL_REGISTRY: dict[str, Callable[[Mapping], object]] = {
    "vdp_forced": _vdp_from_params,
    "duffing_two_input": _duffing2_from_params,
    "duffing_mc": _duffing_mc_from_params,
    "airfoil_store": _airfoil_from_params,
}

MODEL_PARAMETERS: dict[str, Sequence[str]] = {
    "vdp_forced": ("epsilon", "F", "omega1", "omega2"),
    "duffing_two_input": ("c", "k", "alpha", "A1", "A2", "omega1", "omega2"),
    "duffing_mc": (),
    "airfoil_store": ("x_beta",) + tuple(AIRFOIL_DEFAULTS),
}


def model_from_config(name: str, params: Mapping | None = None):
    try:
        factory = MODEL_REGISTRY[name]
    except KeyError:
        raise ModelError(f"unknown model {name!r}; choose from {sorted(MODEL_REGISTRY)}") from None
    params = dict(params or {})
    unknown = set(params) - set(MODEL_PARAMETERS[name])
    if unknown:
        raise ModelError(f"unknown parameters for {name}: {sorted(unknown)}")
    return factory(params)
