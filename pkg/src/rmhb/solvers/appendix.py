"""Closed-form Fourier coefficients of ``x**3`` for a first-order two-frequency series.

With ``x = a0 + a1 cos(th) + b1 sin(th) + a2 cos(ph) + b2 sin(ph)`` the cube
contains the retained harmonics ``(0,0), (1,0), (0,1)`` and ten higher
combinations.  Each coefficient pair ``(c, s)`` multiplies
``cos((m w1 + n w2) t)`` and ``sin((m w1 + n w2) t)`` for the index exactly as
listed, whatever the sign of its combined frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXTRA_INDICES = ((2, 0), (3, 0), (-2, 1), (-1, 1), (1, 1),
                 (2, 1), (-1, 2), (0, 2), (1, 2), (0, 3))
BASIS_INDICES = ((0, 0), (1, 0), (0, 1))


@dataclass(frozen=True)
class CubicCoefficients:
    in_basis: np.ndarray  # [c00, c10, s10, c01, s01]
    extra: np.ndarray     # [c, s] pairs over EXTRA_INDICES

    def pair(self, index) -> tuple[float, float]:
        k = EXTRA_INDICES.index(tuple(index))
        return float(self.extra[2 * k]), float(self.extra[2 * k + 1])


def appendix_cubic_coeffs(xhat5) -> CubicCoefficients:
    a0, a1, b1, a2, b2 = (float(v) for v in xhat5)
    r1 = a1 * a1 + b1 * b1
    r2 = a2 * a2 + b2 * b2
    in_basis = np.array([
        a0 ** 3 + 1.5 * a0 * (r1 + r2),
        3 * a0 * a0 * a1 + 0.75 * a1 * r1 + 1.5 * a1 * r2,
        3 * a0 * a0 * b1 + 0.75 * b1 * r1 + 1.5 * b1 * r2,
        3 * a0 * a0 * a2 + 1.5 * a2 * r1 + 0.75 * a2 * r2,
        3 * a0 * a0 * b2 + 1.5 * b2 * r1 + 0.75 * b2 * r2,
    ])
    extra = np.array([
        # (2, 0)
        1.5 * a0 * (a1 * a1 - b1 * b1), 3 * a0 * a1 * b1,
        # (3, 0)
        0.25 * a1 ** 3 - 0.75 * a1 * b1 * b1, 0.75 * a1 * a1 * b1 - 0.25 * b1 ** 3,
        # (-2, 1)
        0.75 * a2 * (a1 * a1 - b1 * b1) + 1.5 * a1 * b1 * b2,
        0.75 * b2 * (a1 * a1 - b1 * b1) - 1.5 * a1 * a2 * b1,
        # (-1, 1)
        3 * a0 * (a1 * a2 + b1 * b2), 3 * a0 * (a1 * b2 - a2 * b1),
        # (1, 1)
        3 * a0 * (a1 * a2 - b1 * b2), 3 * a0 * (a1 * b2 + a2 * b1),
        # (2, 1)
        0.75 * a2 * (a1 * a1 - b1 * b1) - 1.5 * a1 * b1 * b2,
        0.75 * b2 * (a1 * a1 - b1 * b1) + 1.5 * a1 * a2 * b1,
        # (-1, 2)
        0.75 * a1 * (a2 * a2 - b2 * b2) + 1.5 * a2 * b1 * b2,
        1.5 * a1 * a2 * b2 - 0.75 * b1 * (a2 * a2 - b2 * b2),
        # (0, 2)
        1.5 * a0 * (a2 * a2 - b2 * b2), 3 * a0 * a2 * b2,
        # (1, 2)
        0.75 * a1 * (a2 * a2 - b2 * b2) - 1.5 * a2 * b1 * b2,
        1.5 * a1 * a2 * b2 + 0.75 * b1 * (a2 * a2 - b2 * b2),
        # (0, 3)
        0.25 * a2 ** 3 - 0.75 * a2 * b2 * b2, 0.75 * a2 * a2 * b2 - 0.25 * b2 ** 3,
    ])
    return CubicCoefficients(in_basis, extra)


def mhb_cubic_residual_p1(c: float, k: float, alpha: float, forcing, w1: float, w2: float):
    """Galerkin residual of ``x'' + c x' + k x + alpha x^3 = forcing`` for p = 1.

    ``forcing`` is the 5-vector of forcing coefficients in the p = 1 layout.
    Returns a callable on the 5 coefficients of ``x`` built purely from the
    closed-form cube, independent of any collocation.
    """
    forcing = np.asarray(forcing, dtype=float)
    w = [w1, w2]

    def residual(x):
        x = np.asarray(x, dtype=float)
        r = k * x + alpha * appendix_cubic_coeffs(x).in_basis - forcing
        for h, om in enumerate(w):
            ci, si = 1 + 2 * h, 2 + 2 * h
            # x = C cos + S sin  ->  x'' = -w^2 x,  x' = w S cos - w C sin
            r[ci] += -om * om * x[ci] + c * om * x[si]
            r[si] += -om * om * x[si] - c * om * x[ci]
        return r

    return residual
