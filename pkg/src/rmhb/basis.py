"""Multi-frequency harmonic index sets and exact frequency arithmetic.

A harmonic index ``(m_1, ..., m_t)`` stands for the combined angular frequency
``m_1*w_1 + ... + m_t*w_t``.  Because ``cos`` is even and ``sin`` is odd, an
index and its negation describe the same pair of basis functions (up to the
sign of the sine coefficient), so every basis stores only the *canonical*
member of each pair: the one whose combined frequency is strictly positive.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

HarmonicIndex = tuple[int, ...]

RAD = "rad"
CYCLES = "cycles"
_UNIT_SCALE = {RAD: 1.0, CYCLES: 2.0 * math.pi}

RATIONAL = "rational"
IRRATIONAL = "irrational"


class BasisError(ValueError):
    """Invalid frequencies or an ill-posed harmonic basis."""


class FrequencyCollisionError(BasisError):
    """Two distinct canonical indices share one combined frequency."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        listing = ", ".join(f"{a} ~ {b}" for a, b in self.pairs[:10])
        super().__init__(f"harmonic indices with equal combined frequency: {listing}")


@dataclass(frozen=True)
class Frequency:
    """A base angular frequency.

    ``rational`` holds the exact value in units of ``unit``: for ``unit='rad'``
    the angular frequency is ``rational`` itself, for ``unit='cycles'`` it is
    ``2*pi*rational``.  Irrational frequencies carry only the float ``value``.
    """

    value: float
    rational: Fraction | None = None
    unit: str = RAD

    def __post_init__(self):
        if not (self.value > 0.0 and math.isfinite(self.value)):
            raise BasisError(f"frequency must be positive and finite, got {self.value!r}")
        if self.unit not in _UNIT_SCALE:
            raise BasisError(f"unknown frequency unit {self.unit!r}")
        if self.rational is not None and self.rational <= 0:
            raise BasisError("rational form must be positive")

    @classmethod
    def exact(cls, numerator: int, denominator: int = 1, unit: str = RAD) -> "Frequency":
        if not isinstance(numerator, int) or not isinstance(denominator, int):
            raise BasisError("rational frequencies need integer numerator and denominator")
        if numerator <= 0 or denominator <= 0:
            raise BasisError("frequency must be positive")
        if unit not in _UNIT_SCALE:
            raise BasisError(f"unknown frequency unit {unit!r}")
        r = Fraction(numerator, denominator)
        return cls(value=_UNIT_SCALE[unit] * float(r), rational=r, unit=unit)

    @classmethod
    def irrational(cls, value: float) -> "Frequency":
        return cls(value=float(value))

    @property
    def tag(self) -> str:
        return RATIONAL if self.rational is not None else IRRATIONAL

    @property
    def scale(self) -> float:
        return _UNIT_SCALE[self.unit]

    @property
    def rational_form(self) -> tuple[int, int] | None:
        if self.rational is None:
            return None
        return self.rational.numerator, self.rational.denominator

    def __str__(self):
        if self.rational is None:
            return f"{self.value:.17g}"
        r = f"{self.rational.numerator}/{self.rational.denominator}"
        return r if self.unit == RAD else f"2pi*{r}"


def freq_gcd(frequencies: Sequence[Frequency]) -> Frequency:
    """Exact greatest common divisor of rational frequencies.

    The rationals are brought to a common denominator and reduced with the
    integer gcd, so ``gcd(4, 2.8)`` given as ``(20/5, 14/5)`` is exactly ``2/5``.
    """
    if not frequencies:
        raise BasisError("gcd of an empty frequency set")
    for f in frequencies:
        if f.rational is None:
            raise BasisError(f"frequency {f} is tagged irrational; gcd undefined")
    units = {f.unit for f in frequencies}
    if len(units) != 1:
        raise BasisError("all frequencies must share one unit convention")
    unit = units.pop()
    denom = math.lcm(*(f.rational.denominator for f in frequencies))
    nums = [int(f.rational * denom) for f in frequencies]
    g = Fraction(math.gcd(*nums), denom)
    return Frequency.exact(g.numerator, g.denominator, unit=unit)


def classify_ratio(frequencies: Sequence[Frequency]) -> str:
    if len(frequencies) < 2:
        return RATIONAL
    return RATIONAL if all(f.rational is not None for f in frequencies) else IRRATIONAL


def _all_rational(frequencies: Sequence[Frequency]) -> bool:
    return all(f.rational is not None for f in frequencies) and \
        len({f.unit for f in frequencies}) == 1


def combined_frequency(index: HarmonicIndex, frequencies: Sequence[Frequency]) -> float:
    return float(sum(m * f.value for m, f in zip(index, frequencies)))


def _exact_combined(index, frequencies):
    return sum(m * f.rational for m, f in zip(index, frequencies))


def _sign(index: HarmonicIndex, frequencies: Sequence[Frequency]) -> int:
    if _all_rational(frequencies):
        s = _exact_combined(index, frequencies)
        return (s > 0) - (s < 0)
    w = combined_frequency(index, frequencies)
    scale = sum(abs(m) * f.value for m, f in zip(index, frequencies))
    if abs(w) <= 1e-12 * max(scale, 1.0):
        return 0
    return 1 if w > 0 else -1


def canonical(index: Iterable[int], frequencies: Sequence[Frequency]) -> tuple[HarmonicIndex, int]:
    """Return ``(canonical_index, sign)`` with ``index = sign * canonical_index``.

    A sign of -1 means the sine coefficient flips when mapping onto the
    canonical representative.  Indices of zero combined frequency are
    returned unchanged with sign +1.
    """
    idx = tuple(int(m) for m in index)
    s = _sign(idx, frequencies)
    if s >= 0:
        return idx, 1
    return tuple(-m for m in idx), -1


def _lattice_ball(t: int, radius: int, lower: int = 0):
    """Integer points with ``lower < sum|m_i| <= radius`` (all signs)."""
    for idx in itertools.product(range(-radius, radius + 1), repeat=t):
        r = sum(abs(m) for m in idx)
        if lower < r <= radius:
            yield idx


def _sort_key(idx: HarmonicIndex):
    # shell first, then descending lexicographic so (1,0) precedes (0,1)
    return (sum(abs(m) for m in idx), tuple(-m for m in idx))


def _canonical_set(frequencies, radius, lower):
    seen: dict[HarmonicIndex, None] = {}
    for idx in _lattice_ball(len(frequencies), radius, lower):
        c, _ = canonical(idx, frequencies)
        if _sign(c, frequencies) == 0:
            continue
        seen.setdefault(c, None)
    return sorted(seen, key=_sort_key)


def _collisions(indices, frequencies):
    """Pairs of distinct indices sharing a combined frequency (incl. zero)."""
    pairs = []
    if _all_rational(frequencies):
        groups: dict = {}
        for idx in indices:
            groups.setdefault(_exact_combined(idx, frequencies), []).append(idx)
        for members in groups.values():
            pairs.extend(itertools.combinations(members, 2))
        return pairs
    ws = sorted((combined_frequency(i, frequencies), i) for i in indices)
    for (wa, a), (wb, b) in zip(ws, ws[1:]):
        if abs(wa - wb) <= 1e-12 * max(abs(wa), abs(wb), 1.0):
            pairs.append((a, b))
    return pairs


@dataclass(frozen=True)
class TruncationBasis:
    """Canonical truncated harmonic set ``sum|m_i| <= order``, constant first.

    Coefficients of one DOF are laid out as
    ``[c(0..0), c(k_1), s(k_1), c(k_2), s(k_2), ...]`` following ``indices``.
    """

    frequencies: tuple[Frequency, ...]
    order: int
    indices: tuple[HarmonicIndex, ...]

    @property
    def t(self) -> int:
        return len(self.frequencies)

    @property
    def per_dof_dim(self) -> int:
        return 2 * (len(self.indices) - 1) + 1

    @property
    def harmonics(self) -> tuple[HarmonicIndex, ...]:
        """Non-constant indices."""
        return self.indices[1:]

    @property
    def ratio_class(self) -> str:
        return classify_ratio(self.frequencies)

    def combined(self) -> list[float]:
        """Combined angular frequency of every non-constant index."""
        return [combined_frequency(i, self.frequencies) for i in self.harmonics]

    def position(self, index: Iterable[int]) -> tuple[int, int]:
        """Layout offset of the cosine coefficient of ``index`` and the sine sign.

        For the constant index the offset is 0 and the sign is 0.
        """
        idx = tuple(index)
        if len(idx) != self.t:
            raise KeyError(f"index {idx} has wrong length for t={self.t}")
        if not any(idx):
            return 0, 0
        c, sign = canonical(idx, self.frequencies)
        try:
            k = self.harmonics.index(c)
        except ValueError:
            raise KeyError(f"harmonic {idx} is not in the basis") from None
        return 1 + 2 * k, sign

    def with_frequencies(self, frequencies: Sequence[Frequency]) -> "TruncationBasis":
        """Same index layout evaluated at other base frequencies."""
        return TruncationBasis(tuple(frequencies), self.order, self.indices)


def build_basis(frequencies: Sequence[Frequency], p: int) -> TruncationBasis:
    """Build the canonical order-``p`` basis over ``frequencies``.

    Raises
    ------
    FrequencyCollisionError
        If two distinct canonical indices (or a non-constant index and the
        constant) share one combined frequency.
    """
    freqs = tuple(frequencies)
    if not freqs:
        raise BasisError("at least one base frequency is required")
    for f in freqs:
        if not isinstance(f, Frequency):
            raise BasisError(f"expected Frequency, got {type(f).__name__}")
    if int(p) != p or p < 1:
        raise BasisError(f"truncation order must be a positive integer, got {p!r}")
    p = int(p)
    zero_hits = [i for i in _lattice_ball(len(freqs), p) if _sign(i, freqs) == 0]
    if zero_hits:
        const = (0,) * len(freqs)
        raise FrequencyCollisionError([(const, i) for i in zero_hits])
    harmonics = _canonical_set(freqs, p, 0)
    pairs = _collisions(harmonics, freqs)
    if pairs:
        raise FrequencyCollisionError(pairs)
    return TruncationBasis(freqs, p, ((0,) * len(freqs),) + tuple(harmonics))


@dataclass(frozen=True)
class ExpandedIndexSet:
    """Canonical harmonics with ``p < sum|m_i| <= phi*p`` generated by a degree-phi product."""

    base: TruncationBasis
    phi: int
    extra_indices: tuple[HarmonicIndex, ...] = field(default=())

    @property
    def dim(self) -> int:
        return 2 * len(self.extra_indices)


def expanded_set(basis: TruncationBasis, phi: int) -> ExpandedIndexSet:
    if phi < 1:
        raise BasisError("nonlinearity degree must be >= 1")
    if phi == 1:
        return ExpandedIndexSet(basis, 1, ())
    extra = _canonical_set(basis.frequencies, phi * basis.order, basis.order)
    inside = set(basis.indices)
    # a combination may alias onto a retained harmonic frequency-wise, but as
    # an index it is still distinct
    extra = [e for e in extra if e not in inside]
    return ExpandedIndexSet(basis, int(phi), tuple(extra))
