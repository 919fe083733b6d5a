import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from rmhb.basis import (
    IRRATIONAL,
    RATIONAL,
    BasisError,
    Frequency,
    FrequencyCollisionError,
    build_basis,
    canonical,
    classify_ratio,
    combined_frequency,
    expanded_set,
    freq_gcd,
)

INCOMMENSURATE = (Frequency.irrational(4.0 / math.pi), Frequency.exact(1))
DUFFING_MC = (Frequency.exact(4), Frequency.exact(14, 5))


def test_first_order_layout():
    b = build_basis(INCOMMENSURATE, 1)
    assert b.indices == ((0, 0), (1, 0), (0, 1))
    assert b.per_dof_dim == 5


def test_second_order_layout_is_shell_then_descending():
    b = build_basis(INCOMMENSURATE, 2)
    assert b.indices[:3] == ((0, 0), (1, 0), (0, 1))
    assert set(b.indices[3:]) == {(2, 0), (1, 1), (1, -1), (0, 2)}
    assert b.indices[3] == (2, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 7))
def test_two_frequency_count(p):
    b = build_basis(INCOMMENSURATE, p)
    assert len(b.harmonics) == p * (p + 1)
    assert b.per_dof_dim == 2 * p * (p + 1) + 1


def test_single_frequency_count():
    b = build_basis((Frequency.exact(1),), 5)
    assert b.indices == tuple((k,) for k in range(6))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-6, 6), min_size=2, max_size=2))
def test_canonical_idempotent(idx):
    c, s = canonical(idx, INCOMMENSURATE)
    c2, s2 = canonical(c, INCOMMENSURATE)
    assert c2 == c and s2 == 1
    assert tuple(s * m for m in c) == tuple(idx)
    assert combined_frequency(c, INCOMMENSURATE) >= 0.0


def test_negative_index_maps_with_sine_flip():
    b = build_basis(INCOMMENSURATE, 2)
    j, sign = b.position((-1, 1))
    assert b.indices[(j - 1) // 2 + 1] == (1, -1)
    assert sign == -1
    assert b.position((0, 0)) == (0, 0)
    with pytest.raises(KeyError):
        b.position((3, 0))


def test_collision_rejected():
    with pytest.raises(FrequencyCollisionError):
        build_basis((Frequency.exact(1), Frequency.exact(2)), 2)


def test_zero_combination_rejected():
    with pytest.raises(FrequencyCollisionError):
        build_basis((Frequency.exact(1), Frequency.exact(1)), 1)


def test_gcd_and_ratio_class():
    g = freq_gcd(DUFFING_MC)
    assert g.rational == Fraction(2, 5)
    assert classify_ratio(DUFFING_MC) == RATIONAL
    assert classify_ratio(INCOMMENSURATE) == IRRATIONAL


def test_cycles_unit_scales_value():
    f = Frequency.exact(685, 10000, unit="cycles")
    assert f.value == pytest.approx(2 * math.pi * 0.0685)
    assert f.rational == Fraction(137, 2000)


@pytest.mark.parametrize("bad", [lambda: Frequency.exact(0), lambda: Frequency.exact(1, -2),
                                 lambda: Frequency.irrational(-1.0),
                                 lambda: Frequency.irrational(float("nan")),
                                 lambda: Frequency.exact(1, unit="hz"),
                                 lambda: build_basis(INCOMMENSURATE, 0),
                                 lambda: build_basis((), 1)])
def test_invalid_inputs(bad):
    with pytest.raises(BasisError):
        bad()


def test_expanded_set_cubic_p1():
    ext = expanded_set(build_basis(DUFFING_MC, 1), 3)
    assert len(ext.extra_indices) == 10
    assert all(1 < sum(map(abs, i)) <= 3 for i in ext.extra_indices)
