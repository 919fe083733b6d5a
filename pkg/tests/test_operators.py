import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmhb.basis import Frequency, build_basis
from rmhb.collocation import build_matrices, sampling_plan
from rmhb.operators import (
    amplitude,
    analyze,
    coefficient_records,
    embed_coefficients,
    grad_block,
    grad_frequency_derivative,
    grad_matrix,
    series_peak,
    synthesize,
    to_nodes,
    torus_transforms,
    unit_coefficient,
)

freqs = st.tuples(st.floats(0.3, 3.0), st.floats(0.3, 3.0)).filter(
    lambda w: abs(w[0] - w[1]) > 1e-2 and abs(w[0] / w[1] - round(w[0] / w[1])) > 1e-2
    and abs(w[1] / w[0] - round(w[1] / w[0])) > 1e-2)


def irr_basis(w, p):
    return build_basis(tuple(Frequency.irrational(v) for v in w), p)


@settings(max_examples=40, deadline=None)
@given(freqs, st.integers(1, 4))
def test_grad_skew_symmetric(w, p):
    try:
        b = irr_basis(w, p)
    except ValueError:
        return
    G = grad_block(b)
    assert np.array_equal(G, -G.T)
    assert np.allclose(grad_matrix(b, 3), np.kron(np.eye(3), G))


@settings(max_examples=40, deadline=None)
@given(freqs, st.integers(1, 3), st.integers(0, 10**6))
def test_grad_matches_time_derivative(w, p, seed):
    try:
        b = irr_basis(w, p)
    except ValueError:
        return
    rng = np.random.default_rng(seed)
    x = rng.normal(size=b.per_dof_dim)
    t = rng.uniform(0, 50, 7)
    h = 1e-5
    fd = (synthesize(x, b, t + h) - synthesize(x, b, t - h)) / (2 * h)
    exact = synthesize(grad_block(b) @ x, b, t)
    assert np.allclose(fd, exact, rtol=1e-6, atol=1e-6 * np.abs(exact).max())


def test_frequency_derivative_of_grad():
    b = irr_basis((1.3, 0.7), 2)
    h = 1e-6
    for k in range(2):
        w = [1.3, 0.7]
        w[k] += h
        fd = (grad_block(irr_basis(w, 2)) - grad_block(b)) / h
        assert np.allclose(fd, grad_frequency_derivative(b, k), atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 20), st.integers(1, 3), st.integers(0, 10**6))
def test_analyze_synthesize_identity(p, extra, N, seed):
    b = build_basis((Frequency.exact(4), Frequency.exact(14, 5)), p)
    plan = sampling_plan(b, 1)
    plan = plan.with_M(plan.critical_M + 1 + extra)
    mats = build_matrices(b, plan, N)
    x = np.random.default_rng(seed).normal(size=N * b.per_dof_dim)
    X = synthesize(x, b, plan.nodes)
    assert np.allclose(analyze(X, mats), x, atol=1e-10)
    assert np.allclose(to_nodes(x, mats), X.T, atol=1e-12)


def test_analyze_checks_shape():
    b = build_basis((Frequency.exact(1),), 1)
    mats = build_matrices(b, sampling_plan(b, 1), 2)
    with pytest.raises(ValueError):
        analyze(np.zeros((mats.plan.M, 3)), mats)


def test_amplitude_and_records():
    b = build_basis((Frequency.exact(1), Frequency.exact(3, 7)), 1)
    x = np.array([0.5, 3.0, 4.0, 0.0, -1.0])
    assert amplitude(x, b, 0, (1, 0)) == pytest.approx(5.0)
    assert amplitude(x, b, 0, (0, 0)) == 0.5
    assert amplitude(x, b, 0, (0, -1)) == pytest.approx(1.0)
    rec = coefficient_records(x, b, ["q"])
    assert len(rec) == 5 and rec[2] == {"dof": "q", "index": [1, 0], "part": "s", "value": 4.0}
    with pytest.raises(IndexError):
        amplitude(x, b, 1, (1, 0))
    with pytest.raises(ValueError):
        amplitude(x[:4], b, 0, (1, 0))


def test_unit_coefficient():
    b = build_basis((Frequency.exact(1), Frequency.exact(3, 7)), 1)
    e = unit_coefficient(b, 2, 1, (0, 1), "s")
    assert e.sum() == 1.0 and e[5 + 4] == 1.0


def test_series_peak_known_signals():
    b = build_basis((Frequency.exact(1),), 2)
    x = np.array([0.0, 1.0, 0.0, 0.0, 0.0])
    assert series_peak(x, b) == pytest.approx(1.0, abs=1e-9)
    q = irr_basis((1.0, math.sqrt(2)), 1)
    assert series_peak(np.array([0.0, 1.0, 0.0, 1.0, 0.0]), q) == pytest.approx(2.0, abs=1e-9)


def test_torus_transforms_orthogonal():
    b = irr_basis((1.0, math.sqrt(2)), 2)
    S, A, theta = torus_transforms(b, 7)
    assert theta.shape == (49, 2)
    assert np.allclose(A @ S, np.eye(b.per_dof_dim), atol=1e-12)


def test_embed_preserves_series():
    f = (Frequency.exact(1), Frequency.exact(23, 200))
    b1, b3 = build_basis(f, 1), build_basis(f, 3)
    x = np.random.default_rng(0).normal(size=2 * b1.per_dof_dim)
    y = embed_coefficients(x, b1, b3)
    t = np.linspace(0, 30, 11)
    assert np.allclose(synthesize(x, b1, t), synthesize(y, b3, t))
    with pytest.raises(KeyError):
        embed_coefficients(y, b3, b1)
