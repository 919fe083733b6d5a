import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmhb.basis import Frequency, build_basis
from rmhb.collocation import build_matrices, sampling_plan
from rmhb.experiments import duffing_mc_system
from rmhb.models import airfoil_store, duffing_mc, vdp_forced
from rmhb.operators import synthesize
from rmhb.solvers import (
    GOIA,
    AssemblyError,
    ResidualSystem,
    SingularJacobianError,
    SolverConfig,
    appendix_cubic_coeffs,
    assemble_hdhb,
    assemble_mhb_torus,
    assemble_rmhb_first_order,
    assemble_rmhb_second_order,
    fd_jacobian,
    hdhb_coefficients,
    hdhb_initial,
    mhb_cubic_residual_p1,
    newton_solve,
    solve,
)
from rmhb.solvers.appendix import EXTRA_INDICES

MC = duffing_mc()
MC_BASIS = build_basis(MC.frequencies, 1)


def affine(A, b):
    A = np.asarray(A, float)
    return ResidualSystem(len(b), lambda x: A @ x - b, "affine", jacobian=lambda x: A)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10**6))
def test_newton_on_affine_converges_in_two_iterations(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 3 * n * np.eye(n)
    b = rng.normal(size=n)
    res = newton_solve(affine(A, b), rng.normal(size=n) * 10)
    assert res.converged and res.iterations <= 2
    assert np.allclose(A @ res.xhat, b)


def test_fd_jacobian_option_matches():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    res = newton_solve(affine(A, np.ones(2)), np.zeros(2), SolverConfig(jacobian="fd"))
    assert res.converged and res.iterations <= 2


def test_singular_policy():
    sys_ = affine([[1.0, 1.0], [1.0, 1.0]], np.array([1.0, 1.0]))
    with pytest.raises(SingularJacobianError):
        newton_solve(sys_, np.zeros(2))
    res = newton_solve(sys_, np.zeros(2), SolverConfig(singular="lstsq"))
    assert res.converged and np.allclose(res.xhat, [0.5, 0.5])


def test_non_convergence_reported():
    sys_ = ResidualSystem(1, lambda x: np.array([x[0] ** 2 + 1.0]), "no-root",
                          jacobian=lambda x: np.array([[2 * x[0]]]))
    res = newton_solve(sys_, np.array([0.7]), SolverConfig(max_iter=5))
    assert not res.converged and res.message
    assert len(res.trace) == res.iterations + 1


def test_config_validation():
    for kw in ({"method": "x"}, {"gamma": 1.0}, {"tol_residual_inf": 0.0},
               {"jacobian": "exact"}, {"singular": "pinv"}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)
    with pytest.raises(ValueError):
        newton_solve(affine(np.eye(2), np.ones(2)), np.zeros(3))


def test_goia_on_small_nonlinear_system():
    def F(x):
        return np.array([x[0] ** 2 + x[1] ** 2 - 4.0, math.exp(x[0]) + x[1] - 1.0])

    sys_ = ResidualSystem(2, F, "circle-exp")
    res = solve(sys_, np.array([1.0, -1.5]), SolverConfig(method=GOIA, max_iter=500))
    assert res.converged
    assert np.max(np.abs(F(res.xhat))) <= 1e-10


def test_cubic_closed_form_matches_collocation():
    """Closed-form cube coefficients equal the de-aliased collocation projection."""
    b3 = build_basis(MC.frequencies, 3)
    mats = build_matrices(b3, sampling_plan(b3, 1))
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.uniform(-2, 2, 5)
        cube = synthesize(x, MC_BASIS, mats.plan.nodes)[:, 0] ** 3
        proj = mats.E_star_block @ cube
        oracle = appendix_cubic_coeffs(x)
        for k, idx in enumerate(((1, 0), (0, 1))):
            j, _ = b3.position(idx)
            assert np.allclose(proj[j:j + 2], oracle.in_basis[1 + 2 * k:3 + 2 * k], atol=1e-10)
        for idx in EXTRA_INDICES:
            j, sign = b3.position(idx)
            c, s = oracle.pair(idx)
            assert proj[j] == pytest.approx(c, abs=1e-10)
            assert proj[j + 1] * sign == pytest.approx(s, abs=1e-10)


def test_rmhb_equals_mhb_oracle_when_de_aliased():
    system, _ = duffing_mc_system(41)
    oracle = mhb_cubic_residual_p1(0.2, 1.0, 0.2, [0, 3, 0, 5, 0], 4.0, 2.8)
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.uniform(-5, 5, 5)
        assert np.allclose(system.residual(x), oracle(x), atol=1e-10)


def test_aliased_rmhb_departs_from_oracle():
    system, _ = duffing_mc_system(20)
    oracle = mhb_cubic_residual_p1(0.2, 1.0, 0.2, [0, 3, 0, 5, 0], 4.0, 2.8)
    x = np.array([0.1, -1.5, 0.8, 4.4, 4.8])
    assert np.max(np.abs(system.residual(x) - oracle(x))) > 1e-3


def test_torus_and_first_order_forms_agree_when_de_aliased():
    torus = assemble_mhb_torus(MC, MC_BASIS)
    first = assemble_rmhb_first_order(MC, MC_BASIS, sampling_plan(MC_BASIS, 3))
    x = np.random.default_rng(2).normal(size=10)
    assert np.allclose(torus.residual(x), first.residual(x), atol=1e-10)
    with pytest.raises(AssemblyError):
        assemble_mhb_torus(MC, MC_BASIS, K=4)


@pytest.mark.parametrize("mode", ["sampled", "exact"])
def test_analytic_jacobians_match_differences(mode):
    rng = np.random.default_rng(0)
    systems = [assemble_rmhb_first_order(MC, MC_BASIS, sampling_plan(MC_BASIS, 3), forcing_mode=mode),
               duffing_mc_system(41)[0]]
    air = airfoil_store(0.2)
    ab = build_basis(air.frequencies, 1)
    systems.append(assemble_rmhb_second_order(air, ab, sampling_plan(ab, 3, {"M": 400}),
                                              free_frequencies=(0, 1), phase_dof=0))
    vb = build_basis(vdp_forced().frequencies, 2)
    systems.append(assemble_hdhb(vdp_forced(), vb, sampling_plan(vb, 3, {"T": 30.0, "M": 30})))
    for s in systems:
        z = rng.normal(size=s.dimension) * 0.3
        if s.free_frequencies:
            z[s.n_coeffs:] = [air.frequencies[k].value for k in s.free_frequencies]
        assert np.allclose(s.jacobian(z), fd_jacobian(s.residual, z), atol=1e-6, rtol=1e-6)


def test_forcing_modes_agree_when_de_aliased():
    plan = sampling_plan(MC_BASIS, 3)
    a = assemble_rmhb_first_order(MC, MC_BASIS, plan, forcing_mode="sampled")
    b = assemble_rmhb_first_order(MC, MC_BASIS, plan, forcing_mode="exact")
    x = np.random.default_rng(4).normal(size=10)
    assert np.allclose(a.residual(x), b.residual(x), atol=1e-12)


def test_free_frequency_rules():
    vb = build_basis(vdp_forced().frequencies, 1)
    plan = sampling_plan(vb, 3, {"T": 50.0, "M": 50})
    with pytest.raises(AssemblyError):
        assemble_rmhb_first_order(vdp_forced(), vb, plan, free_frequencies=(0,))
    s = assemble_rmhb_first_order(vdp_forced(), vb, plan, free_frequencies=(1,))
    assert s.dimension == s.n_coeffs + 1
    z = s.initial(np.zeros(10))
    assert z[-1] == 1.0
    assert s.solved_basis(np.concatenate([np.zeros(10), [0.97]])).frequencies[1].value == 0.97


def test_hdhb_round_trip_and_square_case():
    vb = build_basis(vdp_forced().frequencies, 1)
    plan = sampling_plan(vb, 3, {"T": 5.0 * vb.per_dof_dim, "M": vb.per_dof_dim})
    s = assemble_hdhb(vdp_forced(), vb, plan)
    x = np.random.default_rng(8).normal(size=2 * vb.per_dof_dim)
    assert np.allclose(hdhb_coefficients(s, hdhb_initial(s, x)), x)
    assert s.provenance == "HDHB" and s.dimension == 2 * plan.M


def test_duffing_mc_reference_root_is_a_balance_root():
    system, _ = duffing_mc_system(41)
    res = newton_solve(system, np.array([0.0, -0.2, 0.0, -0.7, 0.0]))
    assert res.converged
    oracle = mhb_cubic_residual_p1(0.2, 1.0, 0.2, [0, 3, 0, 5, 0], 4.0, 2.8)
    assert np.max(np.abs(oracle(res.xhat))) <= 1e-9
