from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_problem
from flexpd.core import (AlgorithmState, ConfigurationError, DivergenceError, StopRule, Stepsizes,
                         derived_matrices, dual_step, flexpd_c_step, flexpd_f_step, flexpd_g_step,
                         kkt_residual, lyapunov, lyapunov_weight, m_eigen_bounds,
                         reference_solution, solve)
from flexpd.graph import build_topology, make_network
from flexpd.objective import QuadraticObjective
from flexpd.stepsize import certify_c, certify_f, certify_g


def _random_state(net, obj, rng):
    x = rng.normal(size=(obj.n, obj.p)) * 3
    lam = net.A @ rng.normal(size=(obj.n, obj.p))
    return AlgorithmState(x, lam)


def _small_alpha(net, obj):
    m, L = obj.constants()
    return 0.5 / (L + net.rho_B)


def test_dual_step_examples():
    A = np.array([[1.0, -1.0]])
    lam = np.zeros((1, 1))
    np.testing.assert_array_equal(dual_step(lam, np.array([[1.0], [0.0]]), A, 1.0), [[1.0]])
    np.testing.assert_array_equal(dual_step(lam + 2, np.array([[3.0], [3.0]]), A, 5.0), [[2.0]])
    np.testing.assert_array_equal(dual_step(lam + 2, np.array([[1.0], [0.0]]), A, 0.0), [[2.0]])


def test_fixed_point_all_variants():
    for seed in range(20):
        net, obj = random_problem(seed)
        x_star, lam_star = reference_solution(net, obj)
        m, _ = obj.constants()
        if net.rho_B >= m:
            net = net.scaled(0.5 * m / net.rho_AtA)
        alpha = _small_alpha(net, obj)
        st0 = AlgorithmState(x_star, lam_star)
        for step in (flexpd_f_step, flexpd_g_step, flexpd_c_step):
            nxt = step(st0, net, obj, alpha, 0.7, 3)
            assert np.linalg.norm(nxt.x - x_star) <= 1e-10 * (1 + np.linalg.norm(x_star))


def test_t1_coincidence():
    rng = np.random.default_rng(5)
    for seed in range(50):
        net, obj = random_problem(seed)
        m, _ = obj.constants()
        net = net.scaled(0.5 * m / net.rho_AtA)
        st0 = _random_state(net, obj, rng)
        alpha = _small_alpha(net, obj)
        a = flexpd_f_step(st0, net, obj, alpha, 0.3, 1)
        b = flexpd_g_step(st0, net, obj, alpha, 0.3, 1)
        c = flexpd_c_step(st0, net, obj, alpha, 0.3, 1)
        for other in (b, c):
            assert np.max(np.abs(a.x - other.x)) <= 1e-12
            assert np.max(np.abs(a.lam - other.lam)) <= 1e-12


def test_compact_form_matches_sweep():
    rng = np.random.default_rng(11)
    for seed in range(30):
        net, obj = random_problem(seed)
        st0 = _random_state(net, obj, rng)
        T = int(rng.integers(1, 7))
        alpha = float(rng.uniform(0.05, 0.95)) / net.rho_B
        a = flexpd_c_step(st0, net, obj, alpha, 0.4, T, form="sweep")
        b = flexpd_c_step(st0, net, obj, alpha, 0.4, T, form="compact")
        scale = 1 + np.abs(a.x).max()
        assert np.max(np.abs(a.x - b.x)) <= 1e-12 * scale


def test_counter_semantics():
    net, obj = random_problem(2, n=5)
    m, _ = obj.constants()
    net = net.scaled(0.5 * m / net.rho_AtA)
    alpha, K, T = _small_alpha(net, obj), 7, 3
    expected = {flexpd_f_step: (K * T * 5, K * T), flexpd_g_step: (K * T * 5, K),
                flexpd_c_step: (K * 5, K * T)}
    for step, counts in expected.items():
        s = AlgorithmState.initial(net, np.zeros((5, 1)))
        for _ in range(K):
            s = step(s, net, obj, alpha, 0.5, T)
        assert (s.k, s.grad_evals, s.comm_rounds) == (K, *counts)


def test_column_space_invariant():
    for seed in range(6):
        net, obj = random_problem(seed)
        m, _ = obj.constants()
        beta = 0.5 * m / net.rho_AtA
        net = net.scaled(beta)
        proj = net.A @ np.linalg.pinv(net.A)
        s = AlgorithmState.initial(net, np.random.default_rng(seed).normal(size=(obj.n, obj.p)))
        for k in range(60):
            step = (flexpd_f_step, flexpd_g_step, flexpd_c_step)[k % 3]
            s = step(s, net, obj, _small_alpha(net, obj), beta, 2)
            resid = s.lam - proj @ s.lam
            assert np.linalg.norm(resid) <= 1e-8 * (1 + np.linalg.norm(s.lam))


def test_g_step_rejects_large_penalty(pair_problem):
    net, obj = pair_problem
    with pytest.raises(ConfigurationError, match="rho\\(B\\)"):
        flexpd_g_step(AlgorithmState.initial(net, np.zeros(2)), net.scaled(5.0), obj, 0.1, 1.0, 1)


def test_steps_reject_bad_parameters(pair_problem):
    net, obj = pair_problem
    s = AlgorithmState.initial(net, np.zeros(2))
    with pytest.raises(ConfigurationError):
        flexpd_f_step(s, net, obj, 0.1, 1.0, 0)
    with pytest.raises(ConfigurationError):
        flexpd_f_step(s, net, obj, -0.1, 1.0, 1)
    with pytest.raises(ConfigurationError):
        flexpd_c_step(s, net, obj, 1.0 / net.rho_B, 1.0, 2)


def test_nan_in_multipliers_is_flagged():
    s = AlgorithmState(np.zeros((2, 1)), np.zeros((1, 1)))
    with pytest.raises(DivergenceError, match="non-finite"):
        s.advanced(np.zeros((2, 1)), np.array([[np.nan]]), 1, 1)


def test_divergence_is_flagged(pair_problem):
    net, obj = pair_problem
    s = AlgorithmState.initial(net, np.array([1.0, -1.0]))
    with pytest.raises(DivergenceError):
        for _ in range(200):
            s = flexpd_f_step(s, net, obj, 50.0, 1.0, 1)


# derived matrices --------------------------------------------------------------


def test_derived_t1(path3):
    dm = derived_matrices(path3, 0.1, 1)
    np.testing.assert_allclose(dm.C, np.eye(3))
    np.testing.assert_allclose(dm.M, np.eye(3) - 0.1 * path3.B)
    np.testing.assert_allclose(dm.N, path3.B, atol=1e-12)


def test_derived_zero_penalty(path3):
    net = replace(path3, B=np.zeros((3, 3)), rho_B=0.0)
    dm = derived_matrices(net, 0.3, 4)
    np.testing.assert_allclose(dm.U, np.eye(3))
    np.testing.assert_allclose(dm.C, 4 * np.eye(3))
    np.testing.assert_allclose(dm.M, np.eye(3) / 4)
    np.testing.assert_allclose(dm.N, np.zeros((3, 3)), atol=1e-14)


def test_derived_rejects_large_alpha(path3):
    with pytest.raises(ConfigurationError):
        derived_matrices(path3, 1.0 / path3.rho_B, 2)


def test_n_equals_penalty_matrix():
    # I - U^T = a B C and C commutes with B, so (C^-1 - C^-1 U^T)/a = B
    rng = np.random.default_rng(0)
    for seed in range(20):
        net, _ = random_problem(seed)
        alpha = float(rng.uniform(0.05, 0.9)) / net.rho_B
        dm = derived_matrices(net, alpha, int(rng.integers(1, 7)))
        literal = (np.linalg.inv(dm.C) - dm.M) / alpha
        np.testing.assert_allclose(dm.N, literal, atol=1e-8 * net.rho_B)
        np.testing.assert_allclose(dm.N, net.B, atol=1e-8 * net.rho_B)


def test_derived_matrices_tiny_alpha():
    net, _ = random_problem(3, n=10)
    net = net.scaled(1.8 / net.rho_AtA)
    dm = derived_matrices(net, 2.7e-7, 2)
    assert np.linalg.eigvalsh(dm.N)[0] >= -1e-12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), frac=st.floats(0.01, 0.99), T=st.integers(1, 6))
def test_m_eigen_bounds_property(seed, frac, T):
    net, _ = random_problem(seed)
    alpha = frac / net.rho_B
    dm = derived_matrices(net, alpha, T, check=False)
    lo, hi = m_eigen_bounds(alpha, net.rho_B, T)
    eig = np.linalg.eigvalsh(dm.M)
    assert eig[0] >= lo - 1e-10 and eig[-1] <= hi + 1e-10
    assert np.linalg.eigvalsh(dm.N)[0] >= -1e-10 * max(1.0, net.rho_B)
    assert np.linalg.eigvalsh(dm.U)[0] > 0


# KKT and Lyapunov ---------------------------------------------------------------


def test_kkt_at_optimum_and_consensus():
    net, obj = random_problem(4)
    x_star, lam_star = reference_solution(net, obj)
    r = kkt_residual(AlgorithmState(x_star, lam_star), net, obj)
    scale = 1 + np.abs(obj.grad(np.zeros_like(x_star))).sum()
    assert r.max() <= 1e-9 * scale
    off = AlgorithmState(x_star + 1.0, np.zeros_like(lam_star))
    r = kkt_residual(off, net, obj)
    assert r.feasibility == 0 and r.penalty_null <= 1e-12 and r.stationarity > 0


def test_kkt_feasibility_matches_direct():
    net, obj = random_problem(6)
    x = np.random.default_rng(0).normal(size=(obj.n, obj.p))
    r = kkt_residual(AlgorithmState(x, np.zeros((net.num_edges, obj.p))), net, obj)
    assert r.feasibility == pytest.approx(np.linalg.norm(net.A @ x))


def test_reference_solution_logistic_matches_gd_tolerance():
    net, obj = random_problem(1)
    x_star, lam_star = reference_solution(net, obj)
    g = obj.grad(x_star)
    assert np.linalg.norm(g.sum(axis=0)) <= 1e-11
    np.testing.assert_allclose(net.A.T @ lam_star, -g, atol=1e-10)


def test_reference_closed_form_agrees_with_gd():
    net, obj = random_problem(0, kind="quadratic", n=5)
    a = reference_solution(net, obj)[0]
    b = reference_solution(net, obj, method="gd")[0]
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_lyapunov_examples():
    ref = (np.zeros((2, 1)), np.zeros((1, 1)))
    st0 = AlgorithmState(np.zeros((2, 1)), np.zeros((1, 1)))
    assert lyapunov(st0, ref, np.eye(2), 1.0, 1.0) == 0
    st1 = AlgorithmState(np.array([[2.0], [0.0]]), np.zeros((1, 1)))
    assert lyapunov(st1, ref, np.eye(2), 1.0, 1.0) == 4


def test_lyapunov_weights_positive_definite():
    net, obj = random_problem(8)
    alpha = 0.5 / net.rho_B
    for v in ("F", "G", "C"):
        assert np.linalg.eigvalsh(lyapunov_weight(v, net, alpha, 3))[0] > 0


# solve ------------------------------------------------------------------------


def test_solve_pair_problem_converges_to_five(pair_problem):
    net, obj = pair_problem
    ref = reference_solution(net, obj)
    np.testing.assert_allclose(ref[0], [[5.0], [5.0]])
    for certify in (certify_f, certify_c):
        cert = certify(net, obj, 1)
        tr = solve(cert.variant, cert.network(net), obj, cert, ref=ref, certified=True,
                   stop=StopRule(1e-8, 100_000))
        assert tr.status == "converged"
        np.testing.assert_allclose(tr.final_state.x, [[5.0], [5.0]], atol=1e-6)
        assert np.all(np.diff(tr.column("lyapunov")) < 0)


def test_solve_pair_problem_certified_c_multiple_steps(pair_problem):
    net, obj = pair_problem
    ref = reference_solution(net, obj)
    cert = certify_c(net, obj, 3)
    tr = solve("C", cert.network(net), obj, cert, ref=ref, certified=True)
    assert tr.status == "converged" and tr.final[1] < 0.01


def test_solve_max_iters_zero(pair_problem):
    net, obj = pair_problem
    tr = solve("F", net, obj, Stepsizes(0.1, 1.0), stop=StopRule(0.01, 0),
               ref=reference_solution(net, obj))
    assert len(tr.rows) == 1 and tr.rows[0][0] == 0 and tr.rows[0][1] == 1.0


def test_solve_is_deterministic():
    net, obj = random_problem(3, kind="quadratic", n=10)
    ref = reference_solution(net, obj)
    cert = certify_c(net, obj, 2)
    runs = [solve("C", cert.network(net), obj, cert, ref=ref, stop=StopRule(1e-3, 3000))
            for _ in range(2)]
    assert runs[0].rows == runs[1].rows


def test_solve_rejects_inadmissible_certificate(pair_problem):
    net, obj = pair_problem
    cert = certify_c(net, obj, 2, beta=50.0)
    assert not cert.admissible
    with pytest.raises(ConfigurationError):
        solve("C", cert.network(net), obj, cert, certified=True)


def test_solve_reports_divergence(pair_problem):
    net, obj = pair_problem
    tr = solve("F", net, obj, Stepsizes(50.0, 1.0), x0=np.array([1.0, -1.0]),
               ref=reference_solution(net, obj), stop=StopRule(1e-6, 1000))
    assert tr.status == "diverged"


def test_solve_without_reference_uses_kkt(pair_problem):
    net, obj = pair_problem
    tr = solve("C", net.scaled(0.5), obj, Stepsizes(0.2, 0.5, 2), stop=StopRule(1e-6, 20_000))
    assert tr.status == "converged"
    assert max(tr.final[5], tr.final[6]) < 1e-6


def test_solve_record_false_keeps_endpoints(pair_problem):
    net, obj = pair_problem
    ref = reference_solution(net, obj)
    full = solve("F", net, obj, Stepsizes(0.1, 1.0, 2), ref=ref)
    lean = solve("F", net, obj, Stepsizes(0.1, 1.0, 2), ref=ref, record=False)
    assert len(lean.rows) == 2
    assert lean.rows[0] == full.rows[0]
    assert lean.final[:5] == full.final[:5]


def test_trace_counters_increase_and_start_at_one():
    net, obj = random_problem(2, kind="quadratic", n=5)
    ref = reference_solution(net, obj)
    cert = certify_c(net, obj, 2)
    tr = solve("C", cert.network(net), obj, cert, ref=ref)
    assert tr.rows[0][1] == 1.0
    assert np.all(np.diff(tr.column("grad_evals")) > 0)
    assert np.all(np.diff(tr.column("comm_rounds")) > 0)


def test_first_below_and_iterations_to(pair_problem):
    net, obj = pair_problem
    ref = reference_solution(net, obj)
    tr = solve("C", net, obj, certify_c(net, obj, 1), ref=ref, stop=StopRule(1e-3, 10_000))
    k = tr.iterations_to(0.01)
    assert k is not None and tr.rows[k][1] < 0.01 <= tr.rows[k - 1][1]
    assert tr.iterations_to(1e-30) is None


@pytest.mark.parametrize("certify,T", [(certify_f, 1), (certify_g, 1), (certify_c, 1), (certify_c, 3)])
def test_lyapunov_monotone_under_certificates(certify, T):
    for seed in range(5):
        net, obj = random_problem(2 * seed, kind="quadratic", n=5)
        ref = reference_solution(net, obj)
        cert = certify(net, obj, T)
        tr = solve(cert.variant, cert.network(net), obj, cert, ref=ref, certified=True,
                   stop=StopRule(1e-4, 200_000))
        assert tr.status == "converged"
        assert np.all(np.diff(tr.column("lyapunov")) < 0)


def test_multidimensional_iterates():
    g = build_topology("ring", 4)
    net = make_network(g)
    obj = QuadraticObjective([1, 2, 3, 4], np.arange(12.0).reshape(4, 3))
    ref = reference_solution(net, obj)
    cert = certify_c(net, obj, 2)
    tr = solve("C", cert.network(net), obj, cert, ref=ref, certified=True, stop=StopRule(1e-8, 50_000))
    assert tr.status == "converged"
    np.testing.assert_allclose(tr.final_state.x, ref[0], atol=1e-6)
