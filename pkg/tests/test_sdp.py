import math

import numpy as np
import pytest

from conftest import free_trace_oracle, random_sos, random_square
from sos_approx import linalg
from sos_approx.gram import build_constraints, gram_map, square_basis
from sos_approx.poly import COMMUTATIVE, FREE, Polynomial, sum_of_monomial_squares, variables
from sos_approx.sdp import (
    SolveStatus,
    SolverError,
    SolverOptions,
    dual_bound,
    dual_functional,
    parse_config_file,
    rank_reduce,
    sos_feasible,
    sos_norm,
)


def test_free_two_word_example():
    z1, z2 = variables(FREE, 2)
    p = z2 * z1 * z1 * z2 + z1 * z2 * z2 * z1
    basis = square_basis(FREE, 2, 2)
    value, sol = sos_norm(p, basis)
    assert sol.status is SolveStatus.OPTIMAL
    # closed form: the Gram map is injective here, trace is forced
    assert value == pytest.approx(2.0, abs=1e-6)


def test_forced_diagonal_anchor():
    basis = square_basis(COMMUTATIVE, 3, 1)
    value, sol = sos_norm(sum_of_monomial_squares(3, 1), basis)
    assert sol.status is SolveStatus.OPTIMAL
    assert value == pytest.approx(3.0, abs=1e-5)
    assert sol.primal_residual <= 1e-7 * (1 + np.linalg.norm(build_constraints(
        sum_of_monomial_squares(3, 1), basis).targets))


def test_square_gives_rank_one_value(rng):
    basis = square_basis(COMMUTATIVE, 3, 1)
    for _ in range(3):
        q = random_square(rng, basis)
        a = q.involution() * q
        value, sol = sos_norm(a, basis)
        assert sol.status is SolveStatus.OPTIMAL
        assert value <= q.coeff_two_norm() ** 2 + 1e-6 * (1 + value)


def test_solution_matrix_reproduces_input(rng):
    a, basis = random_sos(rng, COMMUTATIVE, 3, 2, 3)
    value, sol = sos_norm(a, basis)
    assert sol.status is SolveStatus.OPTIMAL
    residual = (gram_map(sol.matrix, basis) - a).coeff_two_norm()
    assert residual <= 1e-7 * (1 + a.coeff_two_norm())
    w = linalg.eig_hermitian(sol.matrix).eigenvalues
    assert w.min() >= -1e-8 * (1 + abs(w).max())


def test_zero_polynomial():
    basis = square_basis(COMMUTATIVE, 2, 1)
    value, sol = sos_norm(Polynomial.zero(COMMUTATIVE, 2), basis)
    assert value == 0.0 and sol.status is SolveStatus.OPTIMAL
    feas = sos_feasible(Polynomial.zero(COMMUTATIVE, 2), basis)
    assert feas and not feas.witness.any()


def test_free_oracle_match(rng):
    for _ in range(10):
        a, basis = random_sos(rng, FREE, 2, 2, 2)
        expected = free_trace_oracle(a, basis)
        value, sol = sos_norm(a, basis)
        assert sol.status is SolveStatus.OPTIMAL
        assert value == pytest.approx(expected, rel=1e-6)


def test_feasible_monomial_square_sums():
    for d in (1, 2, 3):
        p = sum_of_monomial_squares(3, d)
        basis = square_basis(COMMUTATIVE, 3, d)
        result = sos_feasible(p, basis)
        assert result.feasible
        cons = build_constraints(p, basis)
        assert cons.residual(result.witness) <= 1e-6
        assert linalg.eig_hermitian(result.witness).eigenvalues.min() >= -1e-10


def test_indefinite_rejected_with_certificate():
    x1, x2, _ = variables(COMMUTATIVE, 3)
    a = x1 * x1 - x2 * x2
    basis = square_basis(COMMUTATIVE, 3, 1)
    result = sos_feasible(a, basis)
    assert not result.feasible
    cert = result.certificate
    cons = build_constraints(a, basis)
    E = cons.adjoint(cert.values)
    # separating functional: PSD on squares, negative at a
    assert linalg.eig_hermitian(E).eigenvalues.min() >= -1e-8
    assert cert.objective < -1e-8
    value, sol = sos_norm(a, basis)
    assert sol.status is SolveStatus.INFEASIBLE and math.isnan(value)
    # the improving ray makes the dual unbounded
    assert dual_bound(a, basis) == math.inf


def test_scaling_homogeneity(rng):
    a, basis = random_sos(rng, COMMUTATIVE, 3, 2, 2)
    value, _ = sos_norm(a, basis)
    for c in (0.5, 3.0):
        scaled, _ = sos_norm(c * a, basis)
        assert scaled == pytest.approx(c * value, rel=1e-5)


def test_weak_duality_and_pd_strong_duality(rng):
    for d in (1, 2):
        a, basis = random_sos(rng, COMMUTATIVE, 3, d, 4)
        value, sol = sos_norm(a, basis)
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.dual_objective <= value + 1e-6 * (1 + value)
        lam_min = linalg.eig_hermitian(sol.matrix).eigenvalues.min()
        if lam_min > 1e-4:
            assert abs(value - sol.dual_objective) <= 1e-4 * (1 + value)


def test_dual_bound_examples(rng):
    basis = square_basis(COMMUTATIVE, 3, 1)
    p31 = sum_of_monomial_squares(3, 1)
    assert dual_bound(p31, basis) == pytest.approx(3.0, rel=1e-5)
    assert dual_bound(Polynomial.zero(COMMUTATIVE, 3), basis) == 0.0
    # evaluation at sphere points is dual-feasible: |p(s)| <= sos-norm
    a, basis2 = random_sos(rng, COMMUTATIVE, 3, 2, 2)
    value, _ = sos_norm(a, basis2)
    s = rng.standard_normal(3)
    s /= np.linalg.norm(s)
    assert abs(a.evaluate(s)) <= value + 1e-6 * (1 + value)


def test_dual_functional_margins(rng):
    a, basis = random_sos(rng, COMMUTATIVE, 3, 1, 3)
    phi = dual_functional(a, basis)
    assert phi.psd_margin >= -1e-7
    assert phi.sample_margin >= phi.psd_margin - 1e-9


def test_rank_reduce_p32_constraints(rng):
    # k = 15 real constraints at dimension 6; target ceil(sqrt(15)) = 4
    a, basis = random_sos(rng, COMMUTATIVE, 3, 2, 5)
    cons = build_constraints(a, basis)
    assert cons.k == 15
    result = sos_feasible(a, basis)
    M0 = rank_reduce(result.witness, cons, 4)
    assert linalg.numerical_rank(M0) <= 4
    assert cons.residual(M0) <= 1e-6 * (1 + np.linalg.norm(cons.targets))
    assert linalg.eig_hermitian(M0).eigenvalues.min() >= -1e-9 * (1 + np.trace(M0).real)


def test_rank_reduce_fixed_point(rng):
    a, basis = random_sos(rng, COMMUTATIVE, 3, 1, 1)
    cons = build_constraints(a, basis)
    result = sos_feasible(a, basis)
    M1 = rank_reduce(result.witness, cons, 3)
    M2 = rank_reduce(M1, cons, 3)
    assert np.allclose(M1, M2, atol=1e-9)


def test_rank_reduce_single_trace_constraint():
    # hand-built system: the one constraint tr(M) = 1, target rank 1
    from sos_approx.gram import GramConstraints, HermitianBasisElement
    basis = square_basis(COMMUTATIVE, 2, 1)
    cons = GramConstraints(
        basis, (HermitianBasisElement("self", (1, 1)),), np.array([1.0]),
        rows=np.array([0, 1]), cols=np.array([0, 1]),
        vals=np.array([1.0 + 0j, 1.0 + 0j]), seg=np.array([0, 0]))
    reduced = rank_reduce(np.eye(2) / 2.0, cons, 1)
    assert linalg.numerical_rank(reduced) == 1
    assert np.trace(reduced).real == pytest.approx(1.0, abs=1e-9)
    assert linalg.eig_hermitian(reduced).eigenvalues.min() >= -1e-12


def test_rank_reduce_hypothesis_violation(rng):
    a, basis = random_sos(rng, COMMUTATIVE, 3, 2, 3)
    cons = build_constraints(a, basis)
    M = sos_feasible(a, basis).witness
    with pytest.raises(ValueError):
        rank_reduce(M, cons, 2)  # 15 > 2^2 + 2*2


def test_rank_reduce_requires_feasible_start(rng):
    a, basis = random_sos(rng, COMMUTATIVE, 3, 2, 3)
    cons = build_constraints(a, basis)
    with pytest.raises(ValueError):
        rank_reduce(np.eye(6) * 100.0, cons, 4)


def test_solver_options_config(tmp_path):
    cfg = tmp_path / "solver.cfg"
    cfg.write_text("tol_primal = 1e-9  # tighter\nmax-iter = 200\nadapt_rho = false\n")
    data = parse_config_file(str(cfg))
    opts = SolverOptions.from_mapping(data)
    assert opts.tol_primal == 1e-9
    assert opts.max_iter == 200
    assert opts.adapt_rho is False
    with pytest.raises(ValueError):
        SolverOptions.from_mapping({"no_such_option": "1"})
    bad = tmp_path / "bad.cfg"
    bad.write_text("just words\n")
    with pytest.raises(ValueError):
        parse_config_file(str(bad))


def test_max_iter_reported_not_coerced(rng):
    a, basis = random_sos(rng, COMMUTATIVE, 3, 2, 3)
    opts = SolverOptions(max_iter=3, feas_max_iter=10_000, check_every=1)
    value, sol = sos_norm(a, basis, opts)
    assert sol.status is SolveStatus.MAX_ITER
    assert "residual" in sol.message
    with pytest.raises(SolverError):
        dual_bound(a, basis, opts)


def test_solution_serialization(rng):
    a, basis = random_sos(rng, COMMUTATIVE, 2, 1, 2)
    _, sol = sos_norm(a, basis)
    data = sol.to_dict()
    M = linalg.hermitian_from_dict(data["matrix"])
    assert np.allclose(M, sol.matrix, atol=1e-12)
    assert data["status"] == "optimal"
