import math

import numpy as np
import pytest

from conftest import random_hermitian, random_sos
from sos_approx.gram import (
    BasisSizeError,
    GramConstraints,
    NoCertifiedBoundError,
    NotHermitianError,
    SquareBasis,
    build_constraints,
    gram_map,
    gram_preimage_free,
    operator_norm_bound,
    square_basis,
)
from sos_approx.linalg import schatten_norm
from sos_approx.poly import COMMUTATIVE, FREE, Polynomial, sum_of_monomial_squares, sphere_lattice


def test_square_basis_sizes():
    assert square_basis(COMMUTATIVE, 3, 2).size == 6  # C(4, 2)
    assert square_basis(FREE, 2, 3).size == 8         # 2^3
    assert square_basis(COMMUTATIVE, 3, 0).size == 1
    assert square_basis(FREE, 2, 0).size == 1


def test_square_basis_degree_one_ordering():
    basis = square_basis(COMMUTATIVE, 3, 1)
    assert basis.terms == ((1, 0, 0), (0, 1, 0), (0, 0, 1))


def test_square_basis_cap():
    with pytest.raises(BasisSizeError):
        square_basis(FREE, 10, 6)  # 10^6 entries
    square_basis(FREE, 10, 6, max_size=10 ** 6)


def test_gram_map_identity_gives_monomial_square_sum():
    for n, d in ((3, 1), (3, 2), (2, 3)):
        basis = square_basis(COMMUTATIVE, n, d)
        p = gram_map(np.eye(basis.size), basis)
        assert p == sum_of_monomial_squares(n, d)


def test_gram_map_zero():
    basis = square_basis(FREE, 2, 2)
    assert not gram_map(np.zeros((4, 4)), basis)


def test_gram_map_rank_one_is_square(rng):
    # oracle: expand q* q with plain polynomial arithmetic
    for flavor in (COMMUTATIVE, FREE):
        basis = square_basis(flavor, 2, 2)
        c = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
        q = Polynomial(flavor, 2, {t: v for t, v in zip(basis.terms, c)})
        M = np.outer(c.conj(), c)  # Gram matrix of q* q
        assert (gram_map(M, basis) - q.involution() * q).coeff_two_norm() <= 1e-12


def test_gram_map_is_star_linear(rng):
    for flavor in (COMMUTATIVE, FREE):
        basis = square_basis(flavor, 2, 2)
        D = basis.size
        A = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
        lhs = gram_map(A, basis).involution()
        rhs = gram_map(A.conj().T, basis)
        assert (lhs - rhs).coeff_two_norm() <= 1e-12
        B = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
        both = gram_map(A + 2j * B, basis)
        split = gram_map(A, basis) + 2j * gram_map(B, basis)
        assert (both - split).coeff_two_norm() <= 1e-10


def test_gram_map_dimension_mismatch():
    basis = square_basis(COMMUTATIVE, 3, 1)
    with pytest.raises(ValueError):
        gram_map(np.eye(4), basis)


def test_build_constraints_p31():
    basis = square_basis(COMMUTATIVE, 3, 1)
    cons = build_constraints(sum_of_monomial_squares(3, 1), basis)
    assert cons.k == 6
    diag = {t: lam for t, lam in
            ((om.term, cons.targets[l]) for l, om in enumerate(cons.omegas))}
    assert diag[(2, 0, 0)] == 1.0 and diag[(0, 2, 0)] == 1.0 and diag[(0, 0, 2)] == 1.0
    assert diag[(1, 1, 0)] == 0.0 and diag[(1, 0, 1)] == 0.0 and diag[(0, 1, 1)] == 0.0
    for l in range(cons.k):
        A = cons.constraint_matrix(l)
        assert np.abs(A - A.conj().T).max() < 1e-12


def test_build_constraints_zero_polynomial():
    basis = square_basis(COMMUTATIVE, 2, 2)
    cons = build_constraints(Polynomial.zero(COMMUTATIVE, 2), basis)
    assert not cons.targets.any()


def test_build_constraints_free_counts(rng):
    basis = square_basis(FREE, 2, 2)
    a, _ = random_sos(rng, FREE, 2, 2, 2)
    cons = build_constraints(a, basis)
    assert cons.k == 2 ** 4  # n^{2d} real constraints
    # each constraint touches a single cell or a conjugate pair of cells
    for l in range(cons.k):
        nnz = int((cons.seg == l).sum())
        assert nnz in (1, 2)


def test_build_constraints_rejects_bad_inputs():
    basis = square_basis(COMMUTATIVE, 2, 1)
    x1, x2 = (Polynomial.variable(COMMUTATIVE, 2, i) for i in range(2))
    with pytest.raises(NotHermitianError):
        build_constraints(1j * x1 * x1, basis)
    with pytest.raises(ValueError):
        build_constraints(x1, basis)  # degree 1, expected 2
    with pytest.raises(ValueError):
        build_constraints(x1 * x1 + x2, basis)  # inhomogeneous


def test_constraints_reconstruct_gram_map(rng):
    # G(M) = sum_l tr(A_l M) omega_l for random Hermitian M
    for flavor, n, d in ((COMMUTATIVE, 3, 2), (FREE, 2, 2)):
        basis = square_basis(flavor, n, d)
        a, _ = random_sos(rng, flavor, n, d, 2)
        cons = build_constraints(a, basis)
        M = random_hermitian(rng, basis.size)
        y = cons.apply(M)
        recon = Polynomial.zero(flavor, n)
        for l in range(cons.k):
            recon = recon + float(y[l]) * cons.omega_polynomial(l)
        assert (recon - gram_map(M, basis)).coeff_two_norm() <= 1e-9


def test_adjoint_identity(rng):
    # a = G(M) makes M a solution of its own constraint system
    for flavor, n, d in ((COMMUTATIVE, 3, 2), (FREE, 2, 2)):
        basis = square_basis(flavor, n, d)
        for _ in range(5):
            M = random_hermitian(rng, basis.size)
            cons = build_constraints(gram_map(M, basis), basis)
            assert np.abs(cons.apply(M) - cons.targets).max() <= 1e-9


def test_apply_adjoint_are_adjoint(rng):
    basis = square_basis(COMMUTATIVE, 3, 2)
    a, _ = random_sos(rng, COMMUTATIVE, 3, 2, 2)
    cons = build_constraints(a, basis)
    M = random_hermitian(rng, basis.size)
    y = rng.standard_normal(cons.k)
    lhs = float(cons.apply(M) @ y)
    rhs = float(np.trace(cons.adjoint(y) @ M).real)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_gram_preimage_free_middle_split():
    z1, z2 = (Polynomial.variable(FREE, 2, i) for i in range(2))
    p = z2 * z1 * z1 * z2 + z1 * z2 * z2 * z1
    M = gram_preimage_free(p, 2)
    basis = square_basis(FREE, 2, 2)
    i12 = basis.index[(0, 1)]
    i21 = basis.index[(1, 0)]
    expected = np.zeros((4, 4))
    expected[i12, i12] = 1.0
    expected[i21, i21] = 1.0
    assert np.array_equal(M, expected)


def test_gram_preimage_free_zero_and_roundtrip(rng):
    assert not gram_preimage_free(Polynomial.zero(FREE, 2), 2).any()
    basis = square_basis(FREE, 2, 3)
    for _ in range(20):
        M = random_hermitian(rng, basis.size)
        assert np.abs(gram_preimage_free(gram_map(M, basis), 3) - M).max() <= 1e-12


def test_gram_preimage_free_rejects():
    z1 = Polynomial.variable(FREE, 1, 0)
    with pytest.raises(NotHermitianError):
        gram_preimage_free(1j * z1 * z1, 1)
    with pytest.raises(ValueError):
        gram_preimage_free(z1, 1)  # odd degree vs 2d
    with pytest.raises(ValueError):
        gram_preimage_free(Polynomial.variable(COMMUTATIVE, 1, 0), 1)


def test_operator_norm_bound_certified_cases():
    assert operator_norm_bound(square_basis(COMMUTATIVE, 3, 2)) == 1.0
    assert operator_norm_bound(square_basis(FREE, 2, 3)) == 1.0
    scaled = SquareBasis(COMMUTATIVE, 3, 2,
                         square_basis(COMMUTATIVE, 3, 2).terms, scale=2.0)
    with pytest.raises(NoCertifiedBoundError):
        operator_norm_bound(scaled)


def test_scaled_basis_gram_map():
    basis = square_basis(COMMUTATIVE, 2, 1)
    scaled = SquareBasis(COMMUTATIVE, 2, 1, basis.terms, scale=2.0)
    p = gram_map(np.eye(2), scaled)
    assert p == 4.0 * sum_of_monomial_squares(2, 1)


def test_monomial_tuple_sphere_bound(rng):
    # |m_d(s)|_2 <= 1 on 1000 random unit points for every d <= 8
    pts = rng.standard_normal((1000, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    for d in range(1, 9):
        basis = square_basis(COMMUTATIVE, 3, d)
        sq = np.zeros(len(pts))
        for t in basis.terms:
            sq += (pts ** np.array(t)).prod(axis=1) ** 2
        assert np.sqrt(sq.max()) <= 1.0 + 1e-12


def test_gram_evaluation_bounded_by_spectral_norm(rng):
    basis = square_basis(COMMUTATIVE, 3, 2)
    pts = sphere_lattice(3, 500)
    for _ in range(5):
        M = random_hermitian(rng, basis.size)
        vals = np.abs(gram_map(M, basis).evaluate_batch(pts))
        assert vals.max() <= schatten_norm(M, math.inf) + 1e-9


def test_constraints_json_roundtrip(rng):
    a, basis = random_sos(rng, FREE, 2, 2, 2)
    cons = build_constraints(a, basis)
    clone = GramConstraints.from_json(cons.to_json())
    assert clone.k == cons.k
    M = random_hermitian(rng, basis.size)
    assert np.allclose(clone.apply(M), cons.apply(M), atol=1e-12)
    assert np.allclose(clone.targets, cons.targets, atol=0)
