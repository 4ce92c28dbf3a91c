"""Square-space bases, the Gram map, and its constraint-matrix form.

A basis v = (v_1, ..., v_D) of the homogeneous degree-d component induces the
Gram map M |-> sum_ij m_ij v_i* v_j.  `build_constraints` rewrites the fiber
{G(M) = a} as real-valued trace equations tr(A_l M) = lambda_l over a
Hermitian basis of the product space, which is what the SDP layer consumes.
In the free flavor the Gram map is a bijection and `gram_preimage_free`
inverts it by splitting each word in the middle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product as _iproduct
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from .poly import (
    COMMUTATIVE,
    FREE,
    COEFF_DROP_TOL,
    DimensionMismatchError,
    FlavorMismatchError,
    Polynomial,
    Term,
    _check_flavor,
    compositions,
    involute_term,
    multiply_terms,
    term_sort_key,
)

DEFAULT_BASIS_CAP = 100_000


class BasisSizeError(ValueError):
    """Requested basis exceeds the configured entry cap."""


class NoCertifiedBoundError(ValueError):
    """No certified operator-norm constant exists for this basis/norm pair."""


class NotHermitianError(ValueError):
    """Input polynomial or matrix is not Hermitian within tolerance."""


def basis_size(flavor: str, n_vars: int, degree: int) -> int:
    _check_flavor(flavor)
    if flavor == COMMUTATIVE:
        return math.comb(degree + n_vars - 1, n_vars - 1)
    return n_vars ** degree


def _enumerate_terms(flavor: str, n_vars: int, degree: int) -> tuple[Term, ...]:
    if flavor == COMMUTATIVE:
        terms: Iterable[Term] = compositions(degree, n_vars)
    else:
        terms = _iproduct(range(n_vars), repeat=degree)
    return tuple(sorted(terms, key=lambda t: term_sort_key(flavor, t)))


@dataclass(frozen=True)
class SquareBasis:
    """Ordered basis of the homogeneous degree-d component whose squares are taken.

    `scale` multiplies every element; only scale == 1 bases are canonical and
    carry certified operator-norm constants.
    """

    flavor: str
    n_vars: int
    degree: int
    terms: tuple[Term, ...]
    scale: float = 1.0

    def __post_init__(self):
        _check_flavor(self.flavor)
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("basis terms must be pairwise distinct")

    @property
    def size(self) -> int:
        return len(self.terms)

    @cached_property
    def index(self) -> dict[Term, int]:
        return {t: i for i, t in enumerate(self.terms)}

    def element(self, i: int) -> Polynomial:
        return Polynomial(self.flavor, self.n_vars, {self.terms[i]: self.scale})

    @cached_property
    def _products(self):
        """All products v_i* v_j: distinct product terms plus a flat cell map."""
        D = self.size
        prod_index: dict[Term, int] = {}
        prod_terms: list[Term] = []
        cell_to_prod = np.empty(D * D, dtype=np.int64)
        invol = [involute_term(self.flavor, t) for t in self.terms]
        for i in range(D):
            vi = invol[i]
            for j in range(D):
                t = multiply_terms(self.flavor, vi, self.terms[j])
                idx = prod_index.get(t)
                if idx is None:
                    idx = len(prod_terms)
                    prod_index[t] = idx
                    prod_terms.append(t)
                cell_to_prod[i * D + j] = idx
        return tuple(prod_terms), prod_index, cell_to_prod

    @property
    def product_terms(self) -> tuple[Term, ...]:
        return self._products[0]

    def is_canonical(self) -> bool:
        return (self.scale == 1.0
                and self.terms == _enumerate_terms(self.flavor, self.n_vars, self.degree))


def square_basis(flavor: str, n_vars: int, degree: int,
                 max_size: int = DEFAULT_BASIS_CAP) -> SquareBasis:
    """Complete canonical basis of the homogeneous degree-d component."""
    _check_flavor(flavor)
    if n_vars < 1:
        raise ValueError("n_vars must be >= 1")
    if degree < 0:
        raise ValueError("degree must be >= 0")
    size = basis_size(flavor, n_vars, degree)
    if size > max_size:
        raise BasisSizeError(
            f"basis would have {size} entries, exceeding the cap of {max_size}")
    return SquareBasis(flavor, n_vars, degree,
                       _enumerate_terms(flavor, n_vars, degree))


def gram_map(M: np.ndarray, basis: SquareBasis) -> Polynomial:
    """The polynomial sum_ij m_ij v_i* v_j; *-linear in M."""
    M = np.asarray(M, dtype=complex)
    D = basis.size
    if M.shape != (D, D):
        raise DimensionMismatchError(
            f"matrix shape {M.shape} does not match basis size {D}")
    prod_terms, _, cell_to_prod = basis._products
    flat = M.reshape(-1) * basis.scale ** 2
    re = np.bincount(cell_to_prod, weights=flat.real, minlength=len(prod_terms))
    im = np.bincount(cell_to_prod, weights=flat.imag, minlength=len(prod_terms))
    coeffs = {}
    for idx, term in enumerate(prod_terms):
        c = complex(re[idx], im[idx])
        if abs(c) >= COEFF_DROP_TOL:
            coeffs[term] = c
    return Polynomial._raw(basis.flavor, basis.n_vars, coeffs)


def gram_preimage_free(p: Polynomial, d: int) -> np.ndarray:
    """The unique Gram matrix of a free homogeneous degree-2d polynomial.

    Every word of length 2d splits uniquely into two halves, so the Gram map
    on the word basis is a bijection; the preimage is read off coefficient by
    coefficient and is Hermitian exactly when p is.
    """
    if p.flavor != FREE:
        raise FlavorMismatchError("gram_preimage_free takes a free polynomial")
    if not p.is_hermitian():
        raise NotHermitianError("polynomial is not Hermitian")
    basis = square_basis(FREE, p.n_vars, d)
    D = basis.size
    M = np.zeros((D, D), dtype=complex)
    index = basis.index
    for word, c in p._coeffs.items():
        if len(word) != 2 * d:
            raise ValueError(
                f"term of degree {len(word)} in a polynomial expected homogeneous of degree {2 * d}")
        left, right = word[:d], word[d:]
        M[index[left[::-1]], index[right]] = c
    return M


# -- constraint form ----------------------------------------------------------

@dataclass(frozen=True)
class HermitianBasisElement:
    """One element of the Hermitian product basis w.

    kind "self": omega = tau (self-conjugate term).
    kind "re":   omega = tau + tau*.
    kind "im":   omega = i(tau - tau*).
    """

    kind: str
    term: Term

    def polynomial(self, flavor: str, n_vars: int) -> Polynomial:
        tau = self.term
        if self.kind == "self":
            return Polynomial(flavor, n_vars, {tau: 1.0})
        conj = involute_term(flavor, tau)
        if self.kind == "re":
            return Polynomial(flavor, n_vars, {tau: 1.0, conj: 1.0})
        return Polynomial(flavor, n_vars, {tau: 1j, conj: -1j})


class GramConstraints:
    """Trace equations tr(A_l M) = lambda_l encoding G_v(M) = a.

    The A_l are Hermitian with pairwise disjoint or orthogonal supports, so
    the normal system <A_l, A_m> is diagonal for canonical bases; a Cholesky
    fallback covers externally supplied systems.
    """

    def __init__(self, basis: SquareBasis, omegas: tuple[HermitianBasisElement, ...],
                 targets: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                 vals: np.ndarray, seg: np.ndarray):
        self.basis = basis
        self.omegas = omegas
        self.targets = np.asarray(targets, dtype=float)
        self.rows = rows
        self.cols = cols
        self.vals = vals
        self.seg = seg
        self.dim = basis.size

    @property
    def k(self) -> int:
        """Number of real-valued constraints (= dim_C of the product space)."""
        return len(self.omegas)

    def apply(self, M: np.ndarray) -> np.ndarray:
        """The vector (tr(A_l M))_l; real for Hermitian M."""
        contrib = self.vals * M[self.cols, self.rows]
        return np.bincount(self.seg, weights=contrib.real, minlength=self.k)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """sum_l y_l A_l for real y; Hermitian by construction."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        np.add.at(out, (self.rows, self.cols), self.vals * np.asarray(y)[self.seg])
        return out

    def constraint_matrix(self, l: int) -> np.ndarray:
        e = np.zeros(self.k)
        e[l] = 1.0
        return self.adjoint(e)

    def omega_polynomial(self, l: int) -> Polynomial:
        return self.omegas[l].polynomial(self.basis.flavor, self.basis.n_vars)

    def residual(self, M: np.ndarray) -> float:
        return float(np.linalg.norm(self.apply(M) - self.targets))

    @cached_property
    def _normal_solver(self):
        S = sp.csr_matrix(
            (self.vals, (self.seg, self.rows * self.dim + self.cols)),
            shape=(self.k, self.dim * self.dim))
        G = (S @ S.conj().T).toarray().real
        diag = np.diag(G).copy()
        off = G - np.diag(diag)
        if np.abs(off).max(initial=0.0) <= 1e-12 * max(diag.max(initial=1.0), 1.0):
            return ("diag", diag)
        return ("chol", cho_factor(G))

    def solve_normal(self, rhs: np.ndarray) -> np.ndarray:
        """Solve <A, A*> mu = rhs (the constraint Gram system)."""
        kind, data = self._normal_solver
        if kind == "diag":
            return rhs / data
        return cho_solve(data, rhs)

    def project_affine(self, W: np.ndarray) -> np.ndarray:
        """Orthogonal projection of Hermitian W onto {M : tr(A_l M) = lambda_l}."""
        mu = self.solve_normal(self.apply(W) - self.targets)
        return W - self.adjoint(mu)

    # -- JSON interchange (matrices in coordinate form) -----------------------

    def to_dict(self) -> dict:
        groups: list[dict] = []
        for l in range(self.k):
            sel = self.seg == l
            entries = [[int(r), int(c), v.real, v.imag]
                       for r, c, v in zip(self.rows[sel], self.cols[sel], self.vals[sel])]
            om = self.omegas[l]
            groups.append({
                "omega": {"kind": om.kind, "term": _encode_term(self.basis.flavor, om.term)},
                "target": float(self.targets[l]),
                "entries": entries,
            })
        return {
            "flavor": self.basis.flavor,
            "n_vars": self.basis.n_vars,
            "degree": self.basis.degree,
            "dim": self.dim,
            "scale": self.basis.scale,
            "constraints": groups,
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "GramConstraints":
        basis = SquareBasis(
            data["flavor"], int(data["n_vars"]), int(data["degree"]),
            _enumerate_terms(data["flavor"], int(data["n_vars"]), int(data["degree"])),
            float(data.get("scale", 1.0)))
        if basis.size != int(data["dim"]):
            raise ValueError("dim does not match the canonical basis size")
        omegas, targets = [], []
        rows, cols, vals, seg = [], [], [], []
        for l, group in enumerate(data["constraints"]):
            om = group["omega"]
            omegas.append(HermitianBasisElement(
                om["kind"], _decode_term(basis.flavor, om["term"])))
            targets.append(float(group["target"]))
            for r, c, re, im in group["entries"]:
                rows.append(int(r))
                cols.append(int(c))
                vals.append(complex(re, im))
                seg.append(l)
        return cls(basis, tuple(omegas), np.array(targets, dtype=float),
                   np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                   np.array(vals, dtype=complex), np.array(seg, dtype=np.int64))

    @classmethod
    def from_json(cls, text: str) -> "GramConstraints":
        return cls.from_dict(json.loads(text))


def _encode_term(flavor: str, term: Term):
    if flavor == COMMUTATIVE:
        return list(term)
    return " ".join(f"z{s + 1}" for s in term)


def _decode_term(flavor: str, enc) -> Term:
    if flavor == COMMUTATIVE:
        return tuple(int(e) for e in enc)
    return tuple(int(tok[1:]) - 1 for tok in enc.split())


def build_constraints(a: Polynomial, basis: SquareBasis,
                      hermitian_tol: float = 1e-12) -> GramConstraints:
    """Constraint form of the fiber over a: M is a Gram matrix of a iff
    tr(A_l M) = lambda_l for all l.

    The product basis pairs each non-self-conjugate term tau with tau* into
    the Hermitian combinations tau + tau* and i(tau - tau*), so every target
    is real and the constraint count equals dim_C(V*V).
    """
    if a.flavor != basis.flavor or a.n_vars != basis.n_vars:
        raise FlavorMismatchError("polynomial and basis live in different algebras")
    if not a.is_hermitian(hermitian_tol):
        raise NotHermitianError("polynomial is not Hermitian")
    if a and (not a.is_homogeneous() or a.degree() != 2 * basis.degree):
        raise ValueError(
            f"polynomial must be homogeneous of degree {2 * basis.degree}")
    prod_terms, prod_index, cell_to_prod = basis._products
    for t in a._coeffs:
        if t not in prod_index:
            raise ValueError(f"term {t} lies outside the product space V*V")

    D = basis.size
    s2 = basis.scale ** 2
    # cells grouped by product term
    order = np.argsort(cell_to_prod, kind="stable")
    bounds = np.searchsorted(cell_to_prod[order], np.arange(len(prod_terms) + 1))
    cell_i, cell_j = np.divmod(order, D)

    conj_of = np.array([prod_index[involute_term(basis.flavor, t)]
                        for t in prod_terms])

    omegas: list[HermitianBasisElement] = []
    targets: list[float] = []
    rows_parts, cols_parts, vals_parts, seg_parts = [], [], [], []

    def emit(kind: str, tau_idx: int, target: float,
             idx_list: list[np.ndarray], val_list: list[np.ndarray]):
        l = len(omegas)
        omegas.append(HermitianBasisElement(kind, prod_terms[tau_idx]))
        targets.append(target)
        for idx, vals in zip(idx_list, val_list):
            # A[j, i] entries for cells (i, j): tr(A M) = sum val * m_ij
            rows_parts.append(cell_j[idx])
            cols_parts.append(cell_i[idx])
            vals_parts.append(vals)
            seg_parts.append(np.full(idx.shape, l, dtype=np.int64))

    for t_idx in range(len(prod_terms)):
        c_idx = int(conj_of[t_idx])
        sel = np.arange(bounds[t_idx], bounds[t_idx + 1])
        a_tau = a._coeffs.get(prod_terms[t_idx], 0.0)
        if c_idx == t_idx:
            emit("self", t_idx, float(np.real(a_tau)),
                 [sel], [np.full(sel.shape, s2, dtype=complex)])
        elif t_idx < c_idx:
            sel_c = np.arange(bounds[c_idx], bounds[c_idx + 1])
            emit("re", t_idx, float(np.real(a_tau)),
                 [sel, sel_c],
                 [np.full(sel.shape, s2 / 2, dtype=complex),
                  np.full(sel_c.shape, s2 / 2, dtype=complex)])
            emit("im", t_idx, float(np.imag(a_tau)),
                 [sel, sel_c],
                 [np.full(sel.shape, -1j * s2 / 2, dtype=complex),
                  np.full(sel_c.shape, 1j * s2 / 2, dtype=complex)])

    return GramConstraints(
        basis, tuple(omegas), np.array(targets, dtype=float),
        np.concatenate(rows_parts), np.concatenate(cols_parts),
        np.concatenate(vals_parts), np.concatenate(seg_parts))


def operator_norm_bound(basis: SquareBasis) -> float:
    """Certified operator-norm constant of the Gram map for this basis.

    Equals 1 in exactly two cases: the canonical monomial basis mapping into
    continuous functions on the unit sphere with the sup-norm, and the
    canonical word basis with the Schatten-p-inherited coefficient norms.
    Anything else (e.g. a rescaled basis) has no certified constant here.
    """
    if not basis.is_canonical():
        raise NoCertifiedBoundError(
            "no certified operator-norm bound for a non-canonical basis "
            f"(scale={basis.scale})")
    return 1.0
