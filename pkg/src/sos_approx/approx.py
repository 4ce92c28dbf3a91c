"""End-to-end approximate decomposition pipelines and bound calculators.

Each pipeline produces a SosCertificate: explicit squares from the basis
subspace, the achieved error in a declared norm, and the theoretical square
count the truncation argument guarantees.  Free inputs never need the SDP
(the Gram matrix is read off by splitting words); commutative inputs go
through the trace-minimal Gram matrix and the spectral-norm truncation,
whose error transfers to the sphere sup-norm with constant 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg
from .gram import (
    SquareBasis,
    build_constraints,
    gram_map,
    gram_preimage_free,
    operator_norm_bound,
    square_basis,
)
from .poly import COMMUTATIVE, FREE, FlavorMismatchError, Polynomial, from_dict as poly_from_dict, to_dict as poly_to_dict
from .sdp import (
    RankReductionError,
    SolverError,
    SolverOptions,
    SolveStatus,
    rank_reduce,
    sos_feasible,
    sos_norm,
)

COEFF_2_NORM = "coeff-2-norm"
SUP_SPHERE = "sup-sphere"


class NotSosError(ValueError):
    """Input is not a sum of Hermitian squares from the requested subspace."""

    def __init__(self, message: str, witness_eigenvalue: float | None = None,
                 certificate=None):
        super().__init__(message)
        self.witness_eigenvalue = witness_eigenvalue
        self.certificate = certificate


def strict_cap(bound: float) -> int:
    """Largest integer strictly below `bound` (values snapped to nearby integers).

    "fewer than bound" bounds become this integer cap; -1 means even zero
    squares are not covered by the bound (only possible for bound <= 0).
    """
    snapped = round(bound)
    if abs(bound - snapped) <= 1e-9 * max(1.0, abs(snapped)):
        bound = float(snapped)
    return math.ceil(bound) - 1


@dataclass
class SosCertificate:
    """An approximate decomposition a' = sum q_i* q_i near a, with guarantees."""

    input: Polynomial
    approximation: Polynomial
    squares: list[np.ndarray]
    basis: SquareBasis
    error: float
    norm: str                      # COEFF_2_NORM or SUP_SPHERE
    eps: float
    theoretical_bound: float
    allowed_rank: int
    sos_norm_value: float
    schatten_p: float              # truncation route
    solver_iterations: int = 0

    @property
    def rank(self) -> int:
        return len(self.squares)

    def square_polynomials(self) -> list[Polynomial]:
        out = []
        for c in self.squares:
            coeffs = {t: v for t, v in zip(self.basis.terms, c) if v != 0}
            out.append(Polynomial(self.basis.flavor, self.basis.n_vars, coeffs))
        return out

    def reassembled(self) -> Polynomial:
        total = Polynomial.zero(self.basis.flavor, self.basis.n_vars)
        for q in self.square_polynomials():
            total = total + q.involution() * q
        return total

    def verify(self, sample_points: int = 0) -> list[str]:
        """Re-check every certificate invariant; returns a list of violations."""
        problems = []
        anorm = self.input.coeff_two_norm()
        resid = (self.reassembled() - self.approximation).coeff_two_norm()
        if resid > 1e-8 * (1.0 + anorm):
            problems.append(f"squares do not reassemble the approximation: {resid:.3e}")
        if self.rank > 0 and not self.rank < self.theoretical_bound:
            problems.append(
                f"square count {self.rank} not below bound {self.theoretical_bound}")
        if self.error > self.eps * (1.0 + 1e-12) + 1e-15:
            problems.append(f"declared error {self.error} exceeds eps {self.eps}")
        if self.norm == COEFF_2_NORM:
            measured = (self.input - self.approximation).coeff_two_norm()
            if measured > self.error * (1.0 + 1e-9) + 1e-12:
                problems.append(
                    f"coefficient error {measured:.3e} exceeds declared {self.error:.3e}")
        elif self.norm == SUP_SPHERE and sample_points:
            from .poly import sphere_lattice
            pts = sphere_lattice(self.basis.n_vars, sample_points)
            diff = self.input - self.approximation
            emp = float(np.abs(diff.evaluate_batch(pts)).max(initial=0.0))
            if emp > self.error * (1.0 + 1e-9) + 1e-9:
                problems.append(
                    f"sampled sphere error {emp:.3e} exceeds certified {self.error:.3e}")
        return problems

    def to_dict(self) -> dict:
        return {
            "input": poly_to_dict(self.input),
            "approximation": poly_to_dict(self.approximation),
            "squares": [[[v.real, v.imag] for v in c] for c in self.squares],
            "basis": {"flavor": self.basis.flavor, "n_vars": self.basis.n_vars,
                      "degree": self.basis.degree},
            "error": self.error,
            "norm": self.norm,
            "eps": self.eps,
            "theoretical_bound": self.theoretical_bound,
            "allowed_rank": self.allowed_rank,
            "sos_norm_value": self.sos_norm_value,
            "schatten_p": "inf" if math.isinf(self.schatten_p) else self.schatten_p,
            "solver_iterations": self.solver_iterations,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "SosCertificate":
        b = data["basis"]
        basis = square_basis(b["flavor"], int(b["n_vars"]), int(b["degree"]))
        squares = [np.array([complex(re, im) for re, im in c], dtype=complex)
                   for c in data["squares"]]
        p_raw = data["schatten_p"]
        return cls(
            input=poly_from_dict(data["input"]),
            approximation=poly_from_dict(data["approximation"]),
            squares=squares, basis=basis,
            error=float(data["error"]), norm=data["norm"], eps=float(data["eps"]),
            theoretical_bound=float(data["theoretical_bound"]),
            allowed_rank=int(data["allowed_rank"]),
            sos_norm_value=float(data["sos_norm_value"]),
            schatten_p=math.inf if p_raw == "inf" else float(p_raw),
            solver_iterations=int(data.get("solver_iterations", 0)))


def _squares_from_spectrum(dec: linalg.SpectralDecomposition, keep: int,
                           cutoff_rel: float = 1e-14) -> list[np.ndarray]:
    # gram_map(c c*) = q* q for q with coefficients conj(c), so certificates
    # store the conjugated factors: they are the squares' coefficient vectors
    w, V = dec.eigenvalues, dec.eigenvectors
    top = w[0] if len(w) else 0.0
    return [np.sqrt(w[i]) * V[:, i].conj() for i in range(min(keep, len(w)))
            if w[i] > cutoff_rel * max(top, 1e-300)]


def _assemble(a: Polynomial, basis: SquareBasis, dec, keep: int, error: float,
              norm: str, eps: float, bound: float, sos_value: float,
              p_route: float, iterations: int) -> SosCertificate:
    squares = _squares_from_spectrum(dec, keep)
    kept = np.zeros(len(dec.eigenvalues), dtype=bool)
    kept[:keep] = True
    approx_poly = gram_map(dec.matrix_from(kept), basis)
    return SosCertificate(
        input=a, approximation=approx_poly, squares=squares, basis=basis,
        error=error, norm=norm, eps=eps, theoretical_bound=bound,
        allowed_rank=strict_cap(bound), sos_norm_value=sos_value,
        schatten_p=p_route, solver_iterations=iterations)


def _free_routes(a: Polynomial, basis: SquareBasis, dec, eps: float,
                 sos_value: float, iterations: int) -> SosCertificate:
    """Both certified truncation routes; fewest squares meeting eps wins.

    Schatten-2 with the proof's exact count always meets eps in the
    coefficient 2-norm (the Gram map is an isometry there); the deeper
    Schatten-inf truncation is used only when its measured coefficient
    error still fits.
    """
    w = dec.eigenvalues
    trace = float(w.sum())
    npos = int((w > 0).sum())
    k2 = min(linalg.truncation_count(trace, eps, 2.0), npos)
    kinf = linalg.count_above(w, eps)
    tail = np.sqrt(np.cumsum((w ** 2)[::-1])[::-1])  # tail[i] = ||w[i:]||_2

    def tail_err(k: int) -> float:
        return float(tail[k]) if k < len(w) else 0.0

    err2, errinf = tail_err(k2), tail_err(kinf)
    bound = (sos_value / eps) ** 2
    if errinf <= eps and kinf < k2:
        return _assemble(a, basis, dec, kinf, errinf, COEFF_2_NORM, eps,
                         bound, sos_value, math.inf, iterations)
    return _assemble(a, basis, dec, k2, err2, COEFF_2_NORM, eps,
                     bound, sos_value, 2.0, iterations)


def approximate(a: Polynomial, basis: SquareBasis, eps: float,
                options: SolverOptions | None = None) -> SosCertificate:
    """Approximate a by a short sum of squares within eps.

    Pipeline: trace-minimal Gram matrix, spectral truncation at the certified
    operator-norm level, rank-one factors.  Commutative inputs are measured
    in the sphere sup-norm (certified through the spectral norm); free inputs
    in the coefficient 2-norm.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    opnorm = operator_norm_bound(basis)
    # membership and the trace minimum come from one solve: the solver runs
    # the same feasibility phase and carries the separating certificate
    value, sol = sos_norm(a, basis, options)
    if sol.status is SolveStatus.INFEASIBLE:
        raise NotSosError("input is not a sum of squares from this basis",
                          certificate=sol.certificate)
    if sol.status is not SolveStatus.OPTIMAL:
        raise SolverError("sos-norm solve failed: " + sol.message, sol)
    dec = linalg.clipped_spectrum(sol.matrix)
    if basis.flavor == FREE:
        return _free_routes(a, basis, dec, eps, value, sol.iterations)
    w = dec.eigenvalues
    keep = linalg.count_above(w, eps / opnorm)
    error = float(w[keep]) * opnorm if keep < len(w) else 0.0
    bound = opnorm * value / eps
    return _assemble(a, basis, dec, keep, error, SUP_SPHERE, eps, bound,
                     value, math.inf, sol.iterations)


def approximate_free(p: Polynomial, eps: float,
                     options: SolverOptions | None = None) -> SosCertificate:
    """Certified approximation of a free sum of squares, no SDP involved.

    The unique Gram matrix is read off the coefficients; its trace equals the
    sos-norm.  Rejects inputs whose Gram matrix is not PSD, reporting the
    offending eigenvalue.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if p.flavor != FREE:
        raise FlavorMismatchError("approximate_free takes a free polynomial")
    if p.degree() % 2 != 0 or not p.is_homogeneous():
        raise ValueError("input must be homogeneous of even degree")
    d = p.degree() // 2
    M = gram_preimage_free(p, d)
    basis = square_basis(FREE, p.n_vars, d)
    try:
        dec = linalg.clipped_spectrum(M)
    except linalg.NotPsdError as exc:
        raise NotSosError(
            f"unique Gram matrix is not PSD (eigenvalue {exc.min_eigenvalue:.3e})",
            witness_eigenvalue=exc.min_eigenvalue) from exc
    sos_value = float(dec.eigenvalues.sum())
    return _free_routes(p, basis, dec, eps, sos_value, 0)


def approximate_sphere(p: Polynomial, eps: float,
                       options: SolverOptions | None = None) -> SosCertificate:
    """Sup-norm-on-the-sphere approximation pipeline for commutative inputs."""
    if p.flavor != COMMUTATIVE:
        raise FlavorMismatchError("approximate_sphere takes a commutative polynomial")
    if p.degree() % 2 != 0 or not p.is_homogeneous():
        raise ValueError("input must be homogeneous of even degree")
    basis = square_basis(COMMUTATIVE, p.n_vars, p.degree() // 2)
    return approximate(p, basis, eps, options)


@dataclass
class PythagorasWitness:
    """An exact decomposition with at most ceil(sqrt(dim V*V)) squares."""

    count: int
    squares: list[np.ndarray]
    basis: SquareBasis
    bound: int
    residual: float
    message: str = ""

    def square_polynomials(self) -> list[Polynomial]:
        out = []
        for c in self.squares:
            coeffs = {t: v for t, v in zip(self.basis.terms, c) if v != 0}
            out.append(Polynomial(self.basis.flavor, self.basis.n_vars, coeffs))
        return out


def pythagoras_upper_bound(a: Polynomial, basis: SquareBasis,
                           options: SolverOptions | None = None) -> PythagorasWitness:
    """Exact decomposition of a with at most ceil(sqrt(dim V*V)) squares.

    Commutative route: feasibility witness, then rank reduction over the
    constraint system.  Free route: the Gram matrix is unique, so the answer
    is its rank and no reduction is possible.
    """
    options = options or SolverOptions()
    k_vv = len(basis.product_terms)
    bound = math.isqrt(k_vv - 1) + 1 if k_vv > 0 else 0  # ceil(sqrt(k))
    if basis.flavor == FREE:
        M = gram_preimage_free(a, basis.degree)
        try:
            linalg.clipped_spectrum(M)
        except linalg.NotPsdError as exc:
            raise NotSosError(
                f"unique Gram matrix is not PSD (eigenvalue {exc.min_eigenvalue:.3e})",
                witness_eigenvalue=exc.min_eigenvalue) from exc
        squares = [c.conj() for c in linalg.low_rank_factor(M)]
        message = "free Gram matrix is unique; rank cannot be reduced"
    else:
        # the witness residual flows straight into the reassembly residual,
        # so ask the feasibility phase for extra digits
        options = replace(options, tol_primal=min(options.tol_primal, 1e-8))
        feas = sos_feasible(a, basis, options)
        if not feas:
            raise NotSosError("input is not a sum of squares from this basis",
                              certificate=feas.certificate)
        constraints = build_constraints(a, basis)
        message = ""
        try:
            M0 = rank_reduce(feas.witness, constraints, bound, options)
        except RankReductionError as exc:
            M0 = exc.matrix
            message = f"rank reduction stalled at rank {exc.achieved_rank}: {exc}"
        squares = [c.conj() for c in linalg.low_rank_factor(M0)]
    witness = PythagorasWitness(len(squares), squares, basis, bound, 0.0, message)
    witness.residual = (witness_reassembly(witness) - a).coeff_two_norm()
    return witness


def witness_reassembly(witness: PythagorasWitness) -> Polynomial:
    total = Polynomial.zero(witness.basis.flavor, witness.basis.n_vars)
    for q in witness.square_polynomials():
        total = total + q.involution() * q
    return total


@dataclass
class BoundReport:
    """Dimension counts and square-count bounds; pure arithmetic, no solving."""

    flavor: str
    n_vars: int
    degree: int
    eps: float
    sos_norm_value: float
    dim_v: int = field(init=False)
    dim_vv: int = field(init=False)
    general_bound: int = field(init=False)
    sqrt_dim_bound: int = field(init=False)
    theorem_bound: float = field(init=False)
    theorem_allowed_rank: int = field(init=False)
    min_certified_bound: float = field(init=False)

    def __post_init__(self):
        n, d = self.n_vars, self.degree
        if self.flavor == COMMUTATIVE:
            self.dim_v = math.comb(d + n - 1, n - 1)
            self.dim_vv = math.comb(2 * d + n - 1, n - 1)
        else:
            self.dim_v = n ** d
            self.dim_vv = n ** (2 * d)
        self.general_bound = self.dim_v
        self.sqrt_dim_bound = math.isqrt(self.dim_vv - 1) + 1 if self.dim_vv else 0
        ratio = self.sos_norm_value / self.eps
        if self.flavor == COMMUTATIVE:
            # sup-norm route: operator norm 1 at p = inf
            self.theorem_bound = ratio
            self.min_certified_bound = ratio
        else:
            self.theorem_bound = ratio ** 2
            # every Schatten route is certified in the free flavor; the
            # exponent p/(p-1) is minimized at p = inf once ratio > 1
            self.min_certified_bound = ratio if ratio > 1.0 else ratio ** 2
        self.theorem_allowed_rank = strict_cap(self.theorem_bound)

    def to_dict(self) -> dict:
        return {
            "flavor": self.flavor, "n_vars": self.n_vars, "degree": self.degree,
            "eps": self.eps, "sos_norm_value": self.sos_norm_value,
            "dim_v": self.dim_v, "dim_vv": self.dim_vv,
            "general_bound": self.general_bound,
            "sqrt_dim_bound": self.sqrt_dim_bound,
            "theorem_bound": self.theorem_bound,
            "theorem_allowed_rank": self.theorem_allowed_rank,
            "min_certified_bound": self.min_certified_bound,
        }


def bound_report(flavor: str, n_vars: int, degree: int, eps: float,
                 sos_norm_value: float) -> BoundReport:
    if eps <= 0:
        raise ValueError("eps must be positive")
    if n_vars < 1 or degree < 0:
        raise ValueError("invalid dimensions")
    return BoundReport(flavor, n_vars, degree, eps, sos_norm_value)
