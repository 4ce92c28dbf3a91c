"""Trace-minimization SDP for the sos-norm, duality, and rank reduction.

The solver is a first-order operator-splitting scheme: each iteration
projects onto the affine subspace {tr(A_l M) = lambda_l} (exactly, through
the cached constraint Gram system) and onto the PSD cone (one Hermitian
eigendecomposition), with the trace objective folded into the augmented
splitting.  A plain alternating-projection phase handles feasibility
testing and produces Farkas-type infeasibility certificates from the
displacement vector between the two sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg

from . import linalg
from .gram import GramConstraints, build_constraints, SquareBasis
from .poly import Polynomial


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max-iter"


class SolverError(RuntimeError):
    """Solver could not reach a conclusive answer."""

    def __init__(self, message: str, solution: "SdpSolution | None" = None):
        super().__init__(message)
        self.solution = solution


class RankReductionError(RuntimeError):
    """Rank reduction stalled; carries the best feasible matrix found."""

    def __init__(self, message: str, matrix: np.ndarray, achieved_rank: int):
        super().__init__(message)
        self.matrix = matrix
        self.achieved_rank = achieved_rank


@dataclass
class SolverOptions:
    """Tunables for the splitting solver; all overridable from config/CLI."""

    tol_primal: float = 1e-7        # constraint residual, relative to 1 + |targets|
    tol_gap: float = 1e-6           # duality gap, relative to 1 + |objective|
    max_iter: int = 50_000
    feas_max_iter: int = 20_000
    check_every: int = 25
    rho: float = 1.0
    over_relax: float = 1.6
    adapt_rho: bool = True
    stall_window: int = 400         # feasibility iterations before testing a certificate
    certificate_psd_tol: float = 1e-8
    certificate_value_tol: float = 1e-6

    @classmethod
    def from_mapping(cls, data: dict) -> "SolverOptions":
        opts = cls()
        valid = {f.name: f.type for f in fields(cls)}
        for key, raw in data.items():
            name = key.replace("-", "_")
            if name not in valid:
                raise ValueError(f"unknown solver option {key!r}")
            current = getattr(opts, name)
            if isinstance(current, bool):
                value: object = str(raw).strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                value = int(raw)
            else:
                value = float(raw)
            setattr(opts, name, value)
        return opts


def parse_config_file(path: str) -> dict[str, str]:
    """Plain key = value lines; # starts a comment."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


@dataclass
class DualFunctional:
    """A *-linear functional on the product space, given by its values on w."""

    values: np.ndarray
    objective: float            # phi(a) = targets . values
    psd_margin: float           # lambda_min(I - Phi); >= 0 means feasible for (D)
    sample_margin: float        # min over sampled unit v of |v|^2 - phi(v* v)


@dataclass
class SdpSolution:
    matrix: np.ndarray
    objective: float
    dual: np.ndarray
    dual_objective: float
    primal_residual: float
    gap: float
    status: SolveStatus
    iterations: int
    message: str = ""
    certificate: Optional[DualFunctional] = None

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "dual_objective": self.dual_objective,
            "primal_residual": self.primal_residual,
            "gap": self.gap,
            "status": self.status.value,
            "iterations": self.iterations,
            "message": self.message,
            "matrix": linalg.hermitian_to_dict(self.matrix, drop_tol=1e-14),
        }


@dataclass
class FeasibilityResult:
    feasible: bool
    witness: Optional[np.ndarray]
    certificate: Optional[DualFunctional]
    residual: float
    iterations: int

    def __bool__(self) -> bool:
        return self.feasible


def _validate_input(a: Polynomial, basis: SquareBasis) -> None:
    if a and (not a.is_homogeneous() or a.degree() != 2 * basis.degree):
        raise ValueError(f"polynomial must be homogeneous of degree {2 * basis.degree}")


def _dual_shifted(constraints: GramConstraints, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Scale y so that sum_l y_l A_l <= I holds, then evaluate the bound."""
    if not np.any(y):
        return y, 0.0
    Phi = constraints.adjoint(y)
    top = float(linalg.eig_hermitian(Phi).eigenvalues[0])
    if top > 1.0:
        y = y / top
    return y, float(constraints.targets @ y)


def _functional_margins(constraints: GramConstraints, y: np.ndarray,
                        samples: int = 64) -> tuple[float, float]:
    Phi = constraints.adjoint(y)
    w = linalg.eig_hermitian(Phi).eigenvalues
    psd_margin = 1.0 - float(w[0]) if len(w) else 1.0
    rng = np.random.default_rng(20240901)
    D = constraints.dim
    worst = math.inf
    for _ in range(samples):
        c = rng.standard_normal(D) + 1j * rng.standard_normal(D)
        c /= np.linalg.norm(c)
        worst = min(worst, 1.0 - float((c.conj() @ Phi @ c).real))
    return psd_margin, worst


def _certificate_from_gap(constraints: GramConstraints, v: np.ndarray,
                          options: SolverOptions) -> Optional[DualFunctional]:
    """Try to turn the affine-to-cone displacement v (<= 0) into a Farkas certificate.

    At the gap the displacement lies in range(A*), giving y with
    sum y_l A_l >= 0 and targets . y < 0; both margins are re-verified
    numerically before the certificate is accepted.
    """
    vnorm = float(np.linalg.norm(v))
    if vnorm <= 0:
        return None
    c = constraints.solve_normal(constraints.apply(v))
    recon = constraints.adjoint(c)
    if float(np.linalg.norm(recon - v)) > 0.25 * vnorm:
        return None
    y = -np.asarray(c, dtype=float) / vnorm
    E = constraints.adjoint(y)
    w = linalg.eig_hermitian(E).eigenvalues
    scale = max(float(np.abs(w).max(initial=0.0)), 1e-30)
    value = float(constraints.targets @ y)
    if w[-1] < -options.certificate_psd_tol * scale:
        return None
    if value > -options.certificate_value_tol * scale * (1.0 + np.linalg.norm(constraints.targets)):
        return None
    return DualFunctional(values=y, objective=value,
                          psd_margin=float(w[-1]), sample_margin=float(w[-1]))


@dataclass
class _PhaseResult:
    """Outcome of the alternating-projection phase."""

    verdict: str                     # "feasible" | "infeasible" | "inconclusive"
    matrix: Optional[np.ndarray]     # PSD iterate (witness if feasible, else warm start)
    certificate: Optional[DualFunctional]
    residual: float
    iterations: int


def _feasibility_phase(constraints: GramConstraints, options: SolverOptions,
                       cap: int) -> _PhaseResult:
    """Alternating projections between the affine fiber and the PSD cone.

    Converges to a point of the intersection when one exists and the sets
    meet transversally; for strongly infeasible systems the displacement
    vector between the sets yields a Farkas certificate.  Thin intersections
    (no Slater point) come back inconclusive and are left to the splitting
    solver, which handles them fine.
    """
    b = constraints.targets
    tol = options.tol_primal * (1.0 + float(np.linalg.norm(b)))
    X = np.zeros((constraints.dim, constraints.dim), dtype=complex)
    best = math.inf
    since_best = 0
    res = math.inf
    it = 0
    for it in range(1, cap + 1):
        Y = constraints.project_affine(X)
        X = linalg.psd_part(Y)
        res = constraints.residual(X)
        if res <= tol:
            return _PhaseResult("feasible", X, None, res, it)
        if res < best * (1.0 - 1e-3):
            best, since_best = res, 0
        else:
            since_best += 1
        if since_best >= options.stall_window and res > 50 * tol:
            cert = _certificate_from_gap(constraints, Y - X, options)
            if cert is not None:
                return _PhaseResult("infeasible", None, cert, res, it)
            since_best = 0
    return _PhaseResult("inconclusive", X, None, res, it)


def _trace_min(constraints: GramConstraints, options: SolverOptions,
               warm: Optional[np.ndarray] = None) -> SdpSolution:
    """ADMM for min tr(M) s.t. tr(A_l M) = lambda_l, M >= 0 (normalized targets)."""
    b = constraints.targets
    bnorm = float(np.linalg.norm(b))
    s = bnorm if bnorm > 1e-300 else 1.0
    bh = b / s
    scaled = GramConstraints(constraints.basis, constraints.omegas, bh,
                             constraints.rows, constraints.cols,
                             constraints.vals, constraints.seg)
    # reuse the cached normal-system factorization; only targets differ
    scaled.__dict__["_normal_solver"] = constraints._normal_solver

    D = constraints.dim
    eye = np.eye(D, dtype=complex)
    rho = options.rho
    alpha = options.over_relax
    Z = (warm / s if warm is not None else np.zeros((D, D))).astype(complex)
    U = np.zeros((D, D), dtype=complex)
    mu = np.zeros(constraints.k)
    tol_primal = options.tol_primal * (1.0 + bnorm)
    y_out = np.zeros(constraints.k)
    dval = 0.0
    pres = math.inf
    gap = math.inf
    it = 0
    for it in range(1, options.max_iter + 1):
        V = Z - U - eye / rho
        mu = scaled.solve_normal(scaled.apply(V) - bh)
        X = V - scaled.adjoint(mu)
        Xr = alpha * X + (1.0 - alpha) * Z
        dec = linalg.eig_hermitian(Xr + U)
        Z_new = dec.matrix_from(dec.eigenvalues > 0.0)
        U = U + Xr - Z_new
        if it % options.check_every == 0 or it == options.max_iter:
            r_split = float(np.linalg.norm(X - Z_new))
            s_dual = rho * float(np.linalg.norm(Z_new - Z))
            Z = Z_new
            pres = s * float(np.linalg.norm(scaled.apply(Z) - bh))
            pval = s * float(np.trace(Z).real)
            y_out, dval_h = _dual_shifted(scaled, -rho * mu)
            dval = s * dval_h
            gap = pval - dval
            if pres <= tol_primal and abs(gap) <= options.tol_gap * (1.0 + abs(pval)):
                return SdpSolution(
                    matrix=s * Z, objective=pval, dual=y_out, dual_objective=dval,
                    primal_residual=pres, gap=gap, status=SolveStatus.OPTIMAL,
                    iterations=it)
            if options.adapt_rho:
                if r_split > 10.0 * s_dual and rho < 1e6:
                    rho *= 2.0
                    U /= 2.0
                elif s_dual > 10.0 * r_split and rho > 1e-6:
                    rho /= 2.0
                    U *= 2.0
        else:
            Z = Z_new
    pval = s * float(np.trace(Z).real)
    return SdpSolution(
        matrix=s * Z, objective=pval, dual=y_out, dual_objective=dval,
        primal_residual=pres, gap=gap, status=SolveStatus.MAX_ITER, iterations=it,
        message=f"iteration cap {options.max_iter} reached "
                f"(residual {pres:.3e}, gap {gap:.3e})")


def sos_norm(a: Polynomial, basis: SquareBasis,
             options: SolverOptions | None = None) -> tuple[float, SdpSolution]:
    """Minimal Gram-matrix trace of a over the PSD cone, with solver witness.

    Returns (value, solution).  status OPTIMAL means the trace is within the
    gap tolerance of the true minimum and gram_map(solution.matrix) matches a
    to the primal tolerance; status INFEASIBLE means a is not a sum of
    squares from this basis (value is NaN, certificate attached); MAX_ITER is
    reported with residuals, never silently coerced.
    """
    options = options or SolverOptions()
    _validate_input(a, basis)
    constraints = build_constraints(a, basis)
    if not np.any(constraints.targets):
        zero = np.zeros((basis.size, basis.size), dtype=complex)
        sol = SdpSolution(zero, 0.0, np.zeros(constraints.k), 0.0, 0.0, 0.0,
                          SolveStatus.OPTIMAL, 0, message="zero polynomial")
        return 0.0, sol
    # cheap warm start; also catches strong infeasibility early
    phase = _feasibility_phase(constraints, options,
                               cap=min(2000, options.feas_max_iter))
    if phase.verdict == "infeasible":
        return math.nan, _infeasible_solution(basis, phase)
    sol = _trace_min(constraints, options, warm=phase.matrix)
    if sol.status is SolveStatus.MAX_ITER:
        # a stalled splitting solve may mean the fiber misses the cone
        phase = _feasibility_phase(constraints, options, cap=options.feas_max_iter)
        if phase.verdict == "infeasible":
            return math.nan, _infeasible_solution(basis, phase)
    return sol.objective, sol


def _infeasible_solution(basis: SquareBasis, phase: _PhaseResult) -> SdpSolution:
    return SdpSolution(
        matrix=np.zeros((basis.size, basis.size), dtype=complex),
        objective=math.nan, dual=phase.certificate.values,
        dual_objective=math.inf, primal_residual=phase.residual, gap=math.inf,
        status=SolveStatus.INFEASIBLE, iterations=phase.iterations,
        message="not a sum of squares from this basis; separating functional "
                "attached (its negation is an improving ray for the dual)",
        certificate=phase.certificate)


def sos_feasible(a: Polynomial, basis: SquareBasis,
                 options: SolverOptions | None = None) -> FeasibilityResult:
    """Membership test for the cone of Hermitian squares over the basis.

    True comes with a PSD Gram witness, False with a separating functional;
    an unresolved solve raises SolverError instead of guessing.
    """
    options = options or SolverOptions()
    _validate_input(a, basis)
    constraints = build_constraints(a, basis)
    if not np.any(constraints.targets):
        return FeasibilityResult(
            True, np.zeros((basis.size, basis.size), dtype=complex), None, 0.0, 0)
    phase = _feasibility_phase(constraints, options, cap=options.feas_max_iter)
    if phase.verdict == "feasible":
        return FeasibilityResult(True, phase.matrix, None, phase.residual,
                                 phase.iterations)
    if phase.verdict == "infeasible":
        return FeasibilityResult(False, None, phase.certificate, phase.residual,
                                 phase.iterations)
    # thin intersection: fall back to the splitting solver for a witness
    sol = _trace_min(constraints, options, warm=phase.matrix)
    if sol.status is SolveStatus.OPTIMAL:
        return FeasibilityResult(True, sol.matrix, None, sol.primal_residual,
                                 phase.iterations + sol.iterations)
    raise SolverError(
        f"feasibility test inconclusive (projection residual {phase.residual:.3e}, "
        f"solver: {sol.message})")


def dual_bound(a: Polynomial, basis: SquareBasis,
               options: SolverOptions | None = None) -> float:
    """Optimal value of the dual program: a certified lower bound on the sos-norm.

    The returned functional value is evaluated after scaling the recovered
    multipliers back into the dual feasible set, so it never overshoots.
    When a admits a positive definite Gram matrix the bound matches the
    sos-norm (strong duality).
    """
    value, sol = sos_norm(a, basis, options)
    if sol.status is SolveStatus.INFEASIBLE:
        return math.inf
    if sol.status is not SolveStatus.OPTIMAL:
        raise SolverError("dual bound unavailable: " + sol.message, sol)
    return max(0.0, sol.dual_objective)


def dual_functional(a: Polynomial, basis: SquareBasis,
                    options: SolverOptions | None = None) -> DualFunctional:
    """The recovered dual optimizer with its feasibility margins."""
    _, sol = sos_norm(a, basis, options)
    if sol.status is not SolveStatus.OPTIMAL:
        raise SolverError("no dual functional: " + sol.message, sol)
    constraints = build_constraints(a, basis)
    psd_margin, sample_margin = _functional_margins(constraints, sol.dual)
    return DualFunctional(values=sol.dual, objective=sol.dual_objective,
                          psd_margin=psd_margin, sample_margin=sample_margin)


# -- rank reduction -------------------------------------------------------------

def rank_reduce(M: np.ndarray, constraints: GramConstraints, target_r: int,
                options: SolverOptions | None = None) -> np.ndarray:
    """Reduce a feasible PSD solution to rank <= target_r, preserving tr(A_l M).

    Requires k <= target_r^2 + 2*target_r, where k counts the real-valued
    constraints after the Hermitian product-basis expansion.  Repeatedly:
    compress to the range space, pick a Hermitian direction orthogonal to all
    compressed constraints (one exists whenever rank^2 > k), and walk to the
    nearest PSD-boundary crossing, which removes at least one eigenvalue.
    """
    options = options or SolverOptions()
    k = constraints.k
    if target_r < 0:
        raise ValueError("target_r must be >= 0")
    if k > target_r * target_r + 2 * target_r:
        raise ValueError(
            f"rank-reduction hypothesis violated: k={k} > r^2+2r={target_r * target_r + 2 * target_r}")
    bscale = 1.0 + float(np.linalg.norm(constraints.targets))
    if constraints.residual(M) > 1e-7 * bscale:
        raise ValueError("matrix does not satisfy the constraints to 1e-7")
    M = linalg.require_hermitian(M)
    for _ in range(M.shape[0] + 1):
        dec = linalg.clipped_spectrum(M)
        w, V = dec.eigenvalues, dec.eigenvectors
        if len(w) == 0 or w[0] <= 0:
            return np.zeros_like(M)
        cut = 1e-9 * w[0]
        live = w > cut
        r = int(live.sum())
        if r <= target_r:
            out = M if bool(live.all()) else dec.matrix_from(live)
            if constraints.residual(out) > 1e-6 * bscale:
                raise RankReductionError(
                    "constraints drifted during reduction", out, r)
            return out
        Vr = V[:, live]
        lam = w[live]
        compressed = [Vr.conj().T @ constraints.constraint_matrix(l) @ Vr
                      for l in range(k)]
        K = np.stack([_herm_to_real_vec(B) for B in compressed])
        null = scipy.linalg.null_space(K)
        if null.shape[1] == 0:
            raise RankReductionError(
                f"no constraint-orthogonal direction at rank {r}", dec.matrix_from(live), r)
        delta = _real_vec_to_herm(null[:, 0], r)
        delta /= np.linalg.norm(delta)
        # boundary crossings of diag(lam) + t*delta from the pencil spectrum
        omega = scipy.linalg.eigh(delta, np.diag(lam), eigvals_only=True)
        t_pos = math.inf
        sign = 1.0
        if omega[0] < -1e-14:
            t_pos = -1.0 / omega[0]
        if omega[-1] > 1e-14 and 1.0 / omega[-1] < t_pos:
            t_pos = 1.0 / omega[-1]
            sign = -1.0
        if not math.isfinite(t_pos):
            raise RankReductionError(
                f"direction produces no boundary crossing at rank {r}",
                dec.matrix_from(live), r)
        core = np.diag(lam).astype(complex) + (sign * t_pos) * delta
        M = Vr @ core @ Vr.conj().T
        M = (M + M.conj().T) / 2.0
    raise RankReductionError("rank reduction did not terminate", M,
                             linalg.numerical_rank(M))


def _herm_to_real_vec(H: np.ndarray) -> np.ndarray:
    """Isometry Her_r -> R^{r^2} (Frobenius inner product to the dot product)."""
    r = H.shape[0]
    iu = np.triu_indices(r, k=1)
    return np.concatenate([
        np.diag(H).real,
        math.sqrt(2.0) * H[iu].real,
        math.sqrt(2.0) * H[iu].imag,
    ])


def _real_vec_to_herm(vec: np.ndarray, r: int) -> np.ndarray:
    iu = np.triu_indices(r, k=1)
    m = len(iu[0])
    H = np.zeros((r, r), dtype=complex)
    H[np.diag_indices(r)] = vec[:r]
    upper = (vec[r:r + m] + 1j * vec[r + m:r + 2 * m]) / math.sqrt(2.0)
    H[iu] = upper
    H[(iu[1], iu[0])] = upper.conj()
    return H
