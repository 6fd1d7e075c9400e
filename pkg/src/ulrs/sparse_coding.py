"""
Coefficient estimation over a fixed dictionary.

All solvers are pure functions of their inputs. The ℓ1 family minimizes
‖y − Bx‖₂² + λ‖x‖₁ (squared data term) by cyclic coordinate descent with an
exact re-solve on the active sign pattern once the support settles.
"""

from itertools import combinations
from math import comb
from typing import Optional

import numpy as np
import scipy.linalg
from structlog import get_logger

from ulrs.common.config import get_settings
from ulrs.common.errors import BudgetError, DomainError, RankError, SolverError
from ulrs.models import CodingMethod, SolverConfig
from ulrs.types import Dictionary, FloatArray, SparseCode

logger = get_logger()

GRAM_CONDITION_LIMIT = 1e12


# --- Greedy ℓ0 ---------------------------------------------------------------


def omp(
    D: Dictionary,
    y: FloatArray,
    sparsity: Optional[int] = None,
    residual_tol: Optional[float] = None,
    relative: bool = False,
) -> SparseCode:
    """
    Orthogonal matching pursuit.

    Stops after `sparsity` atoms, or once ‖r‖₂ ≤ `residual_tol` (a fraction of
    ‖y‖₂ when `relative`), whichever comes first. With neither limit set the
    pursuit runs until the residual vanishes or min(n, K) atoms are in use.
    Each step picks the atom most correlated with the residual (lowest index
    on ties) and refits all selected coefficients by least squares.

    `objective_trace` holds ‖r‖₂ after 0, 1, ... selections.
    """
    y = D.check_signal(y)
    A = D.atoms
    if sparsity is not None and not 1 <= sparsity <= D.K:
        raise DomainError("sparsity must lie in [1, K]", sparsity=sparsity, K=D.K)
    if residual_tol is not None and residual_tol < 0:
        raise DomainError("residual tolerance must be non-negative", residual_tol=residual_tol)

    y_norm = float(np.linalg.norm(y))
    limit = min(D.n, D.K) if sparsity is None else sparsity
    stop_at = None
    if residual_tol is not None:
        stop_at = residual_tol * y_norm if relative else residual_tol

    support: list[int] = []
    coef = np.zeros(0)
    residual = y.copy()
    r_norm = y_norm
    trace = [r_norm]

    while len(support) < limit:
        if stop_at is not None and r_norm <= stop_at:
            break
        if r_norm <= 1e-12 * y_norm or y_norm == 0.0:
            break
        scores = np.abs(A.T @ residual)
        scores[support] = -1.0
        j = int(np.argmax(scores))
        if scores[j] <= 1e-14 * y_norm:
            break
        support.append(j)

        selected = A[:, support]
        condition = float(np.linalg.cond(selected.T @ selected))
        if not np.isfinite(condition) or condition > GRAM_CONDITION_LIMIT:
            logger.warning("omp_solver_failed", support=list(support), condition=condition)
            raise SolverError(
                "selected atoms are numerically dependent",
                condition=condition,
                support=tuple(support),
            )
        coef = scipy.linalg.lstsq(selected, y)[0]
        residual = y - selected @ coef
        r_norm = float(np.linalg.norm(residual))
        trace.append(r_norm)

    x = np.zeros(D.K)
    x[support] = coef
    return SparseCode.build(A, y, x, iterations=len(support), objective_trace=tuple(trace))


# --- Closed-form ℓ2 ----------------------------------------------------------


def least_squares(D: Dictionary, y: FloatArray) -> FloatArray:
    """x = (DᵀD)⁻¹Dᵀy; refuses rank-deficient D instead of pseudo-inverting."""
    y = D.check_signal(y)
    A = D.atoms
    rank = int(np.linalg.matrix_rank(A))
    if D.K > D.n or rank < D.K:
        raise RankError("DᵀD is singular", rank=rank, K=D.K, n=D.n)
    return np.asarray(scipy.linalg.lstsq(A, y)[0], dtype=np.float64)


def ridge(D: Dictionary, y: FloatArray, l2_penalty: float) -> FloatArray:
    """x = (DᵀD + λI)⁻¹Dᵀy."""
    if l2_penalty < 0:
        raise DomainError("ridge penalty must be non-negative", l2_penalty=l2_penalty)
    if l2_penalty == 0:
        return least_squares(D, y)
    y = D.check_signal(y)
    A = D.atoms
    gram = A.T @ A + l2_penalty * np.eye(D.K)
    return np.asarray(scipy.linalg.solve(gram, A.T @ y, assume_a="pos"), dtype=np.float64)


def reweighted_ridge(
    D: Dictionary,
    y: FloatArray,
    l2_penalty: float,
    config: Optional[SolverConfig] = None,
) -> SparseCode:
    """
    Ridge with per-coefficient weights wᵢ = 1/(xᵢ² + δ), re-estimated until the
    coefficients settle. The weights concentrate the penalty on small
    coefficients, which drives the solution toward the ℓ0 prior.
    """
    config = config or SolverConfig()
    if l2_penalty <= 0:
        raise DomainError("reweighted ridge needs a positive penalty", l2_penalty=l2_penalty)
    y = D.check_signal(y)
    A = D.atoms
    gram = A.T @ A
    rhs = A.T @ y
    x = np.asarray(scipy.linalg.lstsq(A, y)[0], dtype=np.float64)
    for iteration in range(1, config.max_iterations + 1):
        weights = 1.0 / (x**2 + config.epsilon_delta)
        updated = scipy.linalg.solve(gram + l2_penalty * np.diag(weights), rhs, assume_a="pos")
        change = float(np.max(np.abs(updated - x)))
        x = updated
        if change <= config.convergence_tol * max(1.0, float(np.max(np.abs(x)))):
            return SparseCode.build(A, y, x, iterations=iteration)
    raise SolverError(
        "reweighted ridge did not settle",
        last_objective=float(np.sum((y - A @ x) ** 2)),
        iterations=config.max_iterations,
    )


# --- ℓ1 ----------------------------------------------------------------------


def _objective(B: FloatArray, y: FloatArray, x: FloatArray, penalty: float) -> float:
    r = y - B @ x
    return float(r @ r + penalty * np.sum(np.abs(x)))


def kkt_residual(B: FloatArray, y: FloatArray, x: FloatArray, penalty: float) -> float:
    """
    Largest violation of the optimality conditions of ‖y − Bx‖² + λ‖x‖₁.

    With g = 2Bᵀ(y − Bx): |gⱼ| ≤ λ where xⱼ = 0 and gⱼ = λ·sign(xⱼ) elsewhere.
    """
    g = 2.0 * B.T @ (y - B @ x)
    active = x != 0
    violation = np.where(
        active,
        np.abs(g - penalty * np.sign(x)),
        np.maximum(np.abs(g) - penalty, 0.0),
    )
    return float(np.max(violation)) if violation.size else 0.0


def _solve_on_pattern(
    B: FloatArray, y: FloatArray, x: FloatArray, penalty: float
) -> Optional[FloatArray]:
    """Exact minimizer on the current support/sign pattern, if it is consistent."""
    support = np.flatnonzero(x)
    if support.size == 0 or support.size > B.shape[0]:
        return None
    Bs = B[:, support]
    gram = Bs.T @ Bs
    if np.linalg.cond(gram) > GRAM_CONDITION_LIMIT:
        return None
    signs = np.sign(x[support])
    values = scipy.linalg.solve(gram, Bs.T @ y - 0.5 * penalty * signs, assume_a="pos")
    if np.any(np.sign(values) != signs):
        return None
    candidate = np.zeros_like(x)
    candidate[support] = values
    return candidate


def l1_solve_matrix(
    B: FloatArray,
    y: FloatArray,
    penalty: float,
    config: Optional[SolverConfig] = None,
) -> SparseCode:
    """
    Minimize ‖y − Bx‖₂² + λ‖x‖₁ for an arbitrary real matrix B.

    Columns need not be unit norm, which lets the robust solver reuse this
    path on its identity-extended matrix. `objective_trace` records the
    objective after every sweep and is non-increasing.
    """
    config = config or SolverConfig()
    if penalty <= 0:
        raise DomainError("ℓ1 penalty must be positive", penalty=penalty)
    B = np.asarray(B, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    K = B.shape[1]
    col_sq = np.einsum("ij,ij->j", B, B)
    half = 0.5 * penalty

    x = np.zeros(K)
    objective = _objective(B, y, x, penalty)
    trace = [objective]
    if kkt_residual(B, y, x, penalty) <= config.convergence_tol:
        return SparseCode.build(B, y, x, iterations=0, objective_trace=tuple(trace))

    for sweep in range(1, config.max_iterations + 1):
        residual = y - B @ x
        for j in range(K):
            if col_sq[j] == 0.0:
                continue
            old = x[j]
            rho = B[:, j] @ residual + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - half, 0.0) / col_sq[j]
            if new != old:
                residual -= B[:, j] * (new - old)
                x[j] = new
        objective = _objective(B, y, x, penalty)

        if sweep % 5 == 0:
            polished = _solve_on_pattern(B, y, x, penalty)
            if polished is not None:
                polished_objective = _objective(B, y, polished, penalty)
                if polished_objective <= objective:
                    x, objective = polished, polished_objective

        trace.append(objective)
        if kkt_residual(B, y, x, penalty) <= config.convergence_tol:
            logger.debug("l1_converged", sweeps=sweep, objective=objective)
            return SparseCode.build(B, y, x, iterations=sweep, objective_trace=tuple(trace))

    logger.warning("l1_not_converged", sweeps=config.max_iterations, objective=objective)
    raise SolverError(
        "ℓ1 solver did not converge",
        last_objective=objective,
        iterations=config.max_iterations,
        kkt=kkt_residual(B, y, x, penalty),
    )


def l1_solve(
    D: Dictionary,
    y: FloatArray,
    penalty: float,
    config: Optional[SolverConfig] = None,
) -> SparseCode:
    """ℓ1-regularized coding of y over D."""
    y = D.check_signal(y)
    return l1_solve_matrix(D.atoms, y, penalty, config)


def extended_matrix(D: Dictionary, rho: float, robust_lambda: float) -> FloatArray:
    """B = [D | (ρ/λ)·I]."""
    return np.hstack((D.atoms, (rho / robust_lambda) * np.eye(D.n)))


def robust_solve(
    D: Dictionary,
    y: FloatArray,
    rho: float,
    robust_lambda: float,
    config: Optional[SolverConfig] = None,
) -> tuple[SparseCode, FloatArray]:
    """
    Code y over D while absorbing gross errors into e.

    Solves the ℓ1 problem on B = [D | (ρ/λ)I] with penalty ρ and splits the
    solution z = [x; e]. Residuals larger than about λ/2 per entry go into e
    instead of pulling atoms toward them.
    """
    if rho <= 0 or robust_lambda <= 0:
        raise DomainError("robust penalties must be positive", rho=rho, robust_lambda=robust_lambda)
    y = D.check_signal(y)
    z = l1_solve_matrix(extended_matrix(D, rho, robust_lambda), y, rho, config)
    x = z.coefficients[: D.K]
    e = np.array(z.coefficients[D.K :], copy=True)
    code = SparseCode.build(
        D.atoms, y, x, iterations=z.iterations, objective_trace=z.objective_trace
    )
    return code, e


# --- Oracle ------------------------------------------------------------------


def exhaustive_sparse(
    D: Dictionary,
    y: FloatArray,
    T: int,
    max_combinations: Optional[int] = None,
) -> SparseCode:
    """
    Globally optimal support of size ≤ T by enumeration (test oracle).

    Supports are visited by size, then lexicographically; a later support
    only wins if its residual is smaller by more than 1e-12 relative.
    """
    y = D.check_signal(y)
    if T < 0:
        raise DomainError("T must be non-negative", T=T)
    budget = max_combinations or get_settings().max_combinations
    total = sum(comb(D.K, t) for t in range(min(T, D.K) + 1))
    if total > budget:
        raise BudgetError("exhaustive search exceeds combination budget", combinations=total, budget=budget)

    A = D.atoms
    best_x = np.zeros(D.K)
    best_norm = float(np.linalg.norm(y))
    for size in range(1, min(T, D.K) + 1):
        for subset in combinations(range(D.K), size):
            columns = A[:, subset]
            if np.linalg.cond(columns.T @ columns) > GRAM_CONDITION_LIMIT:
                continue
            coef = scipy.linalg.lstsq(columns, y)[0]
            norm = float(np.linalg.norm(y - columns @ coef))
            if norm < best_norm - 1e-12 * max(best_norm, 1.0):
                best_norm = norm
                best_x = np.zeros(D.K)
                best_x[list(subset)] = coef
    return SparseCode.build(A, y, best_x, iterations=total)


# --- Dispatch ----------------------------------------------------------------


def code_signal(D: Dictionary, y: FloatArray, config: SolverConfig) -> SparseCode:
    """Code y with the method selected in `config` (OMP or ℓ1)."""
    if config.method is CodingMethod.L1:
        return l1_solve(D, y, config.l1_penalty, config)
    return omp(
        D,
        y,
        sparsity=min(config.sparsity_limit, D.K),
        residual_tol=config.residual_tol,
        relative=config.relative_residual,
    )
