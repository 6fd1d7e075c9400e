"""
Hypothesis test H0: y = n  vs  H1: y = Dx + e + n.

Every rule reduces to a scalar decision score s(y) with "H1 ⇔ s(y) > C":

    s(y) = 2⟨y, Dx⟩ − ‖Dx‖² + ‖y‖²·σ_e²/σ_n² − γ‖x‖₀

(γ only for the sparsity-penalized rule). The likelihood ratio of the two
Gaussian models expands ‖y − Dx‖² into exactly these terms. `sr_decide`
reports the same rule on the scale of t = ⟨y, Dx⟩ with threshold
½(C + ‖Dx‖² − ‖y‖²σ_e²/σ_n² + γ‖x‖₀).
"""

from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import norm
from structlog import get_logger

from ulrs.common.errors import CalibrationError, DomainError, RankError
from ulrs.common.parallel import ordered_map
from ulrs.models import DecisionRule, DetectorParams
from ulrs.sparse_coding import code_signal, robust_solve
from ulrs.types import (
    Detection,
    Dictionary,
    FloatArray,
    Hypothesis,
    InterferenceBasis,
    RocCurve,
    SparseCode,
)

logger = get_logger()

Statistic = Callable[[FloatArray], float]
Sampler = Callable[[np.random.Generator], FloatArray]


# --- ULRS detector -----------------------------------------------------------


def sr_statistic(D: Dictionary, y: FloatArray, params: DetectorParams) -> tuple[float, SparseCode]:
    """Sufficient statistic t = ⟨y, Dx⟩ and the code x it was computed from."""
    y = D.check_signal(y)
    if params.rule is DecisionRule.ROBUST:
        code, _ = robust_solve(
            D, y, params.solver.robust_rho, params.solver.robust_lambda, params.solver
        )
    else:
        code = code_signal(D, y, params.solver)
    t = float(y @ code.reconstruct(D))
    return t, code


def _threshold_terms(D: Dictionary, y: FloatArray, code: SparseCode, params: DetectorParams) -> float:
    """‖Dx‖² − ‖y‖²σ_e²/σ_n² (+ γ‖x‖₀ for the penalized rule)."""
    approx = code.reconstruct(D)
    terms = float(approx @ approx) - float(y @ y) * params.sigma_e2 / params.sigma_n2
    if params.rule is DecisionRule.SPARSE:
        terms += params.gamma * code.l0
    return terms


def sr_score(D: Dictionary, y: FloatArray, params: DetectorParams) -> float:
    """Decision score s(y); the rule decides H1 when s(y) > C."""
    t, code = sr_statistic(D, y, params)
    return 2.0 * t - _threshold_terms(D, y, code, params)


def sr_decide(y: FloatArray, D: Dictionary, params: DetectorParams) -> Detection:
    """Apply the plain, sparsity-penalized or robust rule to one signal."""
    if params.threshold_C is None:
        raise CalibrationError("decision requested without a threshold constant", rule=params.rule.value)
    t, code = sr_statistic(D, y, params)
    threshold = 0.5 * (params.threshold_C + _threshold_terms(D, y, code, params))
    decision = Hypothesis.H1 if t > threshold else Hypothesis.H0
    return Detection(statistic_t=t, threshold=threshold, decision=decision, code=code)


# --- Classical baselines -----------------------------------------------------


def matched_filter_stat(s: FloatArray, R: FloatArray, y: FloatArray) -> float:
    """sᵀR⁻¹y for a known template s in Gaussian noise of covariance R."""
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (s.size, s.size) or y.shape != s.shape:
        raise DomainError("template, covariance and signal sizes disagree", s=s.shape, R=R.shape, y=y.shape)
    if not np.allclose(R, R.T):
        raise DomainError("covariance must be symmetric")
    try:
        factor = scipy.linalg.cho_factor(R)
    except np.linalg.LinAlgError as exc:
        raise DomainError("covariance is not positive definite") from exc
    return float(s @ scipy.linalg.cho_solve(factor, y))


def matched_filter_bank_stat(D: Dictionary, y: FloatArray) -> float:
    """Largest absolute correlation of y with any atom."""
    y = D.check_signal(y)
    return float(np.max(np.abs(D.atoms.T @ y)))


def energy_stat(y: FloatArray) -> float:
    """Unstructured energy detector ‖y‖²."""
    y = np.asarray(y, dtype=np.float64)
    return float(y @ y)


def matched_subspace_stat(
    D: Dictionary, C: Optional[InterferenceBasis], y: FloatArray
) -> float:
    """
    Energy of y in span(D) after nulling the interference subspace span(C).

    Computes yᵀP_C^⊥ P_{DC} P_C^⊥ y where P_{DC} projects onto the
    orthonormalized P_C^⊥D. With C = None this is ‖P_D y‖².
    """
    y = D.check_signal(y)
    if C is None:
        Q = scipy.linalg.orth(D.atoms)
        return float(np.sum((Q.T @ y) ** 2))

    if C.n != D.n:
        raise DomainError("interference basis and dictionary dimensions differ", n=D.n, c=C.n)
    Qc = scipy.linalg.orth(C.columns)
    p = Qc.shape[1]
    y_perp = y - Qc @ (Qc.T @ y)
    DC = D.atoms - Qc @ (Qc.T @ D.atoms)
    Q = scipy.linalg.orth(DC)
    rank = Q.shape[1]
    if rank == 0 or p + rank >= D.n:
        raise RankError("signal subspace is degenerate after interference nulling", p=p, rank=rank, n=D.n)
    return float(np.sum((Q.T @ y_perp) ** 2))


# --- Closed-form performance -------------------------------------------------


def q_tail(x: float) -> float:
    """Standard normal upper-tail probability Q(x)."""
    return float(norm.sf(x))


def q_tail_inv(alpha: float) -> float:
    """Inverse of Q on (0, 1)."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie strictly inside (0, 1)", alpha=alpha)
    return float(norm.isf(alpha))


def theoretical_pd(alpha: float, snr: float, esr: float) -> float:
    """P_D = Q(Q⁻¹(α) − √(SNR/(1+ESR))), SNR and ESR linear."""
    if snr < 0 or esr < 0:
        raise DomainError("snr and esr must be non-negative", snr=snr, esr=esr)
    return q_tail(q_tail_inv(alpha) - np.sqrt(snr / (1.0 + esr)))


def linear_sparsity_penalty(c: float = 0.1) -> Callable[[int], float]:
    """f(s) = 1 + c·s."""
    return lambda s: 1.0 + c * s


def theoretical_pd_sparse(
    alpha: float,
    snr: float,
    esr: float,
    s: int,
    f: Optional[Callable[[int], float]] = None,
) -> float:
    """P_D = Q(f(s)·Q⁻¹(α) − √(SNR/(1+ESR))) for a caller-supplied increasing f."""
    f = f or linear_sparsity_penalty()
    if s < 0:
        raise DomainError("sparsity level must be non-negative", s=s)
    base, scale = f(0), f(s)
    if base <= 0 or scale < base:
        raise DomainError("f must satisfy f(s) ≥ f(0) > 0", f0=base, fs=scale)
    if snr < 0 or esr < 0:
        raise DomainError("snr and esr must be non-negative", snr=snr, esr=esr)
    return q_tail(scale * q_tail_inv(alpha) - np.sqrt(snr / (1.0 + esr)))


def theoretical_roc(
    snr: float,
    esr: float,
    pf_grid: Sequence[float],
    s: Optional[int] = None,
    f: Optional[Callable[[int], float]] = None,
) -> RocCurve:
    """Closed-form curve on a P_F grid; `s` switches to the sparsity-aware form."""
    grid = np.unique(np.asarray(pf_grid, dtype=np.float64))
    if s is None:
        pd = [theoretical_pd(a, snr, esr) for a in grid]
    else:
        pd = [theoretical_pd_sparse(a, snr, esr, s, f) for a in grid]
    thresholds = [q_tail_inv(a) for a in grid]
    return RocCurve(pf=grid, pd=np.maximum.accumulate(pd), thresholds=np.asarray(thresholds))


# --- Calibration -------------------------------------------------------------


def white_noise_sampler(n: int, sigma_n2: float) -> Sampler:
    """H0 sampler drawing N(0, σ_n² I) vectors of length n."""
    scale = float(np.sqrt(sigma_n2))
    return lambda rng: rng.normal(0.0, scale, n)


def calibrate_threshold(
    statistic: Statistic,
    h0_sampler: Sampler,
    alpha: float,
    trials: int,
    seed: int = 0,
    workers: Optional[int] = None,
) -> float:
    """
    Empirical (1−α) quantile of the statistic over `trials` H0 draws.

    Each trial draws from its own child seed, so the result does not depend on
    evaluation order or worker count.
    """
    if trials < 100:
        raise DomainError("calibration needs at least 100 trials", trials=trials)
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie strictly inside (0, 1)", alpha=alpha)
    children = np.random.SeedSequence(seed).spawn(trials)

    def run(child: np.random.SeedSequence) -> float:
        return float(statistic(h0_sampler(np.random.default_rng(child))))

    values = np.asarray(ordered_map(run, children, workers))
    threshold = float(np.quantile(values, 1.0 - alpha))
    logger.info("threshold_calibrated", alpha=alpha, trials=trials, threshold=threshold)
    return threshold
