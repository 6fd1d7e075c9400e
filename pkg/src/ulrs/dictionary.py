"""
Dictionary construction and quality measures.

Training sets are 2-D arrays with one signal per row (the CSV layout);
internally the learners work on the n×L matrix Y whose columns are signals.
"""

from typing import Optional

import numpy as np
from structlog import get_logger

from ulrs.common.errors import DataError, DimensionError, DomainError
from ulrs.common.parallel import ordered_map
from ulrs.sparse_coding import omp
from ulrs.types import Dictionary, FloatArray, LearnStats

logger = get_logger()

POWER_ITERATION_TOL = 1e-10
POWER_ITERATION_CAP = 1000
OVERLEARNING_ESR = 1e-6


def _as_training(training: FloatArray, K: int) -> FloatArray:
    X = np.asarray(training, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError("training set must be a non-empty 2-D array", shape=X.shape)
    if not np.all(np.isfinite(X)):
        raise DataError("training set contains NaN or Inf")
    if X.shape[0] < K:
        raise DataError("fewer training signals than atoms", signals=X.shape[0], K=K)
    if K < 1:
        raise DomainError("K must be positive", K=K)
    return X


def fix_sign(atom: FloatArray) -> float:
    """+1 or -1 so that the largest-magnitude entry of sign·atom is positive."""
    return -1.0 if atom[int(np.argmax(np.abs(atom)))] < 0 else 1.0


def random_dictionary(n: int, K: int, seed: int | np.random.Generator = 0) -> Dictionary:
    """Gaussian atoms normalized to the unit sphere."""
    rng = np.random.default_rng(seed)
    return Dictionary.from_matrix(rng.standard_normal((n, K)))


def code_matrix(
    D: Dictionary, signals: FloatArray, T: int, workers: Optional[int] = None
) -> FloatArray:
    """K×L code matrix of OMP(T) applied to every row of `signals`."""
    codes = ordered_map(lambda y: omp(D, y, sparsity=T).coefficients, list(signals), workers)
    if not codes:
        return np.zeros((D.K, 0))
    return np.stack(codes, axis=1)


# --- K-means -----------------------------------------------------------------


def _sq_distances(X: FloatArray, C: FloatArray) -> FloatArray:
    d2 = (
        np.sum(X**2, axis=1)[:, None]
        - 2.0 * X @ C.T
        + np.sum(C**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _lloyd(
    X: FloatArray, K: int, iterations: int, rng: np.random.Generator
) -> tuple[FloatArray, list[float]]:
    L, n = X.shape
    C = X[rng.choice(L, size=K, replace=False)].copy()
    rmse: list[float] = []
    labels: Optional[np.ndarray] = None
    for it in range(iterations):
        d2 = _sq_distances(X, C)
        new_labels = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        point_cost = d2[np.arange(L), labels]
        taken: set[int] = set()
        for k in range(K):
            members = labels == k
            if np.any(members):
                C[k] = X[members].mean(axis=0)
                continue
            # empty cluster: re-seed from the point farthest from its centroid
            order = np.argsort(-point_cost, kind="stable")
            p = next(int(i) for i in order if int(i) not in taken)
            taken.add(p)
            C[k] = X[p]
            logger.debug("kmeans_reseeded", cluster=k, point=p, iteration=it)
        cost = float(np.sum(np.min(_sq_distances(X, C), axis=1)))
        rmse.append(float(np.sqrt(cost / (L * n))))
    return C, rmse


def kmeans_learn(
    training: FloatArray, K: int, iterations: int, seed: int
) -> tuple[Dictionary, LearnStats]:
    """
    Lloyd iterations from K distinct seeded training vectors.

    Recorded RMSE is the clustering error of the raw centroids; the returned
    atoms are the centroid directions. A centroid that averages to zero is
    replaced by the training vector farthest from the origin.
    """
    X = _as_training(training, K)
    if iterations < 1:
        raise DomainError("iterations must be positive", iterations=iterations)
    rng = np.random.default_rng(seed)
    C, rmse = _lloyd(X, K, iterations, rng)

    atoms = C.T.copy()
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(norms == 0):
        fallback = X[int(np.argmax(np.linalg.norm(X, axis=1)))]
        if not np.any(fallback):
            raise DataError("training signals are all zero")
        atoms[:, norms == 0] = fallback[:, None]
    D = Dictionary.from_matrix(atoms)

    final_esr = esr_estimate(D, X, 1)
    logger.info("kmeans_learned", K=K, iterations=len(rmse), rmse=rmse[-1] if rmse else None)
    return D, LearnStats(
        per_iteration_rmse=tuple(rmse), final_esr=final_esr, iterations_run=len(rmse)
    )


# --- K-SVD -------------------------------------------------------------------


def _leading_direction(E: FloatArray, start: FloatArray) -> FloatArray:
    """Top left singular vector of E by power iteration on EEᵀ, warm-started."""
    M = E @ E.T
    u = start / np.linalg.norm(start)
    value = float(u @ M @ u)
    for _ in range(POWER_ITERATION_CAP):
        v = M @ u
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            break
        u = v / norm
        updated = float(u @ M @ u)
        if abs(updated - value) <= POWER_ITERATION_TOL * max(updated, 1e-300):
            value = updated
            break
        value = updated
    return u


def ksvd_update_stage(
    Y: FloatArray, atoms: FloatArray, codes: FloatArray
) -> tuple[FloatArray, FloatArray, int]:
    """
    One sequential pass of rank-1 atom updates with supports held fixed.

    Y is n×L, atoms n×K, codes K×L. Returns new (atoms, codes, replaced). No
    atom update increases ‖Y − DX‖_F: the power-iteration candidate is kept
    only if it explains at least as much energy as the current atom refit.
    Atoms used by no signal are replaced by the worst-represented signal.
    """
    D = atoms.copy()
    X = codes.copy()
    residual = Y - D @ X
    used: set[int] = set()
    replaced = 0

    for k in range(D.shape[1]):
        omega = np.flatnonzero(X[k])
        if omega.size == 0:
            errors = np.linalg.norm(residual, axis=0)
            for p in np.argsort(-errors, kind="stable"):
                p = int(p)
                if p in used or errors[p] == 0.0:
                    continue
                used.add(p)
                atom = Y[:, p] / np.linalg.norm(Y[:, p]) if np.any(Y[:, p]) else None
                if atom is not None:
                    D[:, k] = atom * fix_sign(atom)
                    replaced += 1
                break
            continue

        dk = D[:, k]
        E = residual[:, omega] + np.outer(dk, X[k, omega])
        current = dk @ E
        u = _leading_direction(E, dk)
        candidate = u @ E
        if candidate @ candidate >= current @ current:
            dk, gk = u, candidate
        else:
            gk = current
        sign = fix_sign(dk)
        dk, gk = dk * sign, gk * sign

        residual[:, omega] = E - np.outer(dk, gk)
        D[:, k] = dk
        X[k, omega] = gk

    return D, X, replaced


def ksvd_learn(
    training: FloatArray,
    K: int,
    T: int,
    iterations: int,
    seed: int,
    workers: Optional[int] = None,
) -> tuple[Dictionary, LearnStats]:
    """
    K-SVD: alternate OMP(T) coding with sequential rank-1 atom updates.

    Starts from the K-means dictionary learned with the same seed. The
    per-iteration RMSE is ‖Y − DX‖_F / √(nL) after each update stage.
    """
    X = _as_training(training, K)
    n = X.shape[1]
    if not 1 <= T < n:
        raise DomainError("sparsity must satisfy 1 ≤ T < n", T=T, n=n)
    if not np.any(X):
        raise DataError("training signals are all zero")
    if iterations < 1:
        raise DomainError("iterations must be positive", iterations=iterations)

    D0, _ = kmeans_learn(X, K, iterations, seed)
    Y = X.T
    atoms = np.array(D0.atoms, copy=True)
    scale = np.sqrt(Y.size)
    rmse: list[float] = []
    stages: list[tuple[float, float]] = []
    replaced_total = 0

    for it in range(iterations):
        codes = code_matrix(Dictionary(atoms), X, T, workers)
        before = float(np.linalg.norm(Y - atoms @ codes))
        atoms, codes, replaced = ksvd_update_stage(Y, atoms, codes)
        # re-normalize against drift so the unit-norm invariant holds exactly
        atoms = atoms / np.linalg.norm(atoms, axis=0)
        after = float(np.linalg.norm(Y - atoms @ codes))
        stages.append((before, after))
        rmse.append(after / scale)
        replaced_total += replaced
        logger.debug("ksvd_iteration", iteration=it, rmse=rmse[-1], replaced=replaced)

    D = Dictionary(atoms)
    final_esr = esr_estimate(D, X, T)
    logger.info("ksvd_learned", K=K, T=T, iterations=iterations, rmse=rmse[-1], esr=final_esr)
    return D, LearnStats(
        per_iteration_rmse=tuple(rmse),
        final_esr=final_esr,
        iterations_run=iterations,
        stage_errors=tuple(stages),
        replaced_atoms=replaced_total,
    )


# --- Parametric --------------------------------------------------------------


def overcomplete_dct(n: int, K: int) -> Dictionary:
    """Sampled cosines cos(π(2i+1)k / 2K) for K swept frequencies k = 0..K-1."""
    if n < 1 or K < n:
        raise DomainError("overcomplete DCT needs K ≥ n ≥ 1", n=n, K=K)
    i = np.arange(n)[:, None]
    k = np.arange(K)[None, :]
    return Dictionary.from_matrix(np.cos(np.pi * (2 * i + 1) * k / (2.0 * K)))


# --- Quality -----------------------------------------------------------------


def coherence(D: Dictionary) -> float:
    """μ = max_{i≠j} |dᵢᵀdⱼ|."""
    if D.K < 2:
        raise DomainError("coherence needs at least two atoms", K=D.K)
    gram = np.abs(D.atoms.T @ D.atoms)
    np.fill_diagonal(gram, 0.0)
    return float(min(1.0, np.max(gram)))


def esr_estimate(
    D: Dictionary, signals: FloatArray, T: int, workers: Optional[int] = None
) -> float:
    """
    Error-to-signal ratio of OMP(T) codes: mean ‖y − Dx‖² / mean ‖Dx‖².

    A very small value on the training set hints at over-learning; it is
    logged, not rejected.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=np.float64))
    if signals.shape[0] == 0:
        raise DataError("esr needs at least one signal")
    if not 1 <= T <= D.K:
        raise DomainError("sparsity must lie in [1, K]", T=T, K=D.K)
    if signals.shape[1] != D.n:
        raise DimensionError("signal length does not match dictionary", expected=D.n, got=signals.shape[1])

    codes = code_matrix(D, signals, T, workers)
    approx = D.atoms @ codes
    represented = float(np.mean(np.sum(approx**2, axis=0)))
    if represented == 0.0:
        logger.warning("esr_all_codes_zero", signals=int(signals.shape[0]), T=T)
        return float("inf")
    error = float(np.mean(np.sum((signals.T - approx) ** 2, axis=0)))
    esr = error / represented
    if esr < OVERLEARNING_ESR:
        logger.warning("esr_below_overlearning_bound", esr=esr, T=T)
    return esr
