"""
Synthetic data, Monte Carlo ROC estimation and the ESR/sparsity sweep.

All randomness flows from explicit seeds; a given configuration reproduces
bit-identical datasets and curves.
"""

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from structlog import get_logger

from ulrs.common.errors import DataError, DomainError
from ulrs.common.parallel import ordered_map
from ulrs.detector import sr_score
from ulrs.dictionary import esr_estimate, ksvd_learn, random_dictionary
from ulrs.models import DetectorParams, SynthConfig
from ulrs.types import Dictionary, FloatArray, RocCurve

logger = get_logger()

Statistic = Callable[[FloatArray], float]


@dataclass(frozen=True)
class SynthData:
    """
    Draws of the union-of-subspaces model.

    Row i of `h1` is clean[i] + errors[i] + noise; `clean` = codes @ Dᵀ.
    `h0` rows are independent white noise of the same per-entry variance.
    """

    dictionary: Dictionary
    h1: FloatArray
    h0: FloatArray
    codes: FloatArray
    clean: FloatArray
    errors: FloatArray
    sigma_n2: float
    realized_snr_db: float
    realized_esr: float


def _scaled_noise(rng: np.random.Generator, shape: tuple[int, int], variance: float) -> FloatArray:
    draw = rng.standard_normal(shape)
    return draw * np.sqrt(variance / np.mean(draw**2))


def _planted_codes(rng: np.random.Generator, count: int, K: int, T: int) -> FloatArray:
    codes = np.zeros((count, K))
    for i in range(count):
        support = rng.choice(K, size=T, replace=False)
        codes[i, support] = rng.standard_normal(T)
    return codes


def _assemble(
    rng: np.random.Generator, D: Dictionary, codes: FloatArray, cfg: SynthConfig
) -> SynthData:
    clean = codes @ D.atoms.T
    energy = float(np.mean(np.sum(clean**2, axis=1)))
    if energy == 0.0:
        raise DataError("synthetic signals have zero energy")
    sigma_n2 = energy / 10.0 ** (cfg.snr_db / 10.0)

    # noise first: one seed gives the same noise draws at every ESR
    noise1 = _scaled_noise(rng, clean.shape, sigma_n2)
    noise0 = _scaled_noise(rng, clean.shape, sigma_n2)
    errors = rng.standard_normal(clean.shape)
    if cfg.esr > 0:
        errors *= np.sqrt(cfg.esr * energy / np.mean(np.sum(errors**2, axis=1)))
    else:
        errors = np.zeros_like(clean)
    realized_snr = energy / float(np.mean(noise1**2))
    realized_esr = float(np.mean(np.sum(errors**2, axis=1))) / energy
    return SynthData(
        dictionary=D,
        h1=clean + errors + noise1,
        h0=noise0,
        codes=codes,
        clean=clean,
        errors=errors,
        sigma_n2=sigma_n2,
        realized_snr_db=10.0 * np.log10(realized_snr),
        realized_esr=realized_esr,
    )


def synth_uos(cfg: SynthConfig) -> SynthData:
    """
    Random unit-norm dictionary, T-sparse Gaussian codes, white model error and
    white noise, with SNR = E‖Dx‖²/σ_n² and ESR = E‖e‖²/E‖Dx‖² matched on the
    sample.
    """
    rng = np.random.default_rng(cfg.seed)
    D = random_dictionary(cfg.n, cfg.K, rng)
    codes = _planted_codes(rng, cfg.count, cfg.K, cfg.T)
    data = _assemble(rng, D, codes, cfg)
    logger.info(
        "synth_generated",
        n=cfg.n,
        K=cfg.K,
        T=cfg.T,
        count=cfg.count,
        snr_db=data.realized_snr_db,
        esr=data.realized_esr,
    )
    return data


def mixed_corpus(cfg: SynthConfig, dense_fraction: float = 0.5) -> tuple[SynthData, FloatArray]:
    """
    H1 set where a fraction of signals is off-model: dense codes spread over all
    atoms, rescaled to the mean energy of the on-model part.

    Returns the data and a boolean mask marking the off-model rows.
    """
    if not 0.0 <= dense_fraction <= 1.0:
        raise DomainError("dense fraction must lie in [0, 1]", dense_fraction=dense_fraction)
    rng = np.random.default_rng(cfg.seed)
    D = random_dictionary(cfg.n, cfg.K, rng)
    codes = _planted_codes(rng, cfg.count, cfg.K, cfg.T)
    dense_count = int(round(dense_fraction * cfg.count))
    off_model = np.zeros(cfg.count, dtype=bool)
    off_model[cfg.count - dense_count :] = True
    if dense_count:
        on_model = codes[~off_model] @ D.atoms.T
        target = float(np.mean(np.sum(on_model**2, axis=1))) if on_model.size else float(cfg.T)
        dense = rng.standard_normal((dense_count, cfg.K))
        dense *= np.sqrt(target / np.sum((dense @ D.atoms.T) ** 2, axis=1))[:, None]
        codes[off_model] = dense
    return _assemble(rng, D, codes, cfg), off_model


def corrupt_with_spikes(
    signals: FloatArray, fraction: float, magnitude: float, seed: int = 0
) -> FloatArray:
    """Add ±magnitude to round(fraction·n) random entries of every row."""
    signals = np.array(signals, dtype=np.float64, copy=True)
    rng = np.random.default_rng(seed)
    n = signals.shape[1]
    hits = int(round(fraction * n))
    for row in signals:
        index = rng.choice(n, size=hits, replace=False)
        row[index] += magnitude * rng.choice((-1.0, 1.0), size=hits)
    return signals


def spiked_hypotheses(
    data: SynthData,
    fraction: float = 0.1,
    rms_factor: float = 10.0,
    h1_only: bool = False,
    seed: int = 0,
) -> tuple[FloatArray, FloatArray]:
    """
    (h0, h1) with impulsive interference of rms_factor × the clean signal RMS.

    Both hypotheses are hit unless `h1_only`; spiking only H1 raises its energy
    and hands every detector an easier problem.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DomainError("spike fraction must lie in [0, 1]", fraction=fraction)
    magnitude = rms_factor * float(np.sqrt(np.mean(data.clean**2)))
    h1 = corrupt_with_spikes(data.h1, fraction, magnitude, seed)
    h0 = data.h0 if h1_only else corrupt_with_spikes(data.h0, fraction, magnitude, seed + 1)
    return h0, h1


# --- ROC ---------------------------------------------------------------------


def roc_from_scores(h0_scores: FloatArray, h1_scores: FloatArray) -> RocCurve:
    """
    Nonparametric ROC from pooled scores.

    Thresholds sweep the pooled values from the top down and end at −∞; each
    point decides H1 for scores strictly above its threshold. Points sharing a
    false-alarm rate collapse onto the one with the highest detection rate.
    """
    s0 = np.sort(np.asarray(h0_scores, dtype=np.float64))
    s1 = np.sort(np.asarray(h1_scores, dtype=np.float64))
    if s0.size == 0 or s1.size == 0:
        raise DataError("both hypotheses need at least one score")
    thresholds = np.concatenate((np.unique(np.concatenate((s0, s1)))[::-1], [-np.inf]))
    pf = (s0.size - np.searchsorted(s0, thresholds, side="right")) / s0.size
    pd = (s1.size - np.searchsorted(s1, thresholds, side="right")) / s1.size
    last_of_run = np.append(np.diff(pf) > 0, True)
    return RocCurve(pf=pf[last_of_run], pd=pd[last_of_run], thresholds=thresholds[last_of_run])


def score_set(statistic: Statistic, signals: FloatArray, workers: Optional[int] = None) -> FloatArray:
    return np.asarray(ordered_map(statistic, list(signals), workers), dtype=np.float64)


def monte_carlo_roc(
    statistic: Statistic,
    h0_set: FloatArray,
    h1_set: FloatArray,
    workers: Optional[int] = None,
) -> RocCurve:
    """Evaluate `statistic` on both sets and sweep the pooled thresholds."""
    roc = roc_from_scores(score_set(statistic, h0_set, workers), score_set(statistic, h1_set, workers))
    logger.info("roc_computed", h0=len(h0_set), h1=len(h1_set), points=len(roc), auc=roc.auc())
    return roc


def detector_roc(
    D: Dictionary, params: DetectorParams, h0_set: FloatArray, h1_set: FloatArray, workers: Optional[int] = None
) -> RocCurve:
    """ROC of a ULRS rule traced by sweeping its constant C."""
    return monte_carlo_roc(lambda y: sr_score(D, y, params), h0_set, h1_set, workers)


def rule_comparison(
    D: Dictionary,
    h0_set: FloatArray,
    h1_set: FloatArray,
    rules: Mapping[str, DetectorParams],
    workers: Optional[int] = None,
) -> dict[str, RocCurve]:
    return {name: detector_roc(D, params, h0_set, h1_set, workers) for name, params in rules.items()}


def truth_statistic_roc(data: SynthData) -> RocCurve:
    """
    ROC of t = ⟨y, Dx⟩ with the ground-truth reconstruction Dx.

    H0 row i is paired with clean[i], so both hypotheses see the same template
    set.
    """
    h1 = np.einsum("ij,ij->i", data.h1, data.clean)
    h0 = np.einsum("ij,ij->i", data.h0, data.clean)
    return roc_from_scores(h0, h1)


def matched_filter_roc(n: int, snr: float, trials: int, seed: int = 0) -> RocCurve:
    """
    Known template s with ‖s‖² = snr in unit-variance white noise; scores are
    sᵀy for `trials` draws under each hypothesis.
    """
    if snr < 0:
        raise DomainError("snr must be non-negative", snr=snr)
    rng = np.random.default_rng(seed)
    s = rng.standard_normal(n)
    s *= np.sqrt(snr) / np.linalg.norm(s)
    h0 = rng.standard_normal((trials, n)) @ s
    h1 = (rng.standard_normal((trials, n)) + s) @ s
    return roc_from_scores(h0, h1)


# --- Sparsity/ESR trade-off --------------------------------------------------


def sparsity_esr_sweep(
    training: FloatArray,
    K: int,
    T_range: Sequence[int],
    learn_sparsity: int = 3,
    iterations: int = 10,
    seed: int = 0,
    dictionary: Optional[Dictionary] = None,
    workers: Optional[int] = None,
) -> list[tuple[int, float]]:
    """
    ESR of one fixed dictionary coded at every T in `T_range`.

    The dictionary is learned once by K-SVD (sparsity `learn_sparsity`) unless
    one is supplied.
    """
    training = np.asarray(training, dtype=np.float64)
    levels = sorted(set(int(t) for t in T_range))
    if not levels or levels[0] < 1 or levels[-1] > K:
        raise DomainError("sparsity range must lie within [1, K]", T_range=levels, K=K)
    if dictionary is None:
        T_learn = min(max(1, learn_sparsity), training.shape[1] - 1)
        dictionary, _ = ksvd_learn(training, K, T_learn, iterations, seed, workers)
    elif dictionary.K != K:
        raise DomainError("supplied dictionary has a different atom count", K=K, got=dictionary.K)

    sweep = [(T, esr_estimate(dictionary, training, T, workers)) for T in levels]
    logger.info("sparsity_sweep_done", levels=len(levels), esr_first=sweep[0][1], esr_last=sweep[-1][1])
    return sweep
