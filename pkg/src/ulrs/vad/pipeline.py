"""
End-to-end voice activity detection.

audio → frames → features − noise floor → ULRS rule per frame.

The noise floor is the mean feature vector of noise-only audio. It is fitted
once, on training or calibration noise, and the same offset is subtracted
from every frame afterwards, so a frame's decision never depends on the rest
of the recording it appears in.
"""

import os
from typing import Optional, Sequence, Union

import numpy as np
from structlog import get_logger

from ulrs.common.errors import DimensionError, WavFormatError
from ulrs.common.parallel import ordered_map
from ulrs.detector import sr_decide, sr_score
from ulrs.dictionary import ksvd_learn
from ulrs.evaluation import roc_from_scores
from ulrs.models import DetectorParams, FeatureConfig, FrameConfig
from ulrs.types import Detection, Dictionary, FloatArray, LearnStats, RocCurve
from ulrs.vad.audio import frame_signal, read_wav, scaled_noise
from ulrs.vad.corpus import white_noise
from ulrs.vad.features import NoiseFloorNormalizer, drop_silent_frames, energy_column, feature_matrix

logger = get_logger()

Audio = Union[str, os.PathLike[str], FloatArray]

TRAINING_SNR_DB = 30.0


def _load(audio: Audio, frame_cfg: FrameConfig) -> FloatArray:
    if isinstance(audio, (str, os.PathLike)):
        samples, rate = read_wav(audio)
        if rate != frame_cfg.sample_rate_hz:
            raise WavFormatError("WAV rate differs from the framing rate", rate=rate, expected=frame_cfg.sample_rate_hz)
        return samples
    return np.asarray(audio, dtype=np.float64).ravel()


def _check_floor(noise_floor: FloatArray, feature_cfg: FeatureConfig) -> FloatArray:
    floor = np.asarray(noise_floor, dtype=np.float64).ravel()
    if floor.size != feature_cfg.dimension:
        raise DimensionError("noise floor width must match the feature stack", got=floor.size, features=feature_cfg.dimension)
    return floor


def fit_noise_floor(
    noise: Audio,
    frame_cfg: Optional[FrameConfig] = None,
    feature_cfg: Optional[FeatureConfig] = None,
) -> FloatArray:
    """Mean feature vector over every frame of a noise-only recording."""
    frame_cfg = frame_cfg or FrameConfig()
    feature_cfg = feature_cfg or FeatureConfig()
    frames = frame_signal(_load(noise, frame_cfg), frame_cfg)
    if frames.shape[0] == 0:
        raise DimensionError("noise recording is shorter than one frame")
    return NoiseFloorNormalizer(feature_cfg, fraction=1.0).fit(feature_matrix(frames, frame_cfg, feature_cfg)).floor


def floor_noise(
    noise_floor: FloatArray,
    length: int,
    seed: int = 0,
    frame_cfg: Optional[FrameConfig] = None,
    feature_cfg: Optional[FeatureConfig] = None,
) -> FloatArray:
    """Seeded white noise whose frame energy matches the floor's log-energy entry."""
    frame_cfg = frame_cfg or FrameConfig()
    feature_cfg = feature_cfg or FeatureConfig()
    floor = _check_floor(noise_floor, feature_cfg)
    variance = float(np.exp(floor[energy_column(feature_cfg)])) / frame_cfg.frame_samples
    return np.sqrt(variance) * white_noise(length, seed)


def frame_features(
    audio: Audio,
    frame_cfg: Optional[FrameConfig] = None,
    feature_cfg: Optional[FeatureConfig] = None,
    noise_floor: Optional[FloatArray] = None,
) -> FloatArray:
    """
    Feature rows of every frame of one recording, each shifted by the fixed
    `noise_floor` (raw features when it is None).
    """
    frame_cfg = frame_cfg or FrameConfig()
    feature_cfg = feature_cfg or FeatureConfig()
    frames = frame_signal(_load(audio, frame_cfg), frame_cfg)
    features = feature_matrix(frames, frame_cfg, feature_cfg)
    if noise_floor is None:
        return features
    return features - _check_floor(noise_floor, feature_cfg)


def training_features(
    samples: FloatArray,
    frame_cfg: Optional[FrameConfig] = None,
    feature_cfg: Optional[FeatureConfig] = None,
    silence_ratio: float = 0.01,
    noise_snr_db: Optional[float] = TRAINING_SNR_DB,
    seed: int = 0,
) -> tuple[FloatArray, FloatArray]:
    """
    Floor-shifted features of the non-silent frames of a training recording,
    and the noise floor used.

    The recording is mixed with seeded white noise at `noise_snr_db` and the
    floor is fitted on that noise alone. With `noise_snr_db=None` nothing is
    mixed and the floor is the mean of the quietest 10% of the frames.
    """
    frame_cfg = frame_cfg or FrameConfig()
    feature_cfg = feature_cfg or FeatureConfig()
    samples = np.asarray(samples, dtype=np.float64)
    if noise_snr_db is None:
        frames = frame_signal(samples, frame_cfg)
        features = feature_matrix(frames, frame_cfg, feature_cfg)
        floor = NoiseFloorNormalizer(feature_cfg).fit(features).floor
    else:
        noise = scaled_noise(samples, white_noise(samples.size, seed), noise_snr_db)
        floor = fit_noise_floor(noise, frame_cfg, feature_cfg)
        frames = frame_signal(samples + noise, frame_cfg)
        features = feature_matrix(frames, frame_cfg, feature_cfg)
    _, keep = drop_silent_frames(frames, silence_ratio)
    logger.info("vad_training_features", frames=int(frames.shape[0]), kept=int(keep.sum()))
    return features[keep] - floor, floor


def learn_vad_dictionary(
    samples: FloatArray,
    K: int = 100,
    T: int = 3,
    iterations: int = 10,
    seed: int = 0,
    frame_cfg: Optional[FrameConfig] = None,
    feature_cfg: Optional[FeatureConfig] = None,
    workers: Optional[int] = None,
) -> tuple[Dictionary, LearnStats, FloatArray]:
    """K-SVD dictionary over the speech frames of a training recording, with its noise floor."""
    training, floor = training_features(samples, frame_cfg, feature_cfg, seed=seed)
    D, stats = ksvd_learn(training, K, T, iterations, seed, workers)
    return D, stats, floor


def _check_dimension(D: Dictionary, feature_cfg: FeatureConfig) -> None:
    if D.n != feature_cfg.dimension:
        raise DimensionError("dictionary dimension must match the feature stack", n=D.n, features=feature_cfg.dimension)


def vad_scores(
    audio: Audio,
    D: Dictionary,
    params: DetectorParams,
    frame_cfg: Optional[FrameConfig] = None,
    feature_cfg: Optional[FeatureConfig] = None,
    workers: Optional[int] = None,
    noise_floor: Optional[FloatArray] = None,
) -> FloatArray:
    """Decision score s(y) of every frame, in frame order."""
    feature_cfg = feature_cfg or FeatureConfig()
    _check_dimension(D, feature_cfg)
    features = frame_features(audio, frame_cfg, feature_cfg, noise_floor)
    return np.asarray(ordered_map(lambda y: sr_score(D, y, params), list(features), workers), dtype=np.float64)


def vad_run(
    audio: Audio,
    D: Dictionary,
    params: DetectorParams,
    frame_cfg: Optional[FrameConfig] = None,
    feature_cfg: Optional[FeatureConfig] = None,
    workers: Optional[int] = None,
    noise_floor: Optional[FloatArray] = None,
) -> list[Detection]:
    """One Detection per frame, in frame order; empty audio gives []."""
    feature_cfg = feature_cfg or FeatureConfig()
    _check_dimension(D, feature_cfg)
    features = frame_features(audio, frame_cfg, feature_cfg, noise_floor)
    detections = ordered_map(lambda y: sr_decide(y, D, params), list(features), workers)
    logger.info(
        "vad_frames_scored",
        frames=len(detections),
        speech=sum(d.decision.flag for d in detections),
    )
    return detections


def vad_calibrate(
    D: Dictionary,
    params: DetectorParams,
    alpha: float,
    frame_cfg: Optional[FrameConfig] = None,
    feature_cfg: Optional[FeatureConfig] = None,
    noise: Optional[Audio] = None,
    duration_s: float = 10.0,
    seed: int = 0,
    workers: Optional[int] = None,
    noise_floor: Optional[FloatArray] = None,
) -> float:
    """
    Constant C giving a frame false-alarm rate of about `alpha` on noise-only
    audio. Without a recording, seeded white noise at the floor's level is
    used (unit variance when there is no floor).
    """
    frame_cfg = frame_cfg or FrameConfig()
    if noise is None:
        length = int(duration_s * frame_cfg.sample_rate_hz)
        if noise_floor is None:
            noise = white_noise(length, seed)
        else:
            noise = floor_noise(noise_floor, length, seed, frame_cfg, feature_cfg)
    scores = vad_scores(noise, D, params, frame_cfg, feature_cfg, workers, noise_floor)
    if scores.size == 0:
        raise DimensionError("noise recording is shorter than one frame")
    threshold = float(np.quantile(scores, 1.0 - alpha))
    logger.info("vad_threshold_calibrated", alpha=alpha, frames=int(scores.size), threshold=threshold)
    return threshold


def vad_roc(
    audio: Audio,
    reference: Sequence[int] | np.ndarray,
    D: Dictionary,
    params: DetectorParams,
    frame_cfg: Optional[FrameConfig] = None,
    feature_cfg: Optional[FeatureConfig] = None,
    workers: Optional[int] = None,
    noise_floor: Optional[FloatArray] = None,
) -> RocCurve:
    """Frame-level ROC traced by sweeping C over the scores of one recording."""
    scores = vad_scores(audio, D, params, frame_cfg, feature_cfg, workers, noise_floor)
    labels = np.asarray(reference).astype(bool)
    if labels.shape != scores.shape:
        raise DimensionError("reference length differs from frame count", frames=scores.size, labels=labels.size)
    return roc_from_scores(scores[~labels], scores[labels])


def vad_score(
    decisions: Sequence[Detection] | Sequence[int] | np.ndarray,
    reference: Sequence[int] | np.ndarray,
) -> tuple[float, float]:
    """
    (pd, pf) against reference labels.

    A rate whose reference class is absent is NaN rather than 0.
    """
    flags = np.asarray(
        [d.decision.flag if isinstance(d, Detection) else int(d) for d in decisions], dtype=bool
    )
    labels = np.asarray(reference).astype(bool).ravel()
    if flags.shape != labels.shape:
        raise DimensionError("decision and reference lengths differ", decisions=flags.size, reference=labels.size)
    speech, silence = int(labels.sum()), int((~labels).sum())
    pd = float(np.sum(flags & labels)) / speech if speech else float("nan")
    pf = float(np.sum(flags & ~labels)) / silence if silence else float("nan")
    return pd, pf
