"""
Per-frame acoustic features.

Each frame becomes [cepstra, log Mel band energies, total log energy,
spectral entropy]: 12 + 10 + 1 + 1 = 24 values with the default
`FeatureConfig`. Every log is taken after flooring its argument at
`log_floor`.
"""

from typing import Optional

import numpy as np
import scipy.fft
import scipy.signal
import scipy.special
from structlog import get_logger

from ulrs.common.errors import DataError, DimensionError, DomainError
from ulrs.models import FeatureConfig, FrameConfig
from ulrs.types import FloatArray

logger = get_logger()


def hz_to_mel(f_hz: FloatArray | float) -> FloatArray:
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel: FloatArray | float) -> FloatArray:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_edges_hz(cfg: FeatureConfig, sample_rate_hz: int) -> FloatArray:
    """The n_mels + 2 filter edges, equally spaced in Mel between fmin and fmax."""
    fmax = cfg.fmax_hz if cfg.fmax_hz is not None else sample_rate_hz / 2.0
    if not 0.0 <= cfg.fmin_hz < fmax <= sample_rate_hz / 2.0:
        raise DomainError("Mel range must satisfy 0 ≤ fmin < fmax ≤ Nyquist", fmin=cfg.fmin_hz, fmax=fmax)
    return mel_to_hz(np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(fmax), cfg.n_mels + 2))


def mel_filterbank(cfg: FeatureConfig, sample_rate_hz: int) -> FloatArray:
    """
    Triangular filters equally spaced on the Mel scale, as an
    (n_mels, nfft//2 + 1) weight matrix over the rfft bins.

    Filter m rises from edge m to its center m+1 and falls to edge m+2; the
    weights are evaluated at the exact bin frequencies, so a tone at a center
    frequency has weight 1 in its own band and 0 in the neighbours.
    """
    edges = mel_edges_hz(cfg, sample_rate_hz)
    freqs = scipy.fft.rfftfreq(cfg.nfft, d=1.0 / sample_rate_hz)

    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def band_centers_hz(cfg: FeatureConfig, sample_rate_hz: int) -> FloatArray:
    return mel_edges_hz(cfg, sample_rate_hz)[1:-1]


def power_spectrum(frames: FloatArray, frame_cfg: FrameConfig, cfg: FeatureConfig) -> FloatArray:
    """Hamming-windowed |rfft|² of every row, zero-padded to nfft points."""
    L = frame_cfg.frame_samples
    if cfg.nfft < L:
        raise DomainError("nfft must not be shorter than the frame", nfft=cfg.nfft, frame=L)
    window = scipy.signal.windows.hamming(L, sym=True)
    return np.abs(scipy.fft.rfft(frames * window, n=cfg.nfft, axis=1)) ** 2


def feature_matrix(
    frames: FloatArray,
    frame_cfg: Optional[FrameConfig] = None,
    cfg: Optional[FeatureConfig] = None,
) -> FloatArray:
    """Features of every frame, one row per frame."""
    frame_cfg = frame_cfg or FrameConfig()
    cfg = cfg or FeatureConfig()
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[1] != frame_cfg.frame_samples:
        raise DimensionError("frame length mismatch", expected=frame_cfg.frame_samples, got=frames.shape[1])
    if frames.shape[0] == 0:
        return np.zeros((0, cfg.dimension))

    spectrum = power_spectrum(frames, frame_cfg, cfg)
    bands = spectrum @ mel_filterbank(cfg, frame_cfg.sample_rate_hz).T
    log_bands = np.log(np.maximum(bands, cfg.log_floor))

    # the transform length is padded up to n_cepstra when there are fewer bands
    size = max(cfg.n_cepstra, cfg.n_mels)
    cepstra = scipy.fft.dct(log_bands, type=2, n=size, axis=1, norm="ortho")[:, : cfg.n_cepstra]

    energy = np.log(np.maximum(np.sum(frames**2, axis=1), cfg.log_floor))

    total = spectrum.sum(axis=1)
    entropy = np.full(frames.shape[0], np.log(spectrum.shape[1]))
    live = total > 0
    if np.any(live):
        p = spectrum[live] / total[live, None]
        entropy[live] = scipy.special.entr(p).sum(axis=1)

    features = np.column_stack((cepstra, log_bands, energy, entropy))
    if not np.all(np.isfinite(features)):
        raise DataError("non-finite features; check the input samples")
    return features


def extract_features(
    frame: FloatArray,
    frame_cfg: Optional[FrameConfig] = None,
    cfg: Optional[FeatureConfig] = None,
) -> FloatArray:
    """Feature vector of a single frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise DimensionError("expected one frame", shape=frame.shape)
    return feature_matrix(frame[None, :], frame_cfg, cfg)[0]


def energy_column(cfg: FeatureConfig) -> int:
    return cfg.n_cepstra + cfg.n_mels


class NoiseFloorNormalizer:
    """
    Subtracts the mean feature vector of the quietest frames it was fitted on.

    Fitted on noise-only audio (fraction 1.0), it places frames of that noise
    near the origin; frames carrying speech move away from it.
    """

    def __init__(self, cfg: Optional[FeatureConfig] = None, fraction: float = 0.1) -> None:
        if not 0.0 < fraction <= 1.0:
            raise DomainError("noise-floor fraction must lie in (0, 1]", fraction=fraction)
        self.cfg = cfg or FeatureConfig()
        self.fraction = fraction
        self.offset: Optional[FloatArray] = None

    def fit(self, features: FloatArray) -> "NoiseFloorNormalizer":
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[0] == 0:
            raise DataError("cannot estimate a noise floor from zero frames")
        if features.shape[1] != self.cfg.dimension:
            raise DimensionError("feature width mismatch", expected=self.cfg.dimension, got=features.shape[1])
        count = max(1, int(np.ceil(self.fraction * features.shape[0])))
        quietest = np.argsort(features[:, energy_column(self.cfg)], kind="stable")[:count]
        self.offset = features[quietest].mean(axis=0)
        return self

    @property
    def floor(self) -> FloatArray:
        if self.offset is None:
            raise DataError("normalizer used before fit")
        return self.offset

    def transform(self, features: FloatArray) -> FloatArray:
        return np.asarray(features, dtype=np.float64) - self.floor

    def fit_transform(self, features: FloatArray) -> FloatArray:
        return self.fit(features).transform(features)


def drop_silent_frames(frames: FloatArray, ratio: float = 0.01) -> tuple[FloatArray, np.ndarray]:
    """
    Keep frames whose energy reaches `ratio` × the median frame energy.

    Returns the kept frames and the boolean mask that selected them.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    energy = np.sum(frames**2, axis=1)
    if energy.size == 0:
        return frames, np.zeros(0, dtype=bool)
    median = float(np.median(energy))
    keep = energy >= ratio * median if median > 0 else energy > 0
    logger.debug("silent_frames_dropped", dropped=int(np.sum(~keep)), kept=int(np.sum(keep)))
    return frames[keep], keep
