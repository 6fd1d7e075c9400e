"""
WAV ingestion, framing and noise mixing.

Only 16-bit linear PCM, mono, 8000 Hz is accepted; anything else is rejected
with the mismatch named. Resampling is left to external tools.
"""

import os
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile
from structlog import get_logger

from ulrs.common.errors import DataError, DimensionError, WavFormatError
from ulrs.models import FrameConfig
from ulrs.types import FloatArray

logger = get_logger()

PCM_SCALE = 32768.0
SUPPORTED_RATE_HZ = 8000
CLEAN_SNR_DB = 200.0

PathLike = Union[str, os.PathLike[str]]


def read_wav(path: PathLike) -> tuple[FloatArray, int]:
    """Samples scaled to [−1, 1) and the sample rate."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, NotImplementedError) as exc:
        # compressed or otherwise unknown encodings
        raise WavFormatError("unsupported WAV encoding", path=str(path), reason=str(exc)) from exc

    if data.ndim != 1:
        raise WavFormatError("WAV must be mono", path=str(path), channels=int(data.shape[1]))
    if data.dtype != np.int16:
        raise WavFormatError("WAV must be 16-bit PCM", path=str(path), dtype=str(data.dtype))
    if rate != SUPPORTED_RATE_HZ:
        raise WavFormatError(
            "WAV sample rate must be 8000 Hz", path=str(path), rate=int(rate)
        )
    return data.astype(np.float64) / PCM_SCALE, int(rate)


def write_wav(path: PathLike, samples: FloatArray, rate: int = SUPPORTED_RATE_HZ) -> None:
    """Quantize to 16-bit PCM, clipping to the representable range."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise DimensionError("only mono signals can be written", shape=samples.shape)
    pcm = np.clip(np.round(samples * PCM_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(path, rate, pcm)


def frame_signal(samples: FloatArray, cfg: FrameConfig) -> FloatArray:
    """
    Overlapping frames without padding, one per row.

    Frame i starts at i·hop; a signal shorter than one frame yields an empty
    (0, L) array.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    L, hop = cfg.frame_samples, cfg.hop_samples
    if samples.size < L:
        return np.zeros((0, L))
    return np.array(sliding_window_view(samples, L)[::hop], copy=True)


def scaled_noise(clean: FloatArray, noise: FloatArray, snr_db: float) -> FloatArray:
    """
    g·noise[:len(clean)] with g chosen so that clean plus this component has
    the requested SNR. Requests at or above 200 dB give zeros.
    """
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.size < clean.size:
        raise DimensionError("noise is shorter than the clean signal", clean=clean.size, noise=noise.size)
    p_clean = float(np.mean(clean**2)) if clean.size else 0.0
    if p_clean == 0.0:
        raise DataError("clean signal has zero power")
    if snr_db >= CLEAN_SNR_DB:
        return np.zeros_like(clean)

    noise = noise[: clean.size]
    p_noise = float(np.mean(noise**2))
    if p_noise == 0.0:
        raise DataError("noise has zero power")
    gain = np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    logger.debug("noise_scaled", snr_db=snr_db, gain=float(gain))
    return gain * noise


def mix_noise(clean: FloatArray, noise: FloatArray, snr_db: float) -> FloatArray:
    """clean + `scaled_noise(clean, noise, snr_db)`."""
    clean = np.asarray(clean, dtype=np.float64)
    return clean + scaled_noise(clean, noise, snr_db)
