"""
Synthetic stand-in for a speech corpus: voiced harmonic segments separated by
silences, with sample-exact ground truth.
"""

import numpy as np
from structlog import get_logger

from ulrs.models import FrameConfig
from ulrs.types import FloatArray
from ulrs.vad.audio import frame_signal

logger = get_logger()

SEGMENT_S = (0.3, 0.8)
SILENCE_S = (0.2, 0.6)
F0_HZ = (100.0, 220.0)
RAMP_S = 0.02
PEAK = 0.5

# (low, high) centre range and bandwidth of three formants
FORMANTS = (((300.0, 800.0), 80.0), ((900.0, 2200.0), 120.0), ((2300.0, 3200.0), 160.0))


def _voiced_segment(length: int, rate: int, rng: np.random.Generator) -> FloatArray:
    start = rng.uniform(*F0_HZ)
    f0 = np.linspace(start, start * rng.uniform(0.85, 1.15), length)
    phase = 2.0 * np.pi * np.cumsum(f0) / rate
    centres = [(rng.uniform(*span), width) for span, width in FORMANTS]

    segment = np.zeros(length)
    mean_f0 = float(f0.mean())
    # keep the top harmonic below Nyquist throughout the glide
    for k in range(1, int(0.85 * rate / 2.0 // mean_f0) + 1):
        f = k * mean_f0
        gain = sum(1.0 / np.sqrt(1.0 + ((f - c) / w) ** 2) for c, w in centres)
        gain /= np.sqrt(k)
        segment += gain * np.sin(k * phase + rng.uniform(0.0, 2.0 * np.pi))

    ramp = min(int(RAMP_S * rate), length // 2)
    if ramp:
        edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        segment[:ramp] *= edge
        segment[length - ramp :] *= edge[::-1]
    peak = np.max(np.abs(segment))
    level = rng.uniform(0.5, 1.0)
    return segment * (level / peak) if peak > 0 else segment


def synthetic_speech(
    duration_s: float = 10.0, sample_rate_hz: int = 8000, seed: int = 0
) -> tuple[FloatArray, np.ndarray]:
    """
    Alternating silence and voiced segments, starting with silence.

    Returns the samples (peak 0.5) and a per-sample boolean speech mask.
    """
    rng = np.random.default_rng(seed)
    total = int(round(duration_s * sample_rate_hz))
    samples = np.zeros(total)
    mask = np.zeros(total, dtype=bool)

    pos = int(rng.uniform(*SILENCE_S) * sample_rate_hz)
    segments = 0
    while pos < total:
        end = min(total, pos + int(rng.uniform(*SEGMENT_S) * sample_rate_hz))
        samples[pos:end] = _voiced_segment(end - pos, sample_rate_hz, rng)
        mask[pos:end] = True
        segments += 1
        pos = end + int(rng.uniform(*SILENCE_S) * sample_rate_hz)

    peak = float(np.max(np.abs(samples))) if total else 0.0
    if peak > 0:
        samples *= PEAK / peak
    logger.debug("synthetic_speech_generated", seconds=duration_s, segments=segments)
    return samples, mask


def frame_labels(mask: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """A frame is speech when at least half of its samples are."""
    frames = frame_signal(np.asarray(mask, dtype=np.float64), cfg)
    return (frames.mean(axis=1) >= 0.5).astype(np.int8) if frames.size else np.zeros(0, dtype=np.int8)


def white_noise(length: int, seed: int = 0) -> FloatArray:
    return np.random.default_rng(seed).standard_normal(length)
