import numpy as np
import pytest
from scipy.io import wavfile

from ulrs.common.errors import DataError, DimensionError, DomainError, WavFormatError
from ulrs.dictionary import random_dictionary
from ulrs.models import DetectorParams, FeatureConfig, FrameConfig
from ulrs.types import Hypothesis
from ulrs.vad.audio import frame_signal, mix_noise, read_wav, scaled_noise, write_wav
from ulrs.vad.corpus import frame_labels, synthetic_speech, white_noise
from ulrs.vad.features import (
    NoiseFloorNormalizer,
    band_centers_hz,
    drop_silent_frames,
    energy_column,
    extract_features,
    feature_matrix,
    mel_edges_hz,
    mel_filterbank,
)
from ulrs.vad.pipeline import (
    fit_noise_floor,
    floor_noise,
    frame_features,
    learn_vad_dictionary,
    training_features,
    vad_calibrate,
    vad_roc,
    vad_run,
    vad_score,
)

FRAMES = FrameConfig()
FEATURES = FeatureConfig()


# --- Audio -------------------------------------------------------------------


def test_read_wav_scales_pcm(tmp_path):
    path = tmp_path / "tiny.wav"
    wavfile.write(path, 8000, np.array([0, 16384, -16384, 32767], dtype=np.int16))

    samples, rate = read_wav(path)

    assert rate == 8000
    np.testing.assert_array_equal(samples, [0.0, 0.5, -0.5, 32767 / 32768])


@pytest.mark.parametrize(
    "rate, data",
    [
        (8000, np.zeros((10, 2), dtype=np.int16)),
        (44100, np.zeros(10, dtype=np.int16)),
        (8000, np.zeros(10, dtype=np.float32)),
    ],
    ids=["stereo", "rate", "float"],
)
def test_read_wav_rejects_unsupported_formats(tmp_path, rate, data):
    path = tmp_path / "bad.wav"
    wavfile.write(path, rate, data)

    with pytest.raises(WavFormatError):
        read_wav(path)


def test_read_wav_rejects_non_wav(tmp_path):
    path = tmp_path / "text.wav"
    path.write_text("not audio")

    with pytest.raises(WavFormatError):
        read_wav(path)


def test_write_wav_clips(tmp_path):
    path = tmp_path / "clip.wav"

    write_wav(path, np.array([2.0, -2.0, 0.25]))

    samples, _ = read_wav(path)
    np.testing.assert_array_equal(samples, [32767 / 32768, -1.0, 0.25])


def test_frame_signal_counts():
    assert (FRAMES.frame_samples, FRAMES.hop_samples) == (200, 80)

    frames = frame_signal(np.arange(360.0), FRAMES)

    assert frames.shape == (3, 200)
    assert frames[1, 0] == 80.0
    assert frame_signal(np.arange(199.0), FRAMES).shape == (0, 200)


def test_mix_noise_hits_requested_snr(rng):
    clean = np.sin(np.arange(4000) / 5.0)
    noise = rng.standard_normal(5000)

    mixed = mix_noise(clean, noise, 5.0)

    added = mixed - clean
    assert abs(10 * np.log10(np.mean(clean**2) / np.mean(added**2)) - 5.0) <= 0.01


def test_mix_noise_edge_cases(rng):
    clean = rng.standard_normal(100)

    np.testing.assert_array_equal(mix_noise(clean, rng.standard_normal(100), 250.0), clean)
    with pytest.raises(DimensionError):
        mix_noise(clean, rng.standard_normal(50), 10.0)
    with pytest.raises(DataError):
        mix_noise(np.zeros(100), rng.standard_normal(100), 10.0)
    with pytest.raises(DataError):
        mix_noise(clean, np.zeros(100), 10.0)


def test_scaled_noise_is_the_mixed_component(rng):
    clean = rng.standard_normal(400)
    noise = rng.standard_normal(500)

    np.testing.assert_allclose(clean + scaled_noise(clean, noise, 7.0), mix_noise(clean, noise, 7.0))
    assert not np.any(scaled_noise(clean, noise, 250.0))


# --- Features ----------------------------------------------------------------


def test_feature_width():
    assert FEATURES.dimension == 24
    assert feature_matrix(np.ones((4, 200))).shape == (4, 24)


def test_zero_frame_features():
    features = extract_features(np.zeros(200))

    cepstra_end = FEATURES.n_cepstra
    np.testing.assert_allclose(features[cepstra_end : cepstra_end + FEATURES.n_mels], np.log(1e-10))
    assert features[energy_column(FEATURES)] == pytest.approx(np.log(1e-10))
    assert features[-1] == pytest.approx(np.log(129))


def test_tone_at_band_center_dominates_its_band():
    centers = band_centers_hz(FEATURES, 8000)
    tone = np.sin(2 * np.pi * centers[4] * np.arange(200) / 8000.0)

    bands = extract_features(tone)[FEATURES.n_cepstra : FEATURES.n_cepstra + FEATURES.n_mels]

    assert int(np.argmax(bands)) == 4


def test_band_centers_are_inner_mel_edges():
    edges = mel_edges_hz(FEATURES, 8000)

    assert edges.size == FEATURES.n_mels + 2
    assert edges[0] == pytest.approx(0.0) and edges[-1] == pytest.approx(4000.0)
    np.testing.assert_array_equal(band_centers_hz(FEATURES, 8000), edges[1:-1])
    with pytest.raises(DomainError):
        band_centers_hz(FeatureConfig(fmax_hz=5000.0), 8000)


def test_filterbank_peaks_at_one():
    bank = mel_filterbank(FEATURES, 8000)

    assert bank.shape == (10, 129)
    assert np.all(bank >= 0.0)
    assert np.all(bank.max(axis=1) <= 1.0)


def test_feature_frame_length_checked():
    with pytest.raises(DimensionError):
        feature_matrix(np.zeros((2, 150)))


def test_normalizer_centres_quietest_frames(rng):
    features = rng.standard_normal((50, 24))
    normalizer = NoiseFloorNormalizer(fraction=0.1)

    out = normalizer.fit_transform(features)

    quietest = np.argsort(features[:, energy_column(FEATURES)])[:5]
    np.testing.assert_allclose(out[quietest].mean(axis=0), 0.0, atol=1e-12)


def test_normalizer_needs_fit():
    with pytest.raises(DataError):
        NoiseFloorNormalizer().transform(np.zeros((1, 24)))


def test_drop_silent_frames():
    frames = np.vstack([np.ones((3, 200)), np.zeros((2, 200))])

    kept, mask = drop_silent_frames(frames)

    assert kept.shape == (3, 200)
    np.testing.assert_array_equal(mask, [True, True, True, False, False])


# --- Corpus ------------------------------------------------------------------


def test_synthetic_speech_shape_and_level():
    samples, mask = synthetic_speech(duration_s=3.0, seed=4)

    assert samples.shape == mask.shape == (24000,)
    assert np.max(np.abs(samples)) == pytest.approx(0.5)
    assert mask.any() and not mask.all()
    assert not np.any(samples[~mask])


def test_synthetic_speech_is_seeded():
    a, _ = synthetic_speech(duration_s=1.0, seed=9)
    b, _ = synthetic_speech(duration_s=1.0, seed=9)

    np.testing.assert_array_equal(a, b)


def test_frame_labels_majority():
    mask = np.zeros(360, dtype=bool)
    mask[:200] = True

    np.testing.assert_array_equal(frame_labels(mask, FRAMES), [1, 1, 0])


# --- Pipeline ----------------------------------------------------------------


def test_vad_score_rates():
    pd, pf = vad_score([1, 1, 0, 0], [1, 0, 0, 1])

    assert (pd, pf) == (0.5, 0.5)


def test_vad_score_reference_cases():
    reference = [1, 0, 1, 1, 0]

    assert vad_score(reference, reference) == (1.0, 0.0)
    assert vad_score([1] * 5, reference) == (1.0, 1.0)


def test_vad_score_coin_flip_is_chance():
    rng = np.random.default_rng(8)
    reference = np.repeat([0, 1], 5000)

    pd, pf = vad_score(rng.integers(0, 2, 10000), reference)

    assert abs(pd - 0.5) <= 0.05 and abs(pf - 0.5) <= 0.05


def test_vad_score_absent_class_is_nan():
    pd, pf = vad_score([1, 0], [1, 1])

    assert pd == 0.5
    assert np.isnan(pf)


def test_vad_score_length_mismatch():
    with pytest.raises(DimensionError):
        vad_score([1, 0, 1], [1, 0])


def test_vad_run_on_short_audio_is_empty():
    D = random_dictionary(24, 30, seed=1)

    assert vad_run(np.zeros(100), D, DetectorParams(threshold_C=0.0)) == []


def test_vad_run_is_deterministic():
    D = random_dictionary(24, 30, seed=2)
    samples, _ = synthetic_speech(duration_s=0.5, seed=5)
    params = DetectorParams(threshold_C=1.0)

    first = [d.statistic_t for d in vad_run(samples, D, params)]
    second = [d.statistic_t for d in vad_run(samples, D, params, workers=3)]

    assert first == second


def test_vad_run_checks_dictionary_dimension():
    with pytest.raises(DimensionError):
        vad_run(np.zeros(1000), random_dictionary(12, 20, seed=1), DetectorParams(threshold_C=0.0))


def test_noise_floor_tracks_noise_level():
    noise = 0.1 * white_noise(16000, seed=4)

    floor = fit_noise_floor(noise)

    assert floor.shape == (24,)
    assert floor[energy_column(FEATURES)] == pytest.approx(np.log(200 * 0.01), abs=0.05)
    np.testing.assert_allclose(frame_features(noise, noise_floor=floor).mean(axis=0), 0.0, atol=1e-9)


def test_floor_noise_matches_its_floor():
    floor = fit_noise_floor(0.03 * white_noise(16000, seed=2))

    regenerated = fit_noise_floor(floor_noise(floor, 16000, seed=9))

    assert regenerated[energy_column(FEATURES)] == pytest.approx(floor[energy_column(FEATURES)], abs=0.05)


def test_noise_floor_checks():
    with pytest.raises(DimensionError):
        fit_noise_floor(np.ones(150))
    with pytest.raises(DimensionError):
        frame_features(np.ones(400), noise_floor=np.zeros(12))


def test_training_features_drop_silence():
    samples, _ = synthetic_speech(duration_s=2.0, seed=3)

    features, floor = training_features(samples, noise_snr_db=None)

    total = frame_signal(samples, FRAMES).shape[0]
    assert 0 < features.shape[0] < total
    assert features.shape[1] == 24
    assert floor.shape == (24,)


def test_training_floor_comes_from_the_mixed_noise():
    samples, _ = synthetic_speech(duration_s=2.0, seed=3)

    _, floor = training_features(samples, seed=4)

    expected = fit_noise_floor(scaled_noise(samples, white_noise(samples.size, 4), 30.0))
    np.testing.assert_allclose(floor, expected)


@pytest.fixture(scope="module")
def small_model():
    speech, _ = synthetic_speech(duration_s=4.0, seed=1)
    return learn_vad_dictionary(speech, K=20, T=3, iterations=2, seed=0)


def test_frame_decision_ignores_its_neighbours(small_model):
    D, _, floor = small_model
    samples, _ = synthetic_speech(duration_s=2.0, seed=2)
    energies = np.sum(frame_signal(samples, FRAMES) ** 2, axis=1)
    start = int(np.argmax(energies)) * FRAMES.hop_samples
    params = DetectorParams(threshold_C=1.0)

    alone = vad_run(samples[start : start + 200], D, params, noise_floor=floor)
    in_context = vad_run(samples[: start + 200], D, params, noise_floor=floor)

    assert len(alone) == 1
    assert alone[0].statistic_t > 0.0
    assert alone[0].statistic_t == pytest.approx(in_context[-1].statistic_t, rel=1e-9)
    assert alone[0].decision is in_context[-1].decision is Hypothesis.H1


def test_vad_end_to_end_small(small_model, tmp_path):
    D, _, floor = small_model
    params = DetectorParams()
    test, mask = synthetic_speech(duration_s=3.0, seed=2)
    noise = scaled_noise(test, white_noise(test.size, 6), 15.0)
    path = tmp_path / "noisy.wav"
    write_wav(path, test + noise)
    labels = frame_labels(mask, FRAMES)
    test_floor = fit_noise_floor(noise)

    C = vad_calibrate(D, params, 0.1, duration_s=2.0, seed=5, noise_floor=test_floor)
    assert C == vad_calibrate(D, params, 0.1, duration_s=2.0, seed=5, noise_floor=test_floor)

    detections = vad_run(path, D, params.with_threshold(C), noise_floor=test_floor)

    assert D.n == 24 and D.K == 20
    assert floor.shape == (24,)
    assert len(detections) == labels.size
    assert all(d.decision in (Hypothesis.H0, Hypothesis.H1) for d in detections)
    pd, pf = vad_score(detections, labels)
    assert 0.0 <= pd <= 1.0 and 0.0 <= pf <= 1.0
    assert vad_roc(path, labels, D, params, noise_floor=test_floor).auc() > 0.5
