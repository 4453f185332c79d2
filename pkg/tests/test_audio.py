import numpy as np
import pytest

from helpers import naive_dft_magnitude
from wildfusion import audio
from wildfusion.audio import MelConfig, hz_to_mel, mel_filterbank, mel_spectrogram, stack_legs, stft
from wildfusion.errors import ConfigError, InputError

SR = 16384


def test_stft_zero_input():
    assert np.all(stft(np.zeros(4096)) == 0)


def test_stft_frame_count():
    assert stft(np.zeros(8192), 2048, 512).shape == (1025, 13)


def test_stft_rejects_short_input():
    with pytest.raises(InputError):
        stft(np.zeros(2047), 2048, 512)


def test_stft_matches_naive_dft(rng):
    window = np.hanning(2049)[:-1]
    frames = rng.normal(size=(50, 2048))
    ours = np.stack([stft(f)[:, 0] for f in frames])
    np.testing.assert_allclose(ours, naive_dft_magnitude(frames * window), rtol=0, atol=1e-5)


def test_bin_center_sine_concentrates_in_its_bin():
    n, k = 2048, 100
    x = np.sin(2 * np.pi * k * SR / n * np.arange(n) / SR)
    power = stft(x)[:, 0] ** 2
    # A Hann window spreads a bin-centered tone over bins k-1, k, k+1.
    assert np.argmax(power) == k
    assert power[k - 1:k + 2].sum() / power.sum() > 0.99


def test_parseval():
    x = np.random.default_rng(3).normal(size=2048)
    mag2 = stft(x)[:, 0] ** 2
    one_sided = mag2[0] + 2 * mag2[1:-1].sum() + mag2[-1]
    windowed = x * np.hanning(2049)[:-1]
    assert one_sided / 2048 == pytest.approx((windowed**2).sum(), rel=1e-6)


def test_mel_formula():
    assert hz_to_mel(1000.0) == pytest.approx(2595 * np.log10(1 + 1000 / 700))
    assert hz_to_mel(1000.0) == pytest.approx(999.99, abs=0.01)
    np.testing.assert_allclose(audio.mel_to_hz(hz_to_mel([10.0, 440.0, 8000.0])), [10.0, 440.0, 8000.0])


def test_filterbank_shape_and_geometry():
    bank = mel_filterbank()
    assert bank.shape == (128, 1025)
    assert np.all(bank >= 0) and np.all(bank.sum(axis=1) > 0)
    assert np.all(bank.max(axis=1) <= 1.0)
    assert np.all(np.diff(audio.filter_centers()) > 0)
    overlap = (bank[:-1] > 0) & (bank[1:] > 0)
    assert overlap.any(axis=1).all()


def test_filterbank_rejects_too_many_mels():
    with pytest.raises(ConfigError):
        mel_filterbank(MelConfig(n_mels=1000))


def test_mel_config_rejects_bad_fmax():
    with pytest.raises(ConfigError):
        MelConfig(fmax=9000.0)


def test_mel_spectrogram_zero_and_shape():
    m = mel_spectrogram(np.zeros(SR))
    assert m.shape == (128, 13)
    np.testing.assert_allclose(m, np.log(audio.LOG_EPSILON))


def test_mel_spectrogram_uses_first_segment_only():
    x = np.random.default_rng(0).normal(size=SR)
    y = x.copy()
    y[8192:] = 0
    np.testing.assert_array_equal(mel_spectrogram(x), mel_spectrogram(y))
    with pytest.raises(InputError):
        mel_spectrogram(np.zeros(8191))


def test_one_khz_sine_lands_in_its_band():
    x = np.sin(2 * np.pi * 1000.0 * np.arange(SR) / SR)
    band = int(np.argmax(mel_spectrogram(x).mean(axis=1)))
    edges = audio.mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(8192.0), 130))
    assert edges[band] < 1000.0 < edges[band + 2]
    centers = audio.filter_centers()
    assert band == int(np.argmin(np.abs(centers - 1000.0)))


def test_stack_legs():
    mats = [np.full((128, 13), float(i)) for i in range(4)]
    stack = stack_legs(mats)
    assert stack.shape == (4, 128, 13)
    assert not np.array_equal(stack, stack_legs(mats[::-1]))
    with pytest.raises(InputError):
        stack_legs(mats[:3])
    with pytest.raises(InputError):
        stack_legs(mats[:3] + [np.zeros((128, 12))])


def test_frame_stack_is_deterministic(frame):
    a = audio.frame_mel_stack(frame.audio)
    assert a.shape == (4, 128, 13) and np.all(np.isfinite(a))
    np.testing.assert_array_equal(a, audio.frame_mel_stack(frame.audio))
