import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.io import wavfile

from phonemask.signal_io import (AudioBuffer, AudioError, convolve, read_wav, resample_48k_to_16k,
                                 rms_equalize, write_wav)

floats32 = st.floats(-1.0, 1.0, width=32, allow_nan=False)


def test_read_int16_scaling(tmp_path):
    path = tmp_path / "a.wav"
    wavfile.write(path, 16000, np.array([0, 16384, -32768], dtype=np.int16))
    buf = read_wav(path)
    assert buf.sample_rate_hz == 16000
    np.testing.assert_array_equal(buf.samples, [0.0, 0.5, -1.0])


def test_read_rejects_stereo(tmp_path):
    path = tmp_path / "s.wav"
    wavfile.write(path, 16000, np.zeros((10, 2), dtype=np.int16))
    with pytest.raises(AudioError, match="channel count 2 unsupported"):
        read_wav(path)


def test_read_rejects_bad_rate_and_encoding(tmp_path):
    wavfile.write(tmp_path / "r.wav", 44100, np.zeros(10, dtype=np.int16))
    with pytest.raises(AudioError, match="sample rate"):
        read_wav(tmp_path / "r.wav")
    wavfile.write(tmp_path / "e.wav", 16000, np.zeros(10, dtype=np.int32))
    with pytest.raises(AudioError, match="encoding"):
        read_wav(tmp_path / "e.wav")
    with pytest.raises(FileNotFoundError):
        read_wav(tmp_path / "missing.wav")


@given(arrays(np.float32, st.integers(0, 300), elements=floats32))
def test_float_round_trip_is_exact(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("rt") / "x.wav"
    buf = AudioBuffer(x.astype(np.float64), 48000)
    write_wav(path, buf)
    back = read_wav(path)
    assert back.sample_rate_hz == 48000
    np.testing.assert_array_equal(back.samples, buf.samples)


def test_write_empty_and_one_second(tmp_path):
    write_wav(tmp_path / "e.wav", AudioBuffer(np.zeros(0), 16000))
    assert len(read_wav(tmp_path / "e.wav")) == 0
    write_wav(tmp_path / "z.wav", AudioBuffer(np.zeros(16000), 16000))
    rate, data = wavfile.read(tmp_path / "z.wav")
    assert rate == 16000 and data.shape == (16000,) and not data.any()


def test_write_refuses_clipping(tmp_path):
    with pytest.raises(AudioError, match="full scale"):
        write_wav(tmp_path / "c.wav", AudioBuffer(np.array([0.0, 1.5]), 16000))


def test_buffer_invariants():
    with pytest.raises(AudioError):
        AudioBuffer(np.array([np.nan]), 16000)
    with pytest.raises(AudioError):
        AudioBuffer(np.zeros(3), 22050)


def test_convolve_small_cases():
    x = AudioBuffer(np.array([1.0, 0.0, 0.0]), 16000)
    h = AudioBuffer(np.array([0.5]), 16000)
    np.testing.assert_allclose(convolve(x, h).samples, [0.5, 0.0, 0.0], atol=1e-15)
    g = np.array([0.3, -0.2, 0.1, 0.05])
    np.testing.assert_allclose(convolve(AudioBuffer(np.array([1.0]), 16000), AudioBuffer(g, 16000)).samples, g,
                               atol=1e-15)


def test_convolve_matches_direct_sum(rng):
    x, h = rng.standard_normal(64), rng.standard_normal(16)
    want = np.zeros(64 + 16 - 1)
    for i in range(64):
        for j in range(16):
            want[i + j] += x[i] * h[j]
    got = convolve(AudioBuffer(x, 16000), AudioBuffer(h, 16000)).samples
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_convolve_rate_mismatch():
    with pytest.raises(AudioError, match="rate mismatch"):
        convolve(AudioBuffer(np.ones(4), 16000), AudioBuffer(np.ones(2), 48000))


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_convolve_is_linear(a, b, seed):
    r = np.random.default_rng(seed)
    x, y, h = r.standard_normal(50), r.standard_normal(50), AudioBuffer(r.standard_normal(9), 16000)
    lhs = convolve(AudioBuffer(a * x + b * y, 16000), h).samples
    rhs = a * convolve(AudioBuffer(x, 16000), h).samples + b * convolve(AudioBuffer(y, 16000), h).samples
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def _fit_amplitude(y, f, fs):
    t = np.arange(y.size) / fs
    basis = np.stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)], 1)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return float(np.hypot(*coef))


def test_resample_dc_passes():
    y = resample_48k_to_16k(AudioBuffer(np.full(4800, 0.7), 48000)).samples
    assert y.size == 1600
    np.testing.assert_allclose(y[200:-200], 0.7, atol=1e-3)


def test_resample_passband_edge_and_stopband():
    t = np.arange(48000) / 48000
    y = resample_48k_to_16k(AudioBuffer(0.5 * np.sin(2 * np.pi * 7900 * t), 48000)).samples
    amp = _fit_amplitude(y[300:-300], 7900, 16000)
    assert 20 * np.log10(amp / 0.5) > -1.0
    x = 0.5 * np.sin(2 * np.pi * 12000 * t)
    z = resample_48k_to_16k(AudioBuffer(x, 48000)).samples
    rms_in, rms_out = np.sqrt(np.mean(x**2)), np.sqrt(np.mean(z[300:-300] ** 2))
    assert 20 * np.log10(rms_out / rms_in) < -40


def test_rms_equalize_examples(rng):
    x = AudioBuffer(np.array([0.5, -0.5, 0.5, -0.5]), 16000)
    np.testing.assert_allclose(rms_equalize(x, 0.1).samples, x.samples * 0.2)
    np.testing.assert_array_equal(rms_equalize(x, 0.5).samples, x.samples)
    r = AudioBuffer(rng.standard_normal(1000), 16000)
    assert rms_equalize(r, 0.03).rms() == pytest.approx(0.03, rel=1e-12)
    with pytest.raises(AudioError):
        rms_equalize(AudioBuffer(np.zeros(5), 16000), 0.1)


@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1, 1)), st.floats(1e-3, 1.0))
def test_rms_equalize_idempotent(x, target):
    if not np.any(x):
        return
    buf = AudioBuffer(x, 16000)
    once = rms_equalize(buf, target)
    np.testing.assert_allclose(rms_equalize(once, target).samples, once.samples, rtol=1e-12, atol=1e-15)
