import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from phonemask import ci_frontend as cf
from phonemask.ci_frontend import (CHANNEL_BINS, CHANNEL_CENTER_HZ, FrontendError, TfGrid,
                                   ace_channelize, analyze, electrodogram, fit_norm_stats, frame_signal,
                                   log_compress, normalize, overlap_add_resynthesize, power_spectrum,
                                   select_maxima, sine_vocode, stft)


@pytest.mark.parametrize("n, frames", [(16000, 497), (128, 1), (159, 1)])
def test_frame_counts(n, frames):
    assert frame_signal(np.zeros(n)).shape == (frames, 128)


def test_power_spectrum_examples():
    assert not power_spectrum(np.zeros((1, 128))).values.any()
    dc = power_spectrum(np.ones((1, 128))).values[0]
    assert np.argmax(dc) == 0
    assert np.all(10 * np.log10(dc[3:] / dc[0] + 1e-300) < -60)
    t = np.arange(16000) / 16000
    g = analyze(np.sin(2 * np.pi * 1000 * t))
    assert np.all(np.argmax(g.values, axis=1) == 8)


def test_log_compress_examples():
    g = log_compress(TfGrid(np.array([[0.0] * 64 + [1.0]]), "power")).values[0]
    assert g[0] == pytest.approx(math.log(1e-10))
    assert g[-1] == math.log(1 + 1e-10)
    with pytest.raises(FrontendError):
        log_compress(TfGrid(np.zeros((1, 65)), "log_feature"))


@given(arrays(np.float64, (3, 65), elements=st.floats(0, 1e6)), arrays(np.float64, (3, 65), elements=st.floats(0, 1e6)))
def test_log_compress_monotone(a, b):
    la = log_compress(TfGrid(a, "power")).values
    lb = log_compress(TfGrid(b, "power")).values
    lt = a < b
    assert np.all(la[lt] <= lb[lt])
    big = lt & (b - a > 1e-6 * (b + 1e-10))
    assert np.all(la[big] < lb[big])


def test_norm_stats(rng):
    grids = [TfGrid(rng.standard_normal((40, 65)) * 3 + 1, "log_feature") for _ in range(3)]
    stats = fit_norm_stats(grids)
    z = np.concatenate([normalize(g, stats).values for g in grids])
    np.testing.assert_allclose(z.mean(0), 0, atol=1e-9)
    np.testing.assert_allclose(z.var(0), 1, atol=1e-9)
    half = fit_norm_stats(grids[:1]).merge(fit_norm_stats(grids[1:]))
    np.testing.assert_allclose(half.mean, stats.mean, atol=1e-9)
    np.testing.assert_allclose(half.variance, stats.variance, atol=1e-9)
    const = np.ones((10, 65))
    const[:, :64] = rng.standard_normal((10, 64))
    with pytest.raises(FrontendError, match="zero variance"):
        fit_norm_stats([TfGrid(const, "log_feature")])


def test_allocation_partition():
    members = np.concatenate(CHANNEL_BINS)
    assert len(CHANNEL_BINS) == 22
    assert sorted(members.tolist()) == list(range(2, 64))
    assert np.all(np.diff(CHANNEL_CENTER_HZ) > 0)
    lo = cf.CHANNEL_EDGES_HZ[0][0]
    hi = cf.CHANNEL_EDGES_HZ[-1][1]
    assert lo == pytest.approx(187.5) and hi == pytest.approx(7937.5)


def test_channelize_examples(rng):
    assert not ace_channelize(TfGrid(np.zeros((2, 65)))).any()
    for b in range(65):
        g = np.zeros((1, 65))
        g[0, b] = 4.0
        nz = np.count_nonzero(ace_channelize(TfGrid(g)))
        assert nz == (1 if 2 <= b <= 63 else 0)
    p = rng.random((5, 65))
    env = ace_channelize(TfGrid(p))
    np.testing.assert_allclose(np.sum(env**2, 1), p[:, 2:64].sum(1), rtol=1e-9)


def test_select_maxima_examples(rng):
    env = rng.random((6, 22))
    np.testing.assert_array_equal(select_maxima(env, 22).magnitudes, env)
    one = np.zeros((1, 22))
    one[0, 5] = 0.3
    np.testing.assert_array_equal(select_maxima(one, 8).magnitudes, one)
    with pytest.raises(FrontendError):
        select_maxima(env, 0)


@given(arrays(np.float64, (4, 22), elements=st.floats(0, 10)), st.integers(1, 22))
def test_select_maxima_oracle(env, n):
    out = select_maxima(env, n).magnitudes
    for row_in, row_out in zip(env, out):
        keep = sorted(range(22), key=lambda c: (-row_in[c], c))[:n]
        want = np.zeros(22)
        want[keep] = row_in[keep]
        np.testing.assert_array_equal(row_out, want)
        assert np.all(row_out <= row_in)
        assert np.count_nonzero(row_out) <= n


def test_vocoder_examples():
    from phonemask.ci_frontend import Electrodogram
    assert not sine_vocode(Electrodogram(np.zeros((50, 22)))).samples.any()
    m = np.zeros((400, 22))
    m[:, 6] = 0.4
    y = sine_vocode(Electrodogram(m)).samples
    assert np.sqrt(np.mean(y**2)) == pytest.approx(0.4 / math.sqrt(2), rel=0.01)
    m[:, 15] = 0.4
    y = sine_vocode(Electrodogram(m), 16000).samples
    spec = np.abs(np.fft.rfft(y))
    freqs = np.fft.rfftfreq(y.size, 1 / 16000)
    peaks = sorted(freqs[np.argsort(spec)[-2:]])
    np.testing.assert_allclose(peaks, sorted(CHANNEL_CENTER_HZ[[6, 15]]), atol=1.0)


def test_perfect_reconstruction(rng):
    x = rng.standard_normal(4000)
    s = stft(x)
    y = overlap_add_resynthesize(TfGrid(np.abs(s), "amplitude"), np.angle(s)).samples
    interior = slice(128, y.size - 128)
    assert np.sqrt(np.mean((y[interior] - x[interior]) ** 2)) < 1e-6
    z = overlap_add_resynthesize(TfGrid(np.zeros_like(np.abs(s)), "amplitude"), np.angle(s)).samples
    assert not z.any()
    y2 = overlap_add_resynthesize(TfGrid(2 * np.abs(s), "amplitude"), np.angle(s)).samples
    np.testing.assert_allclose(y2, 2 * y, atol=1e-9)


def test_electrodogram_pipeline_shapes(rng):
    e = electrodogram(analyze(rng.standard_normal(1600)), 8)
    assert e.magnitudes.shape == (47, 22)
    assert np.all(np.count_nonzero(e.magnitudes, 1) <= 8)


def test_grid_container_round_trip(tmp_path, rng):
    v = rng.standard_normal((7, 65))
    cf.save_grid(tmp_path / "g.bin", v, "log_feature")
    back, kind = cf.load_grid(tmp_path / "g.bin")
    assert kind == "log_feature"
    np.testing.assert_array_equal(back, v)
    with pytest.raises(FrontendError):
        cf.grid_from_bytes(b"nonsense" + bytes(30))
