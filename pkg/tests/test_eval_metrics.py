import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from phonemask import eval_metrics as em
from phonemask.ci_frontend import CHANNEL_CENTER_HZ, Electrodogram
from phonemask.signal_io import AudioBuffer

from oracles import lcs, rau_direct

LEX = em.load_lexicon()


def test_ecm_examples(rng):
    ref = Electrodogram(rng.random((200, 22)))
    assert em.compute_ecm(ref, ref) == 1.0
    assert em.compute_ecm(Electrodogram(2 * ref.magnitudes), ref) == pytest.approx(1.0, abs=1e-12)
    r = np.random.default_rng(0)
    a, b = Electrodogram(r.random((1000, 22))), Electrodogram(r.random((1000, 22)))
    assert em.compute_ecm(a, b) < 0.05


def test_ecm_flat_channels(rng):
    a, b = rng.random((50, 22)), rng.random((50, 22))
    a[:, 0] = b[:, 0] = 0.0                      # excluded
    a[:, 1] = 0.3                                 # flat in one signal only: r^2 = 0
    full = em.compute_ecm(a, b)
    r2 = [np.corrcoef(a[:, c], b[:, c])[0, 1] ** 2 for c in range(2, 22)]
    assert full == pytest.approx((sum(r2) + 0.0) / 21, rel=1e-9)
    with pytest.raises(em.MetricError, match="every channel"):
        em.compute_ecm(np.zeros((5, 22)), np.zeros((5, 22)))
    with pytest.raises(em.MetricError):
        em.compute_ecm(np.zeros((5, 22)), np.zeros((6, 22)))


@given(arrays(np.float64, (30, 22), elements=st.floats(0, 5)), arrays(np.float64, (30, 22), elements=st.floats(0, 5)),
       st.floats(0.1, 10), st.floats(0, 3))
def test_ecm_symmetric_affine_bounded(a, b, scale, shift):
    if not (np.any(np.ptp(a, 0) > 1e-6) or np.any(np.ptp(b, 0) > 1e-6)):
        return
    try:
        v = em.compute_ecm(a, b)
    except em.MetricError:
        return
    assert 0.0 <= v <= 1.0
    assert em.compute_ecm(b, a) == pytest.approx(v, abs=1e-9)
    if np.all(np.ptp(a, 0) > 1e-3) and np.all(np.ptp(b, 0) > 1e-3):
        assert em.compute_ecm(scale * a + shift, b) == pytest.approx(v, abs=1e-6)


def _am(mod_hz, seconds=1.0, ch=8):
    t = np.arange(int(16000 * seconds)) / 16000
    return (1 + 0.9 * np.sin(2 * np.pi * mod_hz * t)) * np.sin(2 * np.pi * CHANNEL_CENTER_HZ[ch] * t)


def test_srmr_low_vs_high_modulation():
    assert em.compute_srmr_ci(_am(4.0)) > em.compute_srmr_ci(_am(60.0))


def test_srmr_scale_invariant_and_errors(rng):
    x = rng.standard_normal(9000)
    assert em.compute_srmr_ci(2 * x) == pytest.approx(em.compute_srmr_ci(x), rel=1e-9)
    with pytest.raises(em.MetricError, match="shorter than 0.5 s"):
        em.compute_srmr_ci(np.ones(7999))
    assert em.compute_srmr_ci(AudioBuffer(np.zeros(8000), 16000)) == math.inf


def test_modulation_centres():
    np.testing.assert_allclose(em.MOD_CENTERS_HZ[[0, -1]], [4.0, 64.0])
    assert np.allclose(np.diff(np.log(em.MOD_CENTERS_HZ)), np.log(16) / 7)


def test_scoring_examples():
    target = "The boy broke the wooden fence"
    assert em.score_intelligibility(target.upper() + "!", target, LEX).percent_correct == 100.0
    dk = em.score_intelligibility("I don't know", target, LEX)
    assert dk.phonemes_correct == 0 and dk.phonemes_total > 0
    assert LEX["fence"] == ("F", "EH", "N", "S") and LEX["tense"] == ("T", "EH", "N", "S")
    rep = em.score_intelligibility("tense", "fence", LEX)
    assert (rep.phonemes_correct, rep.phonemes_total) == (3, 4)


def test_scoring_rules():
    # exact matches first, each target word once
    rep = em.score_intelligibility("the the the", "the cat", LEX)
    assert rep.phonemes_correct == len(LEX["the"])
    # partial pairs: largest overlap first, ties to the earliest target word
    rep = em.score_intelligibility("sense", "fence tense", LEX)
    assert rep.phonemes_correct == 3
    with pytest.raises(em.MetricError, match="zzyzx"):
        em.score_intelligibility("a", "zzyzx fence", LEX)
    with pytest.raises(em.MetricError):
        em.score_intelligibility("a", "  ", LEX)


@given(st.lists(st.sampled_from(sorted(LEX)), min_size=1, max_size=5),
       st.lists(st.sampled_from(sorted(LEX) + ["blorp"]), max_size=6))
def test_scoring_never_overcredits(target_words, response_words):
    rep = em.score_intelligibility(" ".join(response_words), " ".join(target_words), LEX)
    resp_phones = sum(len(LEX.get(w, ())) for w in response_words)
    assert rep.phonemes_correct <= min(rep.phonemes_total, resp_phones)
    assert 0 <= rep.percent_correct <= 100


def test_lcs_agrees_with_oracle(rng):
    for _ in range(50):
        a = list(rng.choice(list("ABCD"), rng.integers(0, 7)))
        b = list(rng.choice(list("ABCD"), rng.integers(0, 7)))
        assert em.lcs_length(a, b) == lcs(a, b)


def test_rau():
    assert em.rau_transform(50, 100) == pytest.approx(rau_direct(50, 100), abs=1e-12)
    assert em.rau_transform(10**7, 10**7) == pytest.approx(123, abs=0.1)
    assert em.rau_transform(0, 10**7) == pytest.approx(-23, abs=0.1)
    for n in (1, 7, 40, 333):
        for k in range(n + 1):
            assert em.rau_transform(k, n) + em.rau_transform(n - k, n) == pytest.approx(100, abs=1e-9)
        vals = [em.rau_transform(k, n) for k in range(n + 1)]
        assert all(a < b for a, b in zip(vals, vals[1:]))
    with pytest.raises(em.MetricError):
        em.rau_transform(5, 4)


def test_report_csv_round_trip_and_table():
    rows = [em.MetricsRow(c, "office", f"u{k}", 0.5 + 0.01 * k, 2.0 + k) for c in em.CONDITIONS for k in range(3)]
    text = em.rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(em.REPORT_COLUMNS)
    back = em.rows_from_csv(text)
    assert [(r.ecm, r.srmr_ci) for r in back] == [(r.ecm, r.srmr_ci) for r in rows]
    table = em.condition_table_csv(em.MetricsReport(rows)).splitlines()
    assert table[0].split(",")[2:] == list(em.CONDITIONS)
    assert len(table) == 3  # header + ECM + SRMR-CI for one room
    assert "0.510 (0.008)" in table[1]
