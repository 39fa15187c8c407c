import pytest
from hypothesis import given, strategies as st

from phonemask.phoneme_labels import (INVENTORY, MOA_CLASSES, NON_PHONEME, PHONEMES, FrameLabels, LabelError,
                                      MoaClass, PhonemeTrack, frame_center_s, map_to_moa, map_track_to_moa,
                                      moa_track_to_frame_labels, parse_label_text, serialize_track,
                                      track_to_frame_labels)


def test_inventory_counts():
    counts = {m: sum(v is m for v in INVENTORY.values()) for m in MoaClass}
    assert len(PHONEMES) == 39
    assert counts == {MoaClass.STOP: 6, MoaClass.AFFRICATE: 2, MoaClass.FRICATIVE: 9, MoaClass.NASAL: 3,
                      MoaClass.SEMIVOWEL: 4, MoaClass.VOWEL: 15, MoaClass.NON_PHONEME: 0}
    assert len(MOA_CLASSES) == 7


def test_moa_examples():
    assert map_to_moa("S") is MoaClass.FRICATIVE
    assert map_to_moa("M") is MoaClass.NASAL
    assert map_to_moa("non-phoneme") is MoaClass.NON_PHONEME
    assert map_to_moa("ah1") is MoaClass.VOWEL
    with pytest.raises(LabelError):
        map_to_moa("QQ")


def test_parse_single_line():
    track = parse_label_text("0.000\t0.120\tDH\n")
    assert track.intervals == ((0.0, 0.12, "DH"),)


def test_parse_errors_name_lines():
    with pytest.raises(LabelError, match="lines 1 and 2"):
        parse_label_text("0.0\t0.2\tAA\n0.1\t0.3\tB\n")
    with pytest.raises(LabelError, match=":2:"):
        parse_label_text("0.0\t0.2\tAA\n0.3\t0.2\tB\n")
    with pytest.raises(LabelError, match="unknown phoneme"):
        parse_label_text("0.0\t0.2\tXX\n")


def test_silence_tokens_are_gaps():
    track = parse_label_text("0.0\t0.1\tsil\n0.1\t0.2\tAA1\n0.2\t0.3\tsp\n")
    assert track.intervals == ((0.1, 0.2, "AA"),)


@st.composite
def tracks(draw):
    n = draw(st.integers(0, 8))
    edges = sorted(draw(st.lists(st.floats(0, 5, allow_nan=False), min_size=2 * n, max_size=2 * n, unique=True)))
    syms = draw(st.lists(st.sampled_from(PHONEMES), min_size=n, max_size=n))
    return PhonemeTrack(tuple((edges[2 * k], edges[2 * k + 1], syms[k]) for k in range(n)))


@given(tracks())
def test_serialize_round_trip(track):
    assert parse_label_text(serialize_track(track)) == track


def test_frame_label_examples():
    assert set(track_to_frame_labels(PhonemeTrack(()), 10).labels) == {NON_PHONEME}
    assert track_to_frame_labels(PhonemeTrack(((0.0, 1.0, "AA"),)), 100).labels == ("AA",) * 100
    track = PhonemeTrack(((0.010, 0.020, "S"),))
    got = track_to_frame_labels(track, 20).labels
    for t in range(20):
        c = (32 * t + 64) / 16000
        assert got[t] == ("S" if 0.010 <= c < 0.020 else NON_PHONEME)
    assert frame_center_s(0) == 0.004


@given(tracks(), st.integers(1, 400))
def test_labels_total_and_commute_with_moa(track, n):
    labels = track_to_frame_labels(track, n)
    assert len(labels) == n
    a = labels.to_moa().labels
    b = moa_track_to_frame_labels(map_track_to_moa(track), n).labels
    assert a == b


def test_frame_labels_validation():
    with pytest.raises(LabelError):
        FrameLabels(("AA", "vowel"), "phoneme")
    with pytest.raises(LabelError):
        PhonemeTrack(((0.0, 0.5, "AA"), (0.4, 0.6, "B")))
