"""Phoneme time-stamp tracks, CI frame labels and manner-of-articulation classes."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .ci_frontend import FRAME_LEN, FS, HOP

NON_PHONEME = "non-phoneme"

# aligner silence tokens; they mark gaps, not labelled intervals
SILENCE_TOKENS = frozenset({"sil", "sp", "spn", "SIL", "SP", "SPN", ""})


class LabelError(ValueError):
    pass


class MoaClass(str, Enum):
    STOP = "stop"
    AFFRICATE = "affricate"
    FRICATIVE = "fricative"
    NASAL = "nasal"
    SEMIVOWEL = "semivowel"
    VOWEL = "vowel"
    NON_PHONEME = "non-phoneme"


def load_inventory(path=None) -> Dict[str, MoaClass]:
    """Read ``arpabet<TAB>moa`` lines; ``#`` starts a comment line."""
    if path is None:
        text = resources.files("phonemask").joinpath("data/inventory.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    inv: Dict[str, MoaClass] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise LabelError(f"inventory line {lineno}: expected 'symbol<TAB>moa'")
        sym, moa = parts[0].strip(), parts[1].strip()
        try:
            inv[sym] = MoaClass(moa)
        except ValueError:
            raise LabelError(f"inventory line {lineno}: unknown manner {moa!r}") from None
    return inv


INVENTORY = load_inventory()
PHONEMES: Tuple[str, ...] = tuple(INVENTORY)
PHONEME_CLASSES: Tuple[str, ...] = PHONEMES + (NON_PHONEME,)
MOA_CLASSES: Tuple[str, ...] = tuple(m.value for m in MoaClass)


def normalize_symbol(symbol: str) -> str:
    """Upper-case and strip ARPAbet stress digits (``AH0`` -> ``AH``)."""
    if symbol == NON_PHONEME:
        return symbol
    return re.sub(r"[012]$", "", symbol.strip()).upper()


@dataclass(frozen=True)
class PhonemeTrack:
    intervals: Tuple[Tuple[float, float, str], ...]

    def __post_init__(self):
        ivs = tuple((float(a), float(b), str(s)) for a, b, s in self.intervals)
        for k, (a, b, s) in enumerate(ivs):
            if not a < b:
                raise LabelError(f"interval {k}: start {a} is not before end {b}")
            if k and ivs[k - 1][1] > a:
                raise LabelError(f"intervals {k - 1} and {k} overlap or are unsorted")
        object.__setattr__(self, "intervals", ivs)

    def __len__(self):
        return len(self.intervals)


@dataclass(frozen=True)
class FrameLabels:
    labels: Tuple[str, ...]
    scheme: str = "phoneme"  # or "moa"

    def __post_init__(self):
        allowed = PHONEME_CLASSES if self.scheme == "phoneme" else MOA_CLASSES
        if self.scheme not in ("phoneme", "moa"):
            raise LabelError(f"unknown label scheme {self.scheme!r}")
        labels = tuple(self.labels)
        bad = sorted(set(labels) - set(allowed))
        if bad:
            raise LabelError(f"labels outside the {self.scheme} inventory: {bad}")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def to_moa(self) -> "FrameLabels":
        if self.scheme == "moa":
            return self
        return FrameLabels(tuple(map_to_moa(s).value for s in self.labels), "moa")


def parse_label_text(text: str, source: str = "<labels>") -> PhonemeTrack:
    """Parse ``start<TAB>end<TAB>symbol`` lines."""
    rows: List[Tuple[float, float, str, int]] = []
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise LabelError(f"{source}:{lineno}: expected 'start<TAB>end<TAB>symbol'")
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError:
            raise LabelError(f"{source}:{lineno}: times must be numbers") from None
        if not start < end:
            raise LabelError(f"{source}:{lineno}: start {start} is not before end {end}")
        token = parts[2].strip()
        if token in SILENCE_TOKENS:
            continue
        sym = normalize_symbol(token)
        if sym not in INVENTORY:
            raise LabelError(f"{source}:{lineno}: unknown phoneme symbol {token!r}")
        rows.append((start, end, sym, lineno))
    rows.sort(key=lambda r: (r[0], r[1]))
    for prev, cur in zip(rows, rows[1:]):
        if cur[0] < prev[1]:
            raise LabelError(f"{source}: intervals on lines {prev[3]} and {cur[3]} overlap")
    return PhonemeTrack(tuple((a, b, s) for a, b, s, _ in rows))


def parse_label_file(path) -> PhonemeTrack:
    with open(path, encoding="utf-8") as fh:
        return parse_label_text(fh.read(), str(path))


def format_seconds(x: float) -> str:
    """Shortest exact positional form, padded to at least three decimals."""
    text = np.format_float_positional(float(x), unique=True, trim="-")
    whole, _, frac = text.partition(".")
    return f"{whole}.{frac.ljust(3, '0')}"


def serialize_track(track: PhonemeTrack) -> str:
    return "".join(f"{format_seconds(a)}\t{format_seconds(b)}\t{s}\n" for a, b, s in track.intervals)


def write_label_file(path, track: PhonemeTrack) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_track(track))


def frame_center_s(t: int) -> float:
    return (HOP * t + FRAME_LEN // 2) / FS


def track_to_frame_labels(track: PhonemeTrack, n_frames: int) -> FrameLabels:
    """Label each frame with the interval containing its centre, else non-phoneme.

    Intervals are half-open ``[start, end)``.
    """
    if n_frames < 1:
        raise LabelError("n_frames must be at least 1")
    labels = [NON_PHONEME] * n_frames
    for start, end, sym in track.intervals:
        # centre(t) = (32 t + 64) / 16000; start one frame early, the loop re-checks
        t = max(0, math.floor((start * FS - FRAME_LEN // 2) / HOP))
        while t < n_frames and frame_center_s(t) < end:
            if frame_center_s(t) >= start:
                labels[t] = sym
            t += 1
    return FrameLabels(tuple(labels), "phoneme")


def map_to_moa(symbol: str) -> MoaClass:
    if symbol == NON_PHONEME:
        return MoaClass.NON_PHONEME
    sym = normalize_symbol(symbol)
    try:
        return INVENTORY[sym]
    except KeyError:
        raise LabelError(f"unknown phoneme symbol {symbol!r}") from None


def map_track_to_moa(track: PhonemeTrack) -> Sequence[Tuple[float, float, str]]:
    return tuple((a, b, map_to_moa(s).value) for a, b, s in track.intervals)


def moa_track_to_frame_labels(intervals, n_frames: int) -> FrameLabels:
    labels = [MoaClass.NON_PHONEME.value] * n_frames
    for start, end, moa in intervals:
        for t in range(n_frames):
            c = frame_center_s(t)
            if start <= c < end:
                labels[t] = moa
    return FrameLabels(tuple(labels), "moa")
