"""Labelled phoneme-like utterances for desk-scale runs.

Each symbol of the inventory gets a fixed acoustic recipe: harmonic tones
shaped by formant bumps for vowels, semivowels and nasals, band-limited
noise for fricatives, closure plus burst for stops, closure plus frication
for affricates.  Utterances are runs of such segments with occasional
silent gaps, and every split cycles through shuffled copies of the full
inventory so each phoneme appears in each split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import signal

from .ci_frontend import FS
from .phoneme_labels import INVENTORY, PHONEMES, MoaClass, PhonemeTrack
from .signal_io import AudioBuffer

PEAK = 0.5
RAMP_S = 0.005
GAP_PROB = 0.25

# (F1, F2, F3) at onset and offset; monophthongs repeat the onset
_VOWELS: Dict[str, Tuple[Tuple[float, float, float], Tuple[float, float, float]]] = {
    "AA": ((730, 1090, 2440),) * 2,
    "AE": ((660, 1720, 2410),) * 2,
    "AH": ((520, 1190, 2390),) * 2,
    "AO": ((570, 840, 2410),) * 2,
    "EH": ((530, 1840, 2480),) * 2,
    "ER": ((490, 1350, 1690),) * 2,
    "IH": ((390, 1990, 2550),) * 2,
    "IY": ((270, 2290, 3010),) * 2,
    "UH": ((440, 1020, 2240),) * 2,
    "UW": ((300, 870, 2240),) * 2,
    "AW": ((730, 1090, 2440), (440, 1020, 2240)),
    "AY": ((730, 1090, 2440), (390, 1990, 2550)),
    "EY": ((530, 1840, 2480), (270, 2290, 3010)),
    "OW": ((570, 840, 2410), (300, 870, 2240)),
    "OY": ((570, 840, 2410), (390, 1990, 2550)),
}

_SEMIVOWELS = {
    "L": ((360, 1300, 2700), (500, 1400, 2500)),
    "R": ((420, 1100, 1600), (500, 1300, 2000)),
    "W": ((300, 650, 2200), (450, 1000, 2300)),
    "Y": ((270, 2200, 3000), (400, 1900, 2600)),
}

# murmur pole plus a weak higher formant
_NASALS = {"M": (250, 1100), "N": (250, 1700), "NG": (250, 2300)}

# (band lo, band hi, noise amp, voicing amp)
_FRICATIVES = {
    "S": (4500, 7500, 0.30, 0.0),
    "SH": (2000, 4500, 0.35, 0.0),
    "F": (1000, 7500, 0.08, 0.0),
    "TH": (1500, 7500, 0.06, 0.0),
    "HH": (500, 3500, 0.12, 0.0),
    "Z": (4500, 7500, 0.20, 0.15),
    "ZH": (2000, 4500, 0.25, 0.15),
    "V": (1000, 7500, 0.06, 0.20),
    "DH": (1500, 7500, 0.05, 0.20),
}

# (burst lo, burst hi, voiced)
_STOPS = {
    "P": (300, 1500, False),
    "T": (3000, 7000, False),
    "K": (1500, 3000, False),
    "B": (300, 1200, True),
    "D": (2500, 6000, True),
    "G": (1200, 2800, True),
}

_AFFRICATES = {"CH": ("SH", False), "JH": ("ZH", True)}

_DURATIONS_MS = {
    MoaClass.VOWEL: (90, 150),
    MoaClass.SEMIVOWEL: (60, 90),
    MoaClass.NASAL: (60, 90),
    MoaClass.FRICATIVE: (70, 120),
    MoaClass.STOP: (60, 100),
    MoaClass.AFFRICATE: (90, 130),
}


@dataclass(frozen=True)
class SyntheticUtterance:
    utterance_id: str
    split: str
    audio: AudioBuffer
    track: PhonemeTrack


def _ramp(n: int) -> np.ndarray:
    r = min(int(RAMP_S * FS), n // 2)
    env = np.ones(n)
    if r:
        edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(r) / r)
        env[:r] = edge
        env[n - r:] = edge[::-1]
    return env


def _harmonic(n: int, f0: float, formants_on, formants_off, gains=(1.0, 0.6, 0.3)) -> np.ndarray:
    t = np.arange(n) / FS
    frac = t / max(t[-1], 1e-9) if n > 1 else np.zeros(n)
    f0_track = f0 * (1.0 - 0.08 * frac)
    phase = 2 * np.pi * np.cumsum(f0_track) / FS
    out = np.zeros(n)
    on, off = np.asarray(formants_on, float), np.asarray(formants_off, float)
    tracks = on[:, None] + (off - on)[:, None] * frac[None, :]
    for k in range(1, int(7600 // f0) + 1):
        fk = k * f0_track
        amp = 0.01 * np.ones(n)
        for (g, ft) in zip(gains, tracks):
            bw = 60.0 + 0.08 * ft
            amp += g * np.exp(-0.5 * ((fk - ft) / bw) ** 2)
        amp *= fk < 7600
        out += amp * np.sin(k * phase) / np.sqrt(k)
    return out / (np.max(np.abs(out)) + 1e-12)


def _band_noise(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    sos = signal.butter(4, (lo, min(hi, 7800.0)), "bandpass", fs=FS, output="sos")
    x = signal.sosfilt(sos, rng.standard_normal(n + 256))[256:]
    return x / (np.max(np.abs(x)) + 1e-12)


def _voicing_bar(n: int, f0: float) -> np.ndarray:
    return _harmonic(n, f0, (200, 2500, 3500), (200, 2500, 3500), gains=(1.0, 0.0, 0.0))


def synthesize_phoneme(symbol: str, n: int, f0: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` samples of ``symbol``; deterministic given the generator state."""
    moa = INVENTORY[symbol]
    if moa is MoaClass.VOWEL:
        on, off = _VOWELS[symbol]
        seg = _harmonic(n, f0, on, off)
    elif moa is MoaClass.SEMIVOWEL:
        on, off = _SEMIVOWELS[symbol]
        seg = 0.5 * _harmonic(n, f0, on, off)
    elif moa is MoaClass.NASAL:
        murmur, upper = _NASALS[symbol]
        seg = 0.4 * _harmonic(n, f0, (murmur, upper, 2700), (murmur, upper, 2700), gains=(1.0, 0.15, 0.05))
    elif moa is MoaClass.FRICATIVE:
        lo, hi, a_noise, a_voice = _FRICATIVES[symbol]
        seg = a_noise * _band_noise(rng, n, lo, hi)
        if a_voice:
            seg = seg + a_voice * _voicing_bar(n, f0)
    elif moa is MoaClass.STOP:
        lo, hi, voiced = _STOPS[symbol]
        n_close = int(n * 0.5)
        n_burst = min(int(0.015 * FS), n - n_close)
        seg = np.zeros(n)
        if voiced:
            seg[:n_close] = 0.06 * _voicing_bar(n_close, f0)
        burst = _band_noise(rng, n - n_close, lo, hi)
        decay = np.exp(-np.arange(n - n_close) / max(n_burst, 1))
        seg[n_close:] = (0.35 if not voiced else 0.25) * burst * decay
    else:
        fric, voiced = _AFFRICATES[symbol]
        lo, hi, a_noise, a_voice = _FRICATIVES[fric]
        n_close = int(n * 0.35)
        seg = np.zeros(n)
        if voiced:
            seg[:n_close] = 0.06 * _voicing_bar(n_close, f0)
        tail = n - n_close
        onset = np.minimum(1.0, 0.3 + np.arange(tail) / (0.01 * FS))
        seg[n_close:] = a_noise * _band_noise(rng, tail, lo, hi) * onset
        if a_voice:
            seg[n_close:] += a_voice * _voicing_bar(tail, f0)
    return seg * _ramp(n)


def synthesize_utterance(symbols: Sequence[str], rng: np.random.Generator,
                         utterance_id: str = "", split: str = "") -> SyntheticUtterance:
    f0 = float(rng.uniform(100.0, 140.0))
    parts = [np.zeros(int(rng.uniform(0.06, 0.12) * FS))]
    pos = parts[0].size
    intervals = []
    for k, sym in enumerate(symbols):
        if k and rng.random() < GAP_PROB:
            gap = np.zeros(int(rng.uniform(0.04, 0.12) * FS))
            parts.append(gap)
            pos += gap.size
        lo, hi = _DURATIONS_MS[INVENTORY[sym]]
        n = int(rng.uniform(lo, hi) * FS / 1000)
        parts.append(synthesize_phoneme(sym, n, f0 * float(rng.uniform(0.95, 1.05)), rng))
        intervals.append((pos / FS, (pos + n) / FS, sym))
        pos += n
    parts.append(np.zeros(int(0.15 * FS)))
    x = np.concatenate(parts)
    x *= PEAK / np.max(np.abs(x))
    return SyntheticUtterance(utterance_id, split, AudioBuffer(x, FS), PhonemeTrack(tuple(intervals)))


def split_sequences(rng: np.random.Generator, n_utterances: int, per_utterance: int) -> List[List[str]]:
    """Chop shuffled copies of the inventory into ``n_utterances`` runs."""
    need = n_utterances * per_utterance
    pool: List[str] = []
    while len(pool) < need:
        pool.extend(PHONEMES[j] for j in rng.permutation(len(PHONEMES)))
    return [pool[k * per_utterance:(k + 1) * per_utterance] for k in range(n_utterances)]


def generate_corpus(seed: int, n_train: int, n_dev: int, n_test: int,
                    phonemes_per_utterance: int = 12) -> List[SyntheticUtterance]:
    if min(n_train, n_dev, n_test) < 1 or phonemes_per_utterance < 1:
        raise ValueError("every split needs at least one utterance of at least one phoneme")
    out = []
    for offset, (split, count) in enumerate((("train", n_train), ("dev", n_dev), ("test", n_test))):
        rng = np.random.default_rng([seed, offset])
        for k, symbols in enumerate(split_sequences(rng, count, phonemes_per_utterance)):
            out.append(synthesize_utterance(symbols, rng, f"{split}{k:03d}", split))
    return out
