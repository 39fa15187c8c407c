"""Objective intelligibility (ECM, SRMR-CI), phoneme scoring with partial credit, RAU."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from importlib import resources
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from .ci_frontend import CHANNEL_EDGES_HZ, FS, Electrodogram
from .signal_io import AudioBuffer

ENVELOPE_RATE = 500
ENVELOPE_LOWPASS_HZ = 128.0
MOD_BANDS = 8
MOD_Q = 2.0
MOD_CENTERS_HZ = np.geomspace(4.0, 64.0, MOD_BANDS)

REPORT_COLUMNS = ("condition", "room", "utterance_id", "ecm", "srmr_ci", "pct_correct", "rau")
CONDITIONS = ("REV", "ERM-1", "ERM-2", "ERM-MOA", "ERM-PHN", "IRM", "IBM", "DP")


class MetricError(ValueError):
    pass


# --- ECM --------------------------------------------------------------------

def compute_ecm(processed: Electrodogram, reference: Electrodogram) -> float:
    """Mean squared Pearson correlation of channel envelopes against the reference.

    Channels flat in both signals are skipped; flat in only one counts as 0.
    """
    a = getattr(processed, "magnitudes", processed)
    b = getattr(reference, "magnitudes", reference)
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"electrodogram shapes differ: {a.shape} vs {b.shape}")
    da = a - a.mean(axis=0)
    db = b - b.mean(axis=0)
    saa = np.sum(da * da, axis=0)
    sbb = np.sum(db * db, axis=0)
    sab = np.sum(da * db, axis=0)
    scores = []
    for ch in range(a.shape[1]):
        if saa[ch] == 0 and sbb[ch] == 0:
            continue
        if saa[ch] == 0 or sbb[ch] == 0:
            scores.append(0.0)
            continue
        scores.append(min(1.0, sab[ch] * sab[ch] / (saa[ch] * sbb[ch])))
    if not scores:
        raise MetricError("every channel is constant in both signals: ECM undefined")
    return float(np.mean(scores))


# --- SRMR-CI ----------------------------------------------------------------

def _channel_filters():
    return [signal.butter(4, (lo, hi), "bandpass", fs=FS, output="sos") for lo, hi in CHANNEL_EDGES_HZ]


def _modulation_filters():
    filters = []
    half = 1.0 / (2.0 * MOD_Q)
    stretch = math.sqrt(1.0 + half * half)
    for fc in MOD_CENTERS_HZ:
        lo, hi = fc * (stretch - half), fc * (stretch + half)
        filters.append(signal.butter(1, (lo, hi), "bandpass", fs=ENVELOPE_RATE, output="sos"))
    return filters


_CH_SOS = _channel_filters()
_ENV_SOS = signal.butter(4, ENVELOPE_LOWPASS_HZ, "lowpass", fs=FS, output="sos")
_MOD_SOS = _modulation_filters()


def channel_envelopes(x: np.ndarray) -> np.ndarray:
    """(22, n) temporal envelopes at 500 Hz from the CI channel filterbank."""
    step = FS // ENVELOPE_RATE
    out = []
    for sos in _CH_SOS:
        band = signal.sosfilt(sos, x)
        env = np.abs(signal.hilbert(band))
        env = signal.sosfilt(_ENV_SOS, env)
        out.append(env[::step])
    return np.asarray(out)


def modulation_energies(x) -> np.ndarray:
    """Energy per modulation band, summed over the 22 channels."""
    samples = x.samples if isinstance(x, AudioBuffer) else np.asarray(x, dtype=np.float64)
    if isinstance(x, AudioBuffer) and x.sample_rate_hz != FS:
        raise MetricError("SRMR-CI expects 16 kHz audio")
    if samples.size < FS // 2:
        raise MetricError(f"signal of {samples.size / FS:.3f} s is shorter than 0.5 s")
    env = channel_envelopes(samples)
    energies = np.zeros(MOD_BANDS)
    for k, sos in enumerate(_MOD_SOS):
        band = signal.sosfilt(sos, env, axis=1)
        energies[k] = np.sum(np.mean(band * band, axis=1))
    return energies


def compute_srmr_ci(x) -> float:
    """Mean energy of modulation bands 1-4 over mean energy of bands 5-8."""
    e = modulation_energies(x)
    high = float(np.mean(e[4:]))
    if high == 0.0:
        return math.inf
    return float(np.mean(e[:4])) / high


# --- intelligibility scoring --------------------------------------------------

def load_lexicon(path=None) -> Dict[str, Tuple[str, ...]]:
    if path is None:
        text = resources.files("phonemask").joinpath("data/lexicon.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    lex = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise MetricError(f"lexicon line {lineno}: expected 'word<TAB>phonemes'")
        lex[parts[0].strip().lower()] = tuple(parts[1].split())
    return lex


def normalize_words(text: str) -> List[str]:
    text = text.lower().replace("’", "'")
    text = re.sub(r"[^a-z' ]+", " ", text)
    return [w.strip("'") for w in text.split() if w.strip("'")]


def _is_dont_know(words: Sequence[str]) -> bool:
    return [w.replace("'", "") for w in words] == ["i", "dont", "know"]


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class ScoreReport:
    phonemes_correct: int
    phonemes_total: int

    def __post_init__(self):
        if self.phonemes_total < 1 or not 0 <= self.phonemes_correct <= self.phonemes_total:
            raise MetricError("need 0 <= correct <= total and total >= 1")

    @property
    def percent_correct(self) -> float:
        return 100.0 * self.phonemes_correct / self.phonemes_total

    @property
    def rau(self) -> float:
        return rau_transform(self.phonemes_correct, self.phonemes_total)


def score_intelligibility(response: str, target: str, lexicon: Optional[Dict] = None) -> ScoreReport:
    """Phonemes of the target credited by the response.

    Exact word matches (left to right, each target word used once) earn all
    their phonemes.  Leftover response words are then paired greedily with
    leftover target words by longest common phoneme subsequence, largest
    overlap first, ties to the earliest target word.
    """
    lexicon = load_lexicon() if lexicon is None else lexicon
    target_words = normalize_words(target)
    if not target_words:
        raise MetricError("target sentence is empty")
    missing = sorted({w for w in target_words if w not in lexicon})
    if missing:
        raise MetricError(f"target words missing from the lexicon: {missing}")
    total = sum(len(lexicon[w]) for w in target_words)
    response_words = normalize_words(response)
    if _is_dont_know(response_words):
        return ScoreReport(0, total)

    open_targets = list(range(len(target_words)))
    leftover = []
    correct = 0
    for w in response_words:
        hit = next((j for j in open_targets if target_words[j] == w), None)
        if hit is None:
            leftover.append(w)
        else:
            open_targets.remove(hit)
            correct += len(lexicon[w])

    pairs = []
    for r, w in enumerate(leftover):
        if w not in lexicon:
            continue
        for j in open_targets:
            n = lcs_length(lexicon[w], lexicon[target_words[j]])
            if n:
                pairs.append((-n, j, r))
    pairs.sort()
    used_r, used_t = set(), set()
    for neg_n, j, r in pairs:
        if j in used_t or r in used_r:
            continue
        used_t.add(j)
        used_r.add(r)
        correct += -neg_n
    return ScoreReport(correct, total)


def rau_transform(correct: int, total: int) -> float:
    """Studebaker's rationalised arcsine transform of ``correct`` out of ``total``."""
    if total < 1 or not 0 <= correct <= total:
        raise MetricError("need 0 <= correct <= total and total >= 1")
    theta = (math.asin(math.sqrt(correct / (total + 1)))
             + math.asin(math.sqrt((correct + 1) / (total + 1))))
    return 146.0 / math.pi * theta - 23.0


# --- reports ----------------------------------------------------------------

@dataclass
class MetricsRow:
    condition: str
    room: str
    utterance_id: str
    ecm: float
    srmr_ci: float
    pct_correct: float = math.nan
    rau: float = math.nan


@dataclass
class MetricsReport:
    rows: List[MetricsRow]

    def aggregate(self) -> Dict[Tuple[str, str, str], Tuple[float, float]]:
        """``(metric, room, condition) -> (mean, std)`` over utterances."""
        groups: Dict[Tuple[str, str, str], List[float]] = {}
        for row in self.rows:
            for metric in ("ecm", "srmr_ci"):
                groups.setdefault((metric, row.room, row.condition), []).append(getattr(row, metric))
        return {k: (float(np.mean(v)), float(np.std(v))) for k, v in groups.items()}


def _fmt(v: float) -> str:
    return "" if isinstance(v, float) and math.isnan(v) else repr(float(v))


def rows_to_csv(rows: Iterable[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([r.condition, r.room, r.utterance_id, _fmt(r.ecm), _fmt(r.srmr_ci),
                    _fmt(r.pct_correct), _fmt(r.rau)])
    return buf.getvalue()


def rows_from_csv(text: str) -> List[MetricsRow]:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append(MetricsRow(
            rec["condition"], rec["room"], rec["utterance_id"],
            float(rec["ecm"]), float(rec["srmr_ci"]),
            float(rec["pct_correct"]) if rec["pct_correct"] else math.nan,
            float(rec["rau"]) if rec["rau"] else math.nan,
        ))
    return out


def condition_table_csv(report: MetricsReport, conditions: Sequence[str] = CONDITIONS) -> str:
    """Metric x room rows, one column per condition, cells ``mean (std)``."""
    agg = report.aggregate()
    rooms = sorted({r.room for r in report.rows})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "room", *conditions])
    for metric, label in (("ecm", "ECM"), ("srmr_ci", "SRMR-CI")):
        for room in rooms:
            cells = []
            for cond in conditions:
                if (metric, room, cond) in agg:
                    mean, std = agg[(metric, room, cond)]
                    cells.append(f"{mean:.3f} ({std:.3f})")
                else:
                    cells.append("")
            w.writerow([label, room, *cells])
    return buf.getvalue()
