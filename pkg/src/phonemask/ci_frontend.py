"""Analysis and synthesis at CI-processor resolution.

8 ms frames (128 samples at 16 kHz), 2 ms hop, 65 FFT bins, a 22-channel
ACE-style filterbank, N-of-M maxima selection, a sine vocoder and Hann
overlap-add resynthesis.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .signal_io import AudioBuffer

FS = 16000
FRAME_LEN = 128
HOP = 32
N_BINS = FRAME_LEN // 2 + 1
N_CHANNELS = 22
LOG_EPS = 1e-10
BIN_HZ = FS / FRAME_LEN

# Member-bin counts per channel, low -> high frequency, starting at bin 2.
# Nucleus-style layout: single bins up to ~1.3 kHz, then widening groups.
CHANNEL_WIDTHS = (1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 4, 4, 5, 5, 6, 7, 8)
FIRST_BIN = 2

GRID_KINDS = ("power", "log_feature", "amplitude", "mask", "electrodogram")
_GRID_MAGIC = b"PMGRID\x00\x00"
_GRID_VERSION = 1


class FrontendError(ValueError):
    pass


def _channel_bins():
    edges = FIRST_BIN + np.concatenate([[0], np.cumsum(CHANNEL_WIDTHS)])
    return [np.arange(edges[k], edges[k + 1]) for k in range(N_CHANNELS)]


CHANNEL_BINS = _channel_bins()
LAST_BIN = int(CHANNEL_BINS[-1][-1])
CHANNEL_CENTER_HZ = np.array([BIN_HZ * b.mean() for b in CHANNEL_BINS])
# lower / upper band edges in Hz, used by the time-domain filterbank of SRMR-CI
CHANNEL_EDGES_HZ = np.array([(BIN_HZ * (b[0] - 0.5), BIN_HZ * (b[-1] + 0.5)) for b in CHANNEL_BINS])
CHANNEL_WEIGHTS = [np.ones(b.size) for b in CHANNEL_BINS]


@dataclass
class TfGrid:
    """Frames x 65 matrix tagged with what it holds."""

    values: np.ndarray
    kind: str = "power"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != N_BINS:
            raise FrontendError(f"grid must be n_frames x {N_BINS}, got {v.shape}")
        if self.kind not in GRID_KINDS[:3]:
            raise FrontendError(f"unknown grid kind {self.kind!r}")
        if self.kind in ("power", "amplitude") and np.any(v < 0):
            raise FrontendError(f"{self.kind} grid has negative entries")
        self.values = v

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass
class NormStats:
    mean: np.ndarray
    variance: np.ndarray
    count: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if self.mean.shape != (N_BINS,) or self.variance.shape != (N_BINS,):
            raise FrontendError("norm stats need one mean and variance per bin")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.variance))):
            raise FrontendError("norm stats must be finite")
        if np.any(self.variance <= 0):
            bad = np.nonzero(self.variance <= 0)[0].tolist()
            raise FrontendError(f"zero variance in bins {bad}: degenerate training set")

    def merge(self, other: "NormStats") -> "NormStats":
        """Combine statistics of two disjoint frame sets (Chan et al.)."""
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = (self.variance * self.count + other.variance * other.count
              + delta**2 * self.count * other.count / n)
        return NormStats(mean, m2 / n, n)


@dataclass
class Electrodogram:
    magnitudes: np.ndarray
    channel_center_hz: np.ndarray = None

    def __post_init__(self):
        m = np.asarray(self.magnitudes, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != N_CHANNELS:
            raise FrontendError(f"electrodogram must be n_frames x {N_CHANNELS}")
        if np.any(m < 0):
            raise FrontendError("electrodogram magnitudes must be nonnegative")
        self.magnitudes = m
        if self.channel_center_hz is None:
            self.channel_center_hz = CHANNEL_CENTER_HZ.copy()

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]


def n_frames_for(n_samples: int) -> int:
    if n_samples < FRAME_LEN:
        raise FrontendError(f"signal of {n_samples} samples is shorter than one frame")
    return (n_samples - FRAME_LEN) // HOP + 1


def frame_signal(x) -> np.ndarray:
    """Frames as an (n_frames, 128) array; frame k covers samples [32k, 32k + 128)."""
    if isinstance(x, AudioBuffer):
        if x.sample_rate_hz != FS:
            raise FrontendError("front end runs at 16 kHz")
        x = x.samples
    x = np.asarray(x, dtype=np.float64)
    n = n_frames_for(x.size)
    idx = HOP * np.arange(n)[:, None] + np.arange(FRAME_LEN)[None, :]
    return x[idx]


def analysis_window() -> np.ndarray:
    # periodic Hann; its square overlap-adds to a constant 1.5 at a 32-sample hop
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(FRAME_LEN) / FRAME_LEN)


def stft(x) -> np.ndarray:
    """Complex (n_frames, 65) spectrum of Hann-windowed frames."""
    return np.fft.rfft(frame_signal(x) * analysis_window(), axis=1)


def power_spectrum(frames: np.ndarray) -> TfGrid:
    spec = np.fft.rfft(np.asarray(frames, dtype=np.float64) * analysis_window(), axis=1)
    return TfGrid(spec.real**2 + spec.imag**2, "power")


def analyze(x) -> TfGrid:
    return power_spectrum(frame_signal(x))


def log_compress(g: TfGrid) -> TfGrid:
    if g.kind != "power":
        raise FrontendError("log compression expects a power grid")
    return TfGrid(np.log(g.values + LOG_EPS), "log_feature")


def fit_norm_stats(grids: Iterable[TfGrid]) -> NormStats:
    stacked = np.concatenate([g.values for g in grids], axis=0)
    if stacked.shape[0] < 2:
        raise FrontendError("need at least two frames to fit normalisation")
    return NormStats(stacked.mean(axis=0), stacked.var(axis=0), stacked.shape[0])


def normalize(g: TfGrid, stats: NormStats) -> TfGrid:
    return TfGrid((g.values - stats.mean) / np.sqrt(stats.variance), "log_feature")


def ace_channelize(g: TfGrid) -> np.ndarray:
    """(n_frames, 22) envelopes: square root of the weighted member-bin power sum."""
    if g.kind != "power":
        raise FrontendError("ACE filterbank expects a power grid")
    out = np.empty((g.n_frames, N_CHANNELS))
    for ch, (bins, w) in enumerate(zip(CHANNEL_BINS, CHANNEL_WEIGHTS)):
        out[:, ch] = np.sqrt(g.values[:, bins] @ w)
    return out


def select_maxima(envelopes: np.ndarray, n_maxima: int = 8) -> Electrodogram:
    """Keep the ``n_maxima`` largest channels per frame; ties go to the lower channel."""
    env = np.asarray(envelopes, dtype=np.float64)
    if not 1 <= n_maxima <= N_CHANNELS:
        raise FrontendError(f"n_maxima must be in 1..{N_CHANNELS}")
    if n_maxima == N_CHANNELS:
        return Electrodogram(env.copy())
    # stable sort on -value keeps lower channel indices first among equals
    order = np.argsort(-env, axis=1, kind="stable")[:, :n_maxima]
    out = np.zeros_like(env)
    rows = np.arange(env.shape[0])[:, None]
    out[rows, order] = env[rows, order]
    return Electrodogram(out)


def electrodogram(g: TfGrid, n_maxima: int = 8) -> Electrodogram:
    return select_maxima(ace_channelize(g), n_maxima)


def sine_vocode(e: Electrodogram, n_samples: int = None) -> AudioBuffer:
    """Sum of channel-centre sinusoids with linearly interpolated envelopes.

    Frame t's envelope value sits at its window centre, sample 32 t + 64,
    and is held beyond the first and last centres.
    """
    n_frames = e.n_frames
    if n_samples is None:
        n_samples = (n_frames - 1) * HOP + FRAME_LEN if n_frames else 0
    t = np.arange(n_samples)
    centres = HOP * np.arange(n_frames) + FRAME_LEN // 2
    out = np.zeros(n_samples)
    if n_frames == 0:
        return AudioBuffer(out, FS)
    for ch in range(N_CHANNELS):
        env = e.magnitudes[:, ch]
        if not np.any(env):
            continue
        amp = np.interp(t, centres, env)
        out += amp * np.sin(2 * np.pi * e.channel_center_hz[ch] * t / FS)
    return AudioBuffer(out, FS)


def overlap_add_resynthesize(mag: TfGrid, phase: np.ndarray) -> AudioBuffer:
    """Inverse DFT per frame, Hann synthesis window, overlap-add, window-power normalised."""
    phase = np.asarray(phase, dtype=np.float64)
    if mag.values.shape != phase.shape:
        raise FrontendError(f"magnitude {mag.values.shape} and phase {phase.shape} differ")
    n_frames = mag.n_frames
    if n_frames == 0:
        return AudioBuffer(np.zeros(0), FS)
    frames = np.fft.irfft(mag.values * np.exp(1j * phase), n=FRAME_LEN, axis=1)
    w = analysis_window()
    n_out = (n_frames - 1) * HOP + FRAME_LEN
    out = np.zeros(n_out)
    norm = np.zeros(n_out)
    for k in range(n_frames):
        sl = slice(k * HOP, k * HOP + FRAME_LEN)
        out[sl] += frames[k] * w
        norm[sl] += w * w
    nz = norm > 1e-8
    out[nz] /= norm[nz]
    out[~nz] = 0.0
    return AudioBuffer(out, FS)


# --- flat binary grid container -------------------------------------------

def grid_to_bytes(values: np.ndarray, kind: str) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2:
        raise FrontendError("grid container holds 2-D arrays")
    if kind not in GRID_KINDS:
        raise FrontendError(f"unknown grid kind {kind!r}")
    buf = io.BytesIO()
    buf.write(_GRID_MAGIC)
    buf.write(struct.pack("<IQQB", _GRID_VERSION, values.shape[0], values.shape[1],
                          GRID_KINDS.index(kind)))
    buf.write(values.tobytes(order="C"))
    return buf.getvalue()


def grid_from_bytes(data: bytes):
    """Inverse of ``grid_to_bytes``; returns ``(values, kind)``."""
    if data[:8] != _GRID_MAGIC:
        raise FrontendError("not a grid container")
    version, rows, cols, kind_id = struct.unpack_from("<IQQB", data, 8)
    if version != _GRID_VERSION:
        raise FrontendError(f"unsupported grid container version {version}")
    offset = 8 + struct.calcsize("<IQQB")
    values = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset)
    return values.reshape(rows, cols).astype(np.float64), GRID_KINDS[kind_id]


def save_grid(path, values, kind: str) -> None:
    with open(path, "wb") as fh:
        fh.write(grid_to_bytes(values, kind))


def load_grid(path):
    with open(path, "rb") as fh:
        return grid_from_bytes(fh.read())


def electrodogram_csv(e: Electrodogram) -> str:
    lines = ["frame,time_s," + ",".join(f"ch{k + 1}_{hz:.0f}hz" for k, hz in enumerate(e.channel_center_hz))]
    for t, row in enumerate(e.magnitudes):
        centre = (HOP * t + FRAME_LEN // 2) / FS
        lines.append(f"{t},{centre:.4f}," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"
