"""Audio buffers, WAV I/O, convolution, 48k->16k resampling and RMS levelling."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.io import wavfile

SUPPORTED_RATES = (16000, 48000)

# Anti-aliasing FIR for 48 kHz -> 16 kHz.
AA_TAPS = 255
AA_CUTOFF_HZ = 8200.0
AA_KAISER_BETA = 5.0


class AudioError(ValueError):
    """Raised for invalid audio data or unsupported files."""


@dataclass(frozen=True)
class AudioBuffer:
    """Mono signal at full scale +-1.0."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise AudioError("audio samples must be finite")
        if self.sample_rate_hz not in SUPPORTED_RATES:
            raise AudioError(f"sample rate {self.sample_rate_hz} Hz unsupported")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def rms(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))


def read_wav(path) -> AudioBuffer:
    """Read a mono 16-bit PCM or 32-bit float WAV file."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such audio file: {path}")
    rate, data = wavfile.read(path)
    channels = 1 if data.ndim == 1 else data.shape[1]
    if channels != 1:
        raise AudioError(f"channel count {channels} unsupported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioError(f"encoding {data.dtype} unsupported (need int16 or float32 PCM)")
    if rate not in SUPPORTED_RATES:
        raise AudioError(f"sample rate {rate} Hz unsupported")
    return AudioBuffer(samples, int(rate))


def write_wav(path, buf: AudioBuffer) -> None:
    """Write ``buf`` as a 32-bit float mono WAV.

    Samples outside +-1.0 raise instead of being clipped.  Values are stored
    as float32, so the round trip is exact for float32-representable input.
    """
    x = buf.samples
    if x.size and np.max(np.abs(x)) > 1.0:
        raise AudioError(f"sample magnitude {np.max(np.abs(x)):.4f} exceeds full scale")
    path = os.fspath(path)
    parent = os.path.dirname(path) or "."
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise PermissionError(f"cannot write to {path}")
    wavfile.write(path, buf.sample_rate_hz, x.astype(np.float32))


def convolve(x: AudioBuffer, h) -> AudioBuffer:
    """Full linear convolution of ``x`` with an impulse response.

    ``h`` is anything with ``coefficients`` and ``sample_rate_hz`` (a Rir) or
    another AudioBuffer.
    """
    coeffs = getattr(h, "coefficients", None)
    if coeffs is None:
        coeffs = h.samples
    if x.sample_rate_hz != h.sample_rate_hz:
        raise AudioError(
            f"rate mismatch: signal {x.sample_rate_hz} Hz vs response {h.sample_rate_hz} Hz"
        )
    if len(x) == 0 or len(coeffs) == 0:
        return AudioBuffer(np.zeros(max(len(x) + len(coeffs) - 1, 0)), x.sample_rate_hz)
    y = signal.fftconvolve(x.samples, np.asarray(coeffs, dtype=np.float64), mode="full")
    return AudioBuffer(y, x.sample_rate_hz)


def antialias_filter() -> np.ndarray:
    return signal.firwin(AA_TAPS, AA_CUTOFF_HZ, window=("kaiser", AA_KAISER_BETA), fs=48000)


def resample_48k_to_16k_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    h = antialias_filter()
    delay = (AA_TAPS - 1) // 2
    y = np.convolve(x, h, mode="full")[delay : delay + x.size]
    return y[::3].copy()


def resample_48k_to_16k(x: AudioBuffer) -> AudioBuffer:
    """Low-pass below 8 kHz with a linear-phase FIR, then keep every third sample."""
    if x.sample_rate_hz != 48000:
        raise AudioError(f"expected 48000 Hz input, got {x.sample_rate_hz} Hz")
    return AudioBuffer(resample_48k_to_16k_array(x.samples), 16000)


def rms_equalize(x: AudioBuffer, target_rms: float) -> AudioBuffer:
    if target_rms <= 0:
        raise AudioError("target_rms must be positive")
    current = x.rms()
    if current == 0.0:
        raise AudioError("cannot RMS-equalize an all-zero signal")
    return AudioBuffer(x.samples * (target_rms / current), x.sample_rate_hz)
