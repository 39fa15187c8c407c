"""Shoebox room impulse responses and the acoustic quantities derived from them.

Image sources follow the Allen-Berkley enumeration: for every integer lattice
index ``n`` and mirror parity ``p`` per axis the image sits at
``(1 - 2p) * src + 2 n L`` and has met ``|n - p| + |n|`` walls on that axis.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import signal

from .signal_io import resample_48k_to_16k_array

SPEED_OF_SOUND = 343.0
DIRECT_WINDOW_S = 0.008


class RoomError(ValueError):
    pass


@dataclass(frozen=True)
class RoomSpec:
    dimensions_m: tuple
    source_pos_m: tuple
    receiver_pos_m: tuple
    target_rt60_s: Optional[float] = None
    reflection_coeffs: Optional[tuple] = None  # (x0, x1, y0, y1, z0, z1)
    speed_of_sound_mps: float = SPEED_OF_SOUND
    sim_rate_hz: int = 48000
    max_order: Optional[int] = None
    highpass_hz: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        dims = np.asarray(self.dimensions_m, dtype=float)
        src = np.asarray(self.source_pos_m, dtype=float)
        rcv = np.asarray(self.receiver_pos_m, dtype=float)
        if dims.shape != (3,) or np.any(dims <= 0):
            raise RoomError("room dimensions must be three positive lengths")
        for label, pos in (("source", src), ("receiver", rcv)):
            if pos.shape != (3,) or np.any(pos <= 0) or np.any(pos >= dims):
                raise RoomError(f"{label} position {tuple(pos)} is not strictly inside the room")
        if np.allclose(src, rcv):
            raise RoomError("source and receiver coincide (zero distance)")
        if (self.target_rt60_s is None) == (self.reflection_coeffs is None):
            raise RoomError("give exactly one of target_rt60_s or reflection_coeffs")
        if self.reflection_coeffs is not None:
            beta = np.asarray(self.reflection_coeffs, dtype=float)
            if beta.shape != (6,) or np.any(beta < 0) or np.any(beta >= 1):
                raise RoomError("need six reflection coefficients in [0, 1)")
        if self.target_rt60_s is not None and self.target_rt60_s <= 0:
            raise RoomError("target RT60 must be positive")
        if self.max_order is not None and self.max_order < 0:
            raise RoomError("max_order must be nonnegative")
        object.__setattr__(self, "dimensions_m", tuple(float(v) for v in dims))
        object.__setattr__(self, "source_pos_m", tuple(float(v) for v in src))
        object.__setattr__(self, "receiver_pos_m", tuple(float(v) for v in rcv))
        if self.reflection_coeffs is not None:
            object.__setattr__(self, "reflection_coeffs",
                               tuple(float(v) for v in self.reflection_coeffs))

    @property
    def distance_m(self) -> float:
        return float(np.linalg.norm(np.subtract(self.source_pos_m, self.receiver_pos_m)))

    def betas(self) -> np.ndarray:
        """Per-wall reflection coefficients.

        A room given by target RT60 gets a uniform coefficient fitted to the
        image set's own energy decay (see ``calibrate_reflection_coeff``).
        """
        if self.reflection_coeffs is not None:
            return np.asarray(self.reflection_coeffs, dtype=float)
        return np.full(6, calibrate_reflection_coeff(self))

    def nominal_rt60_s(self) -> float:
        """Target RT60, or the Eyring prediction from the mean reflection coefficient."""
        if self.target_rt60_s is not None:
            return float(self.target_rt60_s)
        return eyring_rt60(self.dimensions_m, float(np.mean(self.betas())), self.speed_of_sound_mps)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Rir:
    coefficients: np.ndarray
    sample_rate_hz: int
    direct_arrival_index: int
    direct_delay_s: Optional[float] = None  # geometric delay, when known

    def __post_init__(self):
        h = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(h)):
            raise RoomError("RIR coefficients must be finite")
        if h.size == 0 or not 0 <= self.direct_arrival_index < h.size:
            raise RoomError("direct arrival index outside the RIR")
        object.__setattr__(self, "coefficients", h)

    def __len__(self):
        return self.coefficients.shape[0]


@dataclass(frozen=True)
class RirSplit:
    direct_path: Rir
    residual: Rir


@dataclass(frozen=True)
class RoomAcousticsReport:
    rt60_s: float
    drr_db: float
    source_receiver_distance_m: float


def _volume_area(dimensions):
    L, W, H = dimensions
    return L * W * H, 2.0 * (L * W + L * H + W * H)


def eyring_rt60(dimensions, beta: float, c: float = SPEED_OF_SOUND) -> float:
    volume, area = _volume_area(dimensions)
    alpha = 1.0 - beta**2
    if alpha <= 0:
        return math.inf
    if alpha >= 1:
        return 0.0
    return 24.0 * math.log(10.0) * volume / (-c * area * math.log(1.0 - alpha))


def reflection_coeff_for_rt60(dimensions, target_rt60_s: float, c: float = SPEED_OF_SOUND) -> float:
    """Uniform wall reflection coefficient whose Eyring RT60 equals the target.

    Eyring: ``T = 24 ln10 V / (-c S ln(1 - alpha))`` with absorption
    ``alpha = 1 - beta**2``, hence ``beta = exp(-12 ln10 V / (c S T))``.
    """
    if not target_rt60_s > 0:
        raise RoomError("target RT60 must be positive")
    volume, area = _volume_area(dimensions)
    beta = math.exp(-12.0 * math.log(10.0) * volume / (c * area * target_rt60_s))
    if not beta < 1.0:
        raise RoomError(f"RT60 {target_rt60_s} s unreachable: reflection coefficient would be >= 1")
    return beta


def rir_length_samples(spec: RoomSpec) -> int:
    return int(math.ceil(1.25 * spec.nominal_rt60_s() * spec.sim_rate_hz))


def calibrate_reflection_coeff(spec: RoomSpec) -> float:
    """Uniform reflection coefficient giving the image-source RIR its target RT60.

    Specular images in a shoebox decay more slowly than Eyring predicts
    (grazing images meet few walls), so the Eyring value only seeds the
    search.  The predicted decay is the incoherent image energy
    ``beta**(2 k) / (4 pi d)**2`` binned by arrival sample, scored with the
    same Schroeder fit as measured RIRs; ``beta`` is found by bisection.
    """
    if spec.target_rt60_s is None:
        raise RoomError("calibration needs a target RT60")
    return _calibrate(spec.dimensions_m, spec.source_pos_m, spec.receiver_pos_m,
                      float(spec.target_rt60_s), spec.sim_rate_hz, spec.speed_of_sound_mps)


@functools.lru_cache(maxsize=64)
def _calibrate(dims, src, rcv, target, fs, c) -> float:
    probe = RoomSpec(dims, src, rcv, reflection_coeffs=(0.5,) * 6,
                     speed_of_sound_mps=c, sim_rate_hz=fs)
    length = int(math.ceil(1.25 * target * fs))
    d, _, idx = image_sources(probe, (length - 0.5) * c / fs)
    delays = np.rint(fs * d / c).astype(np.int64)
    keep = delays < length
    delays, d, order = delays[keep], d[keep], reflection_orders(idx[keep])
    spreading = 1.0 / (4 * np.pi * d) ** 2
    direct = int(round(fs * probe.distance_m / c))

    def predicted_rt60(beta):
        energy = np.bincount(delays, weights=spreading * beta ** (2.0 * order), minlength=length)
        try:
            return estimate_rt60_schroeder(Rir(np.sqrt(energy), fs, direct))
        except RoomError:
            return 0.0

    lo, hi = 0.0, 1.0 - 1e-9
    beta = reflection_coeff_for_rt60(dims, target, c)
    if predicted_rt60(beta) < target:
        lo = beta
    else:
        hi = beta
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if predicted_rt60(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-7:
            break
    return 0.5 * (lo + hi)


def image_sources(spec: RoomSpec, max_distance_m: float):
    """Enumerate images within ``max_distance_m`` of the receiver.

    Returns ``(distances, amplitudes, index)`` where ``index`` rows are
    ``(nx, ny, nz, px, py, pz)``.  Images beyond ``spec.max_order``
    reflections are dropped when an order limit is set.
    """
    dims = np.asarray(spec.dimensions_m)
    src = np.asarray(spec.source_pos_m)
    rcv = np.asarray(spec.receiver_pos_m)
    betas = spec.betas().reshape(3, 2)

    axis_terms = []
    for ax in range(3):
        L = dims[ax]
        n_max = int(math.ceil(max_distance_m / (2 * L))) + 1
        if spec.max_order is not None:
            n_max = min(n_max, spec.max_order // 2 + 1)
        n = np.arange(-n_max, n_max + 1)
        rows = []
        for p in (0, 1):
            offset = (1 - 2 * p) * src[ax] + 2 * n * L - rcv[ax]
            hits_low = np.abs(n - p)
            hits_high = np.abs(n)
            gain = np.power(betas[ax, 0], hits_low) * np.power(betas[ax, 1], hits_high)
            rows.append(np.stack([n, np.full_like(n, p), offset, hits_low + hits_high, gain], 1))
        axis_terms.append(np.concatenate(rows, 0))

    tx, ty, tz = axis_terms
    # prune each axis partially before forming the full product
    keep_x = np.abs(tx[:, 2]) <= max_distance_m
    keep_y = np.abs(ty[:, 2]) <= max_distance_m
    keep_z = np.abs(tz[:, 2]) <= max_distance_m
    tx, ty, tz = tx[keep_x], ty[keep_y], tz[keep_z]

    dxy2 = tx[:, None, 2] ** 2 + ty[None, :, 2] ** 2
    ix, iy = np.nonzero(dxy2 <= max_distance_m**2)
    out_d, out_a, out_idx = [], [], []
    for k in range(tz.shape[0]):
        d2 = dxy2[ix, iy] + tz[k, 2] ** 2
        order = tx[ix, 3] + ty[iy, 3] + tz[k, 3]
        ok = d2 <= max_distance_m**2
        if spec.max_order is not None:
            ok &= order <= spec.max_order
        if not np.any(ok):
            continue
        sx, sy = ix[ok], iy[ok]
        d = np.sqrt(d2[ok])
        gain = tx[sx, 4] * ty[sy, 4] * tz[k, 4]
        out_d.append(d)
        out_a.append(gain / (4 * np.pi * d))
        idx = np.empty((sx.size, 6), dtype=np.int64)
        idx[:, 0], idx[:, 3] = tx[sx, 0], tx[sx, 1]
        idx[:, 1], idx[:, 4] = ty[sy, 0], ty[sy, 1]
        idx[:, 2], idx[:, 5] = tz[k, 0], tz[k, 1]
        out_idx.append(idx)
    if not out_d:
        return np.zeros(0), np.zeros(0), np.zeros((0, 6), dtype=np.int64)
    return np.concatenate(out_d), np.concatenate(out_a), np.concatenate(out_idx)


def reflection_orders(idx: np.ndarray) -> np.ndarray:
    n, p = idx[:, :3], idx[:, 3:]
    return np.sum(np.abs(n - p) + np.abs(n), axis=1)


def image_response(spec: RoomSpec, length: int) -> np.ndarray:
    """Raw image-source impulse train of ``length`` samples.

    Each image at distance ``d`` adds ``prod(beta) / (4 pi d)`` at the sample
    nearest to ``d / c``.  Images are accumulated in (delay, lattice index)
    order so the result is bit-reproducible.
    """
    fs = spec.sim_rate_hz
    c = spec.speed_of_sound_mps
    max_distance = (length - 0.5) * c / fs
    d, amp, idx = image_sources(spec, max_distance)
    delays = np.rint(fs * d / c).astype(np.int64)
    inside = (delays < length) & (amp != 0)
    delays, amp, idx = delays[inside], amp[inside], idx[inside]
    order = np.lexsort(tuple(idx[:, k] for k in range(5, -1, -1)) + (delays,))
    h = np.zeros(length)
    np.add.at(h, delays[order], amp[order])
    return h


def simulate_rir(spec: RoomSpec, length: Optional[int] = None) -> Rir:
    """Image-source RIR at ``spec.sim_rate_hz``.

    With ``spec.highpass_hz`` set, the impulse train is passed through a
    second-order Butterworth high-pass (the Allen-Berkley remedy for the DC
    build-up of all-positive reflections).
    """
    fs = spec.sim_rate_hz
    dist = spec.distance_m
    direct_index = int(round(fs * dist / spec.speed_of_sound_mps))
    if length is None:
        length = max(rir_length_samples(spec), direct_index + 1)
    if direct_index >= length:
        raise RoomError("RIR too short to hold the direct sound")
    h = image_response(spec, length)
    if spec.highpass_hz:
        sos = signal.butter(2, spec.highpass_hz, "highpass", fs=fs, output="sos")
        h = signal.sosfilt(sos, h)
    return Rir(h, fs, direct_index, direct_delay_s=dist / spec.speed_of_sound_mps)


def resample_rir(rir: Rir) -> Rir:
    """Anti-alias filter a 48 kHz RIR and decimate it to 16 kHz."""
    if rir.sample_rate_hz == 16000:
        return rir
    if rir.sample_rate_hz != 48000:
        raise RoomError(f"cannot resample RIR at {rir.sample_rate_hz} Hz")
    coeffs = resample_48k_to_16k_array(rir.coefficients)
    if rir.direct_delay_s is not None:
        idx = int(round(16000 * rir.direct_delay_s))
    else:
        idx = int(round(rir.direct_arrival_index / 3))
    idx = min(idx, coeffs.size - 1)
    return Rir(coeffs, 16000, idx, rir.direct_delay_s)


def split_direct_path(rir: Rir, mode: str = "simulated") -> RirSplit:
    """Split into the direct path (anchor through anchor + 8 ms) and the residual.

    ``mode="simulated"`` anchors at the geometric arrival index,
    ``mode="recorded"`` at the largest-magnitude coefficient.
    """
    h = rir.coefficients
    if mode == "simulated":
        anchor = rir.direct_arrival_index
    elif mode == "recorded":
        anchor = int(np.argmax(np.abs(h)))
    else:
        raise RoomError(f"unknown split mode {mode!r}")
    end = min(anchor + int(round(DIRECT_WINDOW_S * rir.sample_rate_hz)), h.size - 1)
    direct = np.zeros_like(h)
    direct[anchor : end + 1] = h[anchor : end + 1]
    residual = h - direct
    # keep the parts summing exactly to the original
    residual[anchor : end + 1] = 0.0
    return RirSplit(
        Rir(direct, rir.sample_rate_hz, anchor, rir.direct_delay_s),
        Rir(residual, rir.sample_rate_hz, anchor, rir.direct_delay_s),
    )


def compute_drr(split: RirSplit) -> float:
    e_direct = float(np.sum(split.direct_path.coefficients**2))
    e_resid = float(np.sum(split.residual.coefficients**2))
    if e_direct == 0.0:
        return -math.inf
    if e_resid == 0.0:
        return math.inf
    return 10.0 * math.log10(e_direct / e_resid)


def energy_decay_curve_db(h: np.ndarray) -> np.ndarray:
    energy = np.cumsum((np.asarray(h, dtype=float) ** 2)[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(energy / energy[0])


def estimate_rt60_schroeder(rir: Rir, upper_db: float = -5.0, lower_db: float = -25.0) -> float:
    """RT60 from a least-squares line through the Schroeder decay between -5 and -25 dB."""
    h = rir.coefficients
    if not np.any(h):
        raise RoomError("insufficient decay: RIR is all zeros")
    edc = energy_decay_curve_db(h)
    below_upper = np.nonzero(edc <= upper_db)[0]
    below_lower = np.nonzero(edc <= lower_db)[0]
    if below_upper.size == 0 or below_lower.size == 0:
        raise RoomError("insufficient decay")
    start, stop = below_upper[0], below_lower[0]
    seg = edc[start : stop + 1]
    ok = np.isfinite(seg)
    if np.count_nonzero(ok) < 2:
        raise RoomError("insufficient decay: too few samples in the fit range")
    t = (np.arange(start, stop + 1) / rir.sample_rate_hz)[ok]
    slope, _ = np.polyfit(t, seg[ok], 1)
    if not slope < 0:
        raise RoomError("insufficient decay: fitted slope is not negative")
    return -60.0 / slope


def acoustics_report(rir: Rir, mode: str = "simulated", distance_m: float = math.nan) -> RoomAcousticsReport:
    split = split_direct_path(rir, mode)
    return RoomAcousticsReport(estimate_rt60_schroeder(rir), compute_drr(split), distance_m)


def preset_room(name: str, distance_m: float, seed: int = 0, height_m: Optional[float] = None,
                max_order: Optional[int] = None, highpass_hz: Optional[float] = 50.0) -> RoomSpec:
    """Simulated rooms of the training set, placed as in the original recipe.

    The source sits at the front centre 1 m from the wall; the receiver faces
    it along the longer horizontal axis at ``distance_m``, both at a height
    drawn from U(1, 2) m unless given.
    """
    dims, rt60 = PRESET_ROOMS[name]
    if height_m is None:
        height_m = float(np.random.default_rng(seed).uniform(1.0, 2.0))
    L, W, _ = dims
    if L >= W:
        src = (1.0, W / 2, height_m)
        rcv = (1.0 + distance_m, W / 2, height_m)
    else:
        src = (L / 2, 1.0, height_m)
        rcv = (L / 2, 1.0 + distance_m, height_m)
    return RoomSpec(dims, src, rcv, target_rt60_s=rt60, max_order=max_order,
                    highpass_hz=highpass_hz, name=name)


# name -> ((L, W, H) m, RT60 s)
PRESET_ROOMS = {
    "meeting": ((3.6, 4.4, 2.7), 0.3),
    "seminar": ((8.6, 7.8, 2.7), 0.5),
    "auditorium": ((15.8, 11.7, 7.4), 1.7),
    "lecture": ((7.4, 7.4, 3.0), 0.5),
    "kitchen": ((7.4, 7.4, 3.0), 0.7),
    "office": ((12.2, 12.2, 3.0), 1.0),
}


def rir_metadata(rir: Rir, spec: Optional[RoomSpec] = None) -> str:
    meta = {
        "sample_rate": rir.sample_rate_hz,
        "direct_arrival_index": rir.direct_arrival_index,
        "room_spec": None if spec is None else spec.to_dict(),
    }
    return json.dumps(meta, indent=2, sort_keys=True)
