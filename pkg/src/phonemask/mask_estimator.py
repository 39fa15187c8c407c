"""LSTM ratio-mask estimators trained from scratch in numpy.

Every frame's mask row is predicted by running the LSTM from a zero state over
a causal window of the last five frames (fewer at the start of an utterance)
and reading a sigmoid output layer at the window's final step.  Training
minimises the MSE to the ideal ratio mask with Adam and halts once the
development loss has not improved by ``min_delta`` over ``patience`` epochs.
Class-specific banks are copies of a trained base model fine-tuned on the
frames of one phoneme or manner class.
"""

from __future__ import annotations

import io
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .ci_frontend import N_BINS, NormStats
from .phoneme_labels import MOA_CLASSES, PHONEME_CLASSES, FrameLabels
from .tf_masks import Mask

log = logging.getLogger(__name__)

HIDDEN = 128
CONTEXT = 5
GATES = ("input", "forget", "cell", "output")
SCHEMES = ("independent", "moa", "phoneme")

_MODEL_MAGIC = b"PMLSTM\x00\x00"
_BANK_MAGIC = b"PMBANK\x00\x00"
_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LstmModel:
    """Parameters keyed ``lstm{k}.W`` (4H x in), ``lstm{k}.U`` (4H x H),
    ``lstm{k}.b`` (4H), ``out.W`` (out x H) and ``out.b`` (out).

    Gate blocks along the 4H axis are ordered input, forget, cell, output.
    """

    params: Dict[str, np.ndarray]
    n_layers: int
    input_dim: int = N_BINS
    hidden: int = HIDDEN
    output_dim: int = N_BINS
    context: int = CONTEXT
    norm_stats: Optional[NormStats] = None

    def __post_init__(self):
        if self.n_layers not in (1, 2):
            raise ValueError("only 1 or 2 LSTM layers are supported")
        for name in self.param_names():
            if name not in self.params:
                raise ValueError(f"missing parameter tensor {name}")
            if not np.all(np.isfinite(self.params[name])):
                raise ValueError(f"parameter tensor {name} is not finite")

    def param_names(self) -> List[str]:
        names = []
        for k in range(self.n_layers):
            names += [f"lstm{k}.W", f"lstm{k}.U", f"lstm{k}.b"]
        return names + ["out.W", "out.b"]

    def shapes(self) -> Dict[str, tuple]:
        out = {}
        H = self.hidden
        for k in range(self.n_layers):
            fan_in = self.input_dim if k == 0 else H
            out[f"lstm{k}.W"] = (4 * H, fan_in)
            out[f"lstm{k}.U"] = (4 * H, H)
            out[f"lstm{k}.b"] = (4 * H,)
        out["out.W"] = (self.output_dim, H)
        out["out.b"] = (self.output_dim,)
        return out

    def copy(self) -> "LstmModel":
        return LstmModel({k: v.copy() for k, v in self.params.items()}, self.n_layers,
                         self.input_dim, self.hidden, self.output_dim, self.context,
                         self.norm_stats)

    def with_params(self, params: Dict[str, np.ndarray]) -> "LstmModel":
        return LstmModel(params, self.n_layers, self.input_dim, self.hidden, self.output_dim,
                         self.context, self.norm_stats)

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


def init_model(n_layers: int, seed: int, init_range: float = 0.1, input_dim: int = N_BINS,
               hidden: int = HIDDEN, output_dim: int = N_BINS, context: int = CONTEXT) -> LstmModel:
    """All weights and biases i.i.d. U(-init_range, init_range)."""
    rng = np.random.default_rng(seed)
    skeleton = LstmModel.__new__(LstmModel)
    skeleton.n_layers, skeleton.input_dim, skeleton.hidden = n_layers, input_dim, hidden
    skeleton.output_dim, skeleton.context = output_dim, context
    params = {name: rng.uniform(-init_range, init_range, size=shape)
              for name, shape in skeleton.shapes().items()}
    return LstmModel(params, n_layers, input_dim, hidden, output_dim, context)


# --- windowed forward / backward -------------------------------------------

@dataclass
class _Batch:
    """Windows for a set of target frames drawn from concatenated utterances."""

    inputs: np.ndarray   # (T_total, in) stacked utterance features
    index: np.ndarray    # (B, C) absolute frame index per window step (clipped at 0)
    valid: np.ndarray    # (B, C) float mask of steps inside the utterance
    targets: Optional[np.ndarray] = None  # (B, out)


def _make_batch(items, context: int) -> _Batch:
    """``items`` yields ``(features, frames, target_rows_or_None)``."""
    feats, idx, val, tgt = [], [], [], []
    offset = 0
    steps = np.arange(context) - (context - 1)
    for features, frames, target in items:
        features = np.asarray(features, dtype=np.float64)
        frames = np.asarray(frames, dtype=np.int64)
        local = frames[:, None] + steps[None, :]
        val.append((local >= 0).astype(np.float64))
        idx.append(np.maximum(local, 0) + offset)
        feats.append(features)
        if target is not None:
            tgt.append(np.asarray(target, dtype=np.float64))
        offset += features.shape[0]
    return _Batch(
        np.concatenate(feats, 0),
        np.concatenate(idx, 0),
        np.concatenate(val, 0),
        np.concatenate(tgt, 0) if tgt else None,
    )


def _forward(model: LstmModel, batch: _Batch, keep_cache: bool = False):
    p = model.params
    H = model.hidden
    B, C = batch.index.shape
    caches, layer_outs = [], []
    layer_in = None
    for k in range(model.n_layers):
        W, U, b = p[f"lstm{k}.W"], p[f"lstm{k}.U"], p[f"lstm{k}.b"]
        if k == 0:
            # input projection once per frame, shared by the overlapping windows
            proj = batch.inputs @ W.T + b
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        steps = []
        outs = []
        for s in range(C):
            v = batch.valid[:, s : s + 1]
            if k == 0:
                z = proj[batch.index[:, s]] + h @ U.T
            else:
                z = layer_in[s] @ W.T + b + h @ U.T
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H : 2 * H])
            g = np.tanh(z[:, 2 * H : 3 * H])
            o = _sigmoid(z[:, 3 * H :])
            c_prev, h_prev = c, h
            c = (f * c_prev + i * g) * v
            tc = np.tanh(c)
            h = o * tc * v
            outs.append(h)
            if keep_cache:
                steps.append((i, f, g, o, c_prev, h_prev, tc))
        caches.append(steps)
        layer_outs.append(outs)
        layer_in = outs
    h_top = layer_in[-1]
    y = _sigmoid(h_top @ p["out.W"].T + p["out.b"])
    if keep_cache:
        return y, (caches, layer_outs)
    return y


def _backward(model: LstmModel, batch: _Batch, y: np.ndarray, cache, dy: np.ndarray):
    p = model.params
    H = model.hidden
    B, C = batch.index.shape
    caches, layer_outs = cache
    grads = {name: np.zeros_like(v) for name, v in p.items()}

    dlogit = dy * y * (1.0 - y)
    h_top = layer_outs[-1][-1]
    grads["out.W"] = dlogit.T @ h_top
    grads["out.b"] = dlogit.sum(axis=0)
    # gradient arriving at each step's hidden output of the current layer
    dh_in = [np.zeros((B, H)) for _ in range(C)]
    dh_in[-1] = dlogit @ p["out.W"]

    for k in range(model.n_layers - 1, -1, -1):
        W, U = p[f"lstm{k}.W"], p[f"lstm{k}.U"]
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        dh_below = [None] * C
        dproj = np.zeros((batch.inputs.shape[0], 4 * H)) if k == 0 else None
        for s in range(C - 1, -1, -1):
            i, f, g, o, c_prev, h_prev, tc = caches[k][s]
            v = batch.valid[:, s : s + 1]
            dh = (dh_in[s] + dh_next) * v
            dc = (dc_next + dh * o * (1.0 - tc * tc)) * v
            dz = np.empty((B, 4 * H))
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
            dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
            grads[f"lstm{k}.U"] += dz.T @ h_prev
            grads[f"lstm{k}.b"] += dz.sum(axis=0)
            dh_next = dz @ U
            dc_next = dc * f
            if k == 0:
                # each window step touches distinct frames, so plain fancy-index add is exact
                rows = batch.index[:, s]
                live = v[:, 0] > 0
                dproj[rows[live]] += dz[live]
            else:
                below = layer_outs[k - 1][s]
                grads[f"lstm{k}.W"] += dz.T @ below
                dh_below[s] = dz @ W
        if k == 0:
            grads["lstm0.W"] = dproj.T @ batch.inputs
        else:
            dh_in = dh_below
    return grads


def forward(model: LstmModel, features, frames: Optional[Sequence[int]] = None) -> Mask:
    """Estimated mask rows for ``frames`` (default: every frame)."""
    x = getattr(features, "values", features)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim or x.shape[0] < 1:
        raise ValueError(f"features must be n_frames x {model.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain non-finite values")
    frames = np.arange(x.shape[0]) if frames is None else np.asarray(frames, dtype=np.int64)
    batch = _make_batch([(x, frames, None)], model.context)
    return Mask(_forward(model, batch), "estimated")


# --- loss and gradients -----------------------------------------------------

@dataclass
class Item:
    """One utterance: normalised features, IRM target, optional frame subset."""

    features: np.ndarray
    target: np.ndarray
    frames: Optional[np.ndarray] = None
    utterance_id: str = ""
    labels: Optional[FrameLabels] = None

    def selected(self) -> np.ndarray:
        if self.frames is None:
            return np.arange(self.features.shape[0])
        return np.asarray(self.frames, dtype=np.int64)


def mse_loss(pred, target, frame_subset: Optional[Sequence[int]] = None) -> float:
    p = np.asarray(getattr(pred, "values", pred), dtype=np.float64)
    t = np.asarray(getattr(target, "values", target), dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if frame_subset is not None:
        idx = np.asarray(frame_subset, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("empty frame subset")
        if np.any(idx < 0) or np.any(idx >= p.shape[0]):
            raise ValueError("frame subset index out of range")
        p, t = p[idx], t[idx]
    return float(np.mean((p - t) ** 2))


def _item_batch(items: Sequence[Item], context: int) -> Optional[_Batch]:
    parts = []
    for it in items:
        sel = it.selected()
        if sel.size:
            parts.append((it.features, sel, np.asarray(it.target)[sel]))
    if not parts:
        return None
    return _make_batch(parts, context)


def loss_and_gradients(model: LstmModel, items: Sequence[Item]):
    """Pooled MSE over every selected frame and bin of ``items`` and its exact gradient."""
    batch = _item_batch(items, model.context)
    if batch is None:
        raise ValueError("batch has no selected frames")
    y, cache = _forward(model, batch, keep_cache=True)
    diff = y - batch.targets
    loss = float(np.mean(diff * diff))
    dy = 2.0 * diff / diff.size
    grads = _backward(model, batch, y, cache, dy)
    for name in model.param_names():
        if not np.all(np.isfinite(grads[name])):
            raise TrainingError(f"non-finite gradient in parameter tensor {name}")
    if not math.isfinite(loss):
        raise TrainingError("non-finite loss")
    return loss, grads


def gradients(model: LstmModel, items: Sequence[Item]) -> Dict[str, np.ndarray]:
    return loss_and_gradients(model, items)[1]


def dataset_loss(model: LstmModel, items: Sequence[Item], chunk_frames: int = 8192) -> float:
    """Pooled MSE over every selected frame of ``items``."""
    total, count = 0.0, 0
    for it in items:
        sel = it.selected()
        for start in range(0, sel.size, chunk_frames):
            part = sel[start : start + chunk_frames]
            batch = _make_batch([(it.features, part, None)], model.context)
            diff = _forward(model, batch) - np.asarray(it.target)[part]
            total += float(np.sum(diff * diff))
            count += diff.size
    if count == 0:
        raise ValueError("no frames to evaluate")
    return total / count


# --- optimiser --------------------------------------------------------------

@dataclass
class AdamState:
    first_moment: Dict[str, np.ndarray]
    second_moment: Dict[str, np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, model: LstmModel, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in model.params.items()},
                   {k: np.zeros_like(v) for k, v in model.params.items()}, 0, lr, beta1, beta2, eps)


def adam_step(model: LstmModel, grads: Dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update; returns ``(new_model, new_state)``."""
    t = state.step_count + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    params, m_new, v_new = {}, {}, {}
    for name, w in model.params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {w.shape}")
        m = state.beta1 * state.first_moment[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[name] + (1.0 - state.beta2) * (g * g)
        params[name] = w - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        m_new[name], v_new[name] = m, v
    new_state = AdamState(m_new, v_new, t, state.lr, state.beta1, state.beta2, state.eps)
    return model.with_params(params), new_state


# --- training ---------------------------------------------------------------

@dataclass
class TrainConfig:
    batch_size_utterances: int = 2
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience_epochs: int = 10
    min_delta: float = 0.001
    init_range: float = 0.1
    max_epochs: int = 200
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size_utterances < 1 or self.patience_epochs < 1 or self.max_epochs < 1:
            raise ValueError("batch size, patience and max_epochs must be positive")
        if not (self.lr > 0 and self.min_delta > 0 and self.init_range > 0):
            raise ValueError("lr, min_delta and init_range must be positive")


@dataclass
class TrainResult:
    model: LstmModel
    dev_history: List[float]          # index 0 is the starting model
    train_history: List[float]
    best_epoch: int
    stopped_early: bool

    @property
    def best_dev(self) -> float:
        return self.dev_history[self.best_epoch]


def should_stop(dev_history: Sequence[float], patience: int, min_delta: float) -> bool:
    """True once the best loss up to ``e - patience`` beats the best up to ``e`` by < min_delta.

    ``dev_history[0]`` is the untrained model; epoch ``e`` is ``dev_history[e]``.
    """
    e = len(dev_history) - 1
    if e < patience + 1:
        return False
    old_best = min(dev_history[: e - patience + 1])
    new_best = min(dev_history)
    return old_best - new_best < min_delta


def train(model: LstmModel, train_set: Sequence[Item], dev_set: Sequence[Item],
          cfg: TrainConfig, label: str = "model") -> TrainResult:
    if not train_set or not dev_set:
        raise ValueError("training and development sets must be nonempty")
    rng = np.random.default_rng(cfg.rng_seed)
    state = AdamState.zeros_like(model, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    dev0 = dataset_loss(model, dev_set)
    dev_history, train_history = [dev0], [math.nan]
    best_model, best_epoch = model, 0
    stopped = False
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), cfg.batch_size_utterances):
            chunk = [train_set[j] for j in order[start : start + cfg.batch_size_utterances]]
            if not any(it.selected().size for it in chunk):
                continue
            loss, grads = loss_and_gradients(model, chunk)
            model, state = adam_step(model, grads, state)
            losses.append(loss)
        dev = dataset_loss(model, dev_set)
        if not math.isfinite(dev):
            raise TrainingError(f"{label}: development loss diverged at epoch {epoch}")
        dev_history.append(dev)
        train_history.append(float(np.mean(losses)) if losses else math.nan)
        if dev < dev_history[best_epoch]:
            best_model, best_epoch = model, epoch
        log.info("%s epoch %d train %.5f dev %.5f", label, epoch, train_history[-1], dev)
        if should_stop(dev_history, cfg.patience_epochs, cfg.min_delta):
            stopped = True
            break
    return TrainResult(best_model, dev_history, train_history, best_epoch, stopped)


# --- class-specific banks ---------------------------------------------------

def scheme_classes(scheme: str) -> Sequence[str]:
    if scheme == "moa":
        return MOA_CLASSES
    if scheme == "phoneme":
        return PHONEME_CLASSES
    if scheme == "independent":
        return ()
    raise ValueError(f"unknown scheme {scheme!r}")


def class_of_labels(labels: FrameLabels, scheme: str) -> np.ndarray:
    if scheme == "moa":
        return np.array(labels.to_moa().labels, dtype=object)
    if scheme == "phoneme":
        if labels.scheme != "phoneme":
            raise ValueError("phoneme bank needs phoneme-level labels")
        return np.array(labels.labels, dtype=object)
    raise ValueError(f"scheme {scheme!r} has no classes")


@dataclass
class ModelBank:
    scheme: str
    models: Dict[str, LstmModel]
    base: LstmModel
    fallbacks: List[str] = field(default_factory=list)
    results: Dict[str, TrainResult] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        expected = scheme_classes(self.scheme)
        if self.scheme != "independent" and set(self.models) != set(expected):
            missing = sorted(set(expected) - set(self.models))
            raise ValueError(f"{self.scheme} bank lacks models for {missing}")

    @classmethod
    def independent(cls, model: LstmModel) -> "ModelBank":
        return cls("independent", {}, model)


def restrict_to_class(items: Sequence[Item], scheme: str, cls_name: str) -> List[Item]:
    out = []
    for it in items:
        if it.labels is None:
            raise ValueError(f"utterance {it.utterance_id!r} has no frame labels")
        classes = class_of_labels(it.labels, scheme)
        sel = np.nonzero(classes == cls_name)[0]
        out.append(Item(it.features, it.target, sel, it.utterance_id, it.labels))
    return out


def finetune_bank(base: LstmModel, train_set: Sequence[Item], dev_set: Sequence[Item],
                  scheme: str, cfg: TrainConfig) -> ModelBank:
    """One copy of ``base`` per class, trained on that class's frames only.

    Windows keep their natural acoustic context; only the loss is restricted.
    Classes without frames in either split fall back to ``base``.
    """
    classes = scheme_classes(scheme)
    if not classes:
        raise ValueError("fine-tuning needs the moa or phoneme scheme")
    models, fallbacks, results = {}, [], {}
    any_frames = False
    for k, cls_name in enumerate(classes):
        tr = restrict_to_class(train_set, scheme, cls_name)
        dv = restrict_to_class(dev_set, scheme, cls_name)
        n_tr = sum(it.selected().size for it in tr)
        n_dv = sum(it.selected().size for it in dv)
        any_frames |= n_tr > 0
        if n_tr == 0 or n_dv == 0:
            log.warning("%s class %r has no labelled frames (train %d, dev %d): using base",
                        scheme, cls_name, n_tr, n_dv)
            models[cls_name] = base
            fallbacks.append(cls_name)
            continue
        sub_cfg = TrainConfig(**{**cfg.__dict__, "rng_seed": cfg.rng_seed + 1000 + k})
        res = train(base.copy(), [it for it in tr if it.selected().size], dv, sub_cfg,
                    label=f"{scheme}:{cls_name}")
        models[cls_name] = res.model
        results[cls_name] = res
    if not any_frames:
        raise ValueError("no labelled frames at all in the training set")
    return ModelBank(scheme, models, base, fallbacks, results)


def estimate_mask(bank: ModelBank, features, frame_labels: Optional[FrameLabels] = None) -> Mask:
    """Dispatch each frame to its class model; the independent scheme ignores labels."""
    x = np.asarray(getattr(features, "values", features), dtype=np.float64)
    if bank.scheme == "independent":
        return forward(bank.base, x)
    if frame_labels is None:
        raise ValueError(f"{bank.scheme} bank needs frame labels")
    if len(frame_labels) != x.shape[0]:
        raise ValueError(f"{len(frame_labels)} labels for {x.shape[0]} frames")
    classes = class_of_labels(frame_labels, bank.scheme)
    unknown = sorted(set(classes) - set(bank.models))
    if unknown:
        raise ValueError(f"unknown class symbols {unknown}")
    out = np.empty((x.shape[0], bank.base.output_dim))
    for cls_name in sorted(set(classes)):
        sel = np.nonzero(classes == cls_name)[0]
        out[sel] = forward(bank.models[cls_name], x, sel).values
    return Mask(out, "estimated")


# --- serialisation ----------------------------------------------------------

def _pack_str(buf, s: str):
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _unpack_str(view, offset):
    (n,) = struct.unpack_from("<I", view, offset)
    offset += 4
    return bytes(view[offset : offset + n]).decode("utf-8"), offset + n


def _pack_array(buf, a: np.ndarray):
    a = np.ascontiguousarray(a, dtype="<f8")
    buf.write(struct.pack("<I", a.ndim))
    buf.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    buf.write(a.tobytes(order="C"))


def _unpack_array(view, offset):
    (ndim,) = struct.unpack_from("<I", view, offset)
    offset += 4
    shape = struct.unpack_from(f"<{ndim}Q", view, offset)
    offset += 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    a = np.frombuffer(view, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
    return a, offset + 8 * count


def model_to_bytes(model: LstmModel, scheme: str = "independent") -> bytes:
    if model.norm_stats is None:
        raise ValueError("a model cannot be saved without its normalisation statistics")
    buf = io.BytesIO()
    buf.write(_MODEL_MAGIC)
    buf.write(struct.pack("<I", _FORMAT_VERSION))
    _pack_str(buf, scheme)
    buf.write(struct.pack("<6I", model.n_layers, model.input_dim, model.hidden,
                          model.output_dim, model.context, len(model.param_names())))
    for name in model.param_names():
        _pack_str(buf, name)
        _pack_array(buf, model.params[name])
    _pack_array(buf, model.norm_stats.mean)
    _pack_array(buf, model.norm_stats.variance)
    buf.write(struct.pack("<Q", int(model.norm_stats.count)))
    return buf.getvalue()


def model_from_bytes(data, offset: int = 0):
    """Returns ``(model, scheme, end_offset)``."""
    view = memoryview(data)
    if bytes(view[offset : offset + 8]) != _MODEL_MAGIC:
        raise ValueError("not a model file")
    (version,) = struct.unpack_from("<I", view, offset + 8)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    scheme, offset = _unpack_str(view, offset + 12)
    n_layers, input_dim, hidden, output_dim, context, n_tensors = struct.unpack_from("<6I", view, offset)
    offset += 24
    params = {}
    for _ in range(n_tensors):
        name, offset = _unpack_str(view, offset)
        params[name], offset = _unpack_array(view, offset)
    mean, offset = _unpack_array(view, offset)
    var, offset = _unpack_array(view, offset)
    (count,) = struct.unpack_from("<Q", view, offset)
    offset += 8
    model = LstmModel(params, n_layers, input_dim, hidden, output_dim, context,
                      NormStats(mean, var, count))
    return model, scheme, offset


def save_model(path, model: LstmModel, scheme: str = "independent") -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model, scheme))


def load_model(path) -> LstmModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())[0]


def bank_to_bytes(bank: ModelBank) -> bytes:
    buf = io.BytesIO()
    buf.write(_BANK_MAGIC)
    buf.write(struct.pack("<I", _FORMAT_VERSION))
    _pack_str(buf, bank.scheme)
    blob = model_to_bytes(bank.base, "independent")
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    keys = list(scheme_classes(bank.scheme))
    buf.write(struct.pack("<I", len(keys)))
    for key in keys:
        _pack_str(buf, key)
        buf.write(struct.pack("<B", key in bank.fallbacks))
        blob = model_to_bytes(bank.models[key], bank.scheme)
        buf.write(struct.pack("<Q", len(blob)))
        buf.write(blob)
    return buf.getvalue()


def bank_from_bytes(data) -> ModelBank:
    view = memoryview(data)
    if bytes(view[:8]) != _BANK_MAGIC:
        raise ValueError("not a model bank file")
    (version,) = struct.unpack_from("<I", view, 8)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported bank format version {version}")
    scheme, offset = _unpack_str(view, 12)
    (n,) = struct.unpack_from("<Q", view, offset)
    base, _, _ = model_from_bytes(view[offset + 8 : offset + 8 + n])
    offset += 8 + n
    (n_keys,) = struct.unpack_from("<I", view, offset)
    offset += 4
    models, fallbacks = {}, []
    for _ in range(n_keys):
        key, offset = _unpack_str(view, offset)
        (flag,) = struct.unpack_from("<B", view, offset)
        (n,) = struct.unpack_from("<Q", view, offset + 1)
        offset += 9
        models[key], _, _ = model_from_bytes(view[offset : offset + n])
        offset += n
        if flag:
            fallbacks.append(key)
    return ModelBank(scheme, models, base, fallbacks)


def save_bank(path, bank: ModelBank) -> None:
    with open(path, "wb") as fh:
        fh.write(bank_to_bytes(bank))


def load_bank(path) -> ModelBank:
    with open(path, "rb") as fh:
        return bank_from_bytes(fh.read())
