"""End-to-end orchestration with on-disk, content-hashed stage caching.

Output layout under ``out``::

    rirs/        <room>.npy (48 kHz, float64), <room>.wav, <room>.json
    dataset/     anechoic/, labels/, reverberant/, direct/, manifest.json
    models/      erm1/, erm2/ (.pmm + history), moa/, phn/ (.pmb + per-class summary)
    enhanced/    <condition>/<entry>.wav (vocoded), <entry>.mask
    report/      metrics.csv, table.csv, electrodogram_*.csv, electrodograms.png
    scores/      scores.csv (from listener responses)

Each stage directory holds a ``.key`` file: the SHA-256 of the stage's
configuration and the keys of the stages it reads.  A stage whose key is
current is not recomputed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import shutil
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import ci_frontend as cf
from . import eval_metrics as em
from . import mask_estimator as me
from . import room_acoustics as ra
from . import tf_masks as tm
from .config import ExperimentConfig, RoomConfig
from .phoneme_labels import (FrameLabels, PhonemeTrack, parse_label_file, track_to_frame_labels,
                             write_label_file)
from .signal_io import AudioBuffer, convolve, read_wav, resample_48k_to_16k, write_wav
from .synthetic_corpus import generate_corpus

log = logging.getLogger(__name__)

ERM_MODELS = {"ERM-1": ("erm1", 1), "ERM-2": ("erm2", 2)}
ERM_BANKS = {"ERM-MOA": ("moa", "moa"), "ERM-PHN": ("phn", "phoneme")}
_SEED_OFFSETS = {"erm1": 11, "erm2": 12, "moa": 21, "phn": 22}


class PipelineError(RuntimeError):
    pass


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# --- manifest ---------------------------------------------------------------

@dataclass
class ManifestEntry:
    entry_id: str
    utterance_id: str
    split: str
    rir_id: str
    anechoic: str
    reverberant: str
    direct: str
    labels: Optional[str]
    label_offset_s: float
    cross_term: float
    energy_error: float


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    rirs: Dict[str, Dict]

    def validate(self, root: Path) -> None:
        ids = [e.entry_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise PipelineError("duplicate manifest entry ids")
        for e in self.entries:
            for rel in (e.anechoic, e.reverberant, e.direct, e.labels):
                if rel is not None and not (root / rel).exists():
                    raise PipelineError(f"manifest entry {e.entry_id}: missing file {rel}")
            if e.rir_id not in self.rirs:
                raise PipelineError(f"manifest entry {e.entry_id}: unknown rir {e.rir_id}")

    def split(self, name: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def to_json(self) -> str:
        return json.dumps({"entries": [asdict(e) for e in self.entries], "rirs": self.rirs},
                          indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        data = json.loads(text)
        return cls([ManifestEntry(**e) for e in data["entries"]], data["rirs"])


def energy_bookkeeping(reverberant: np.ndarray, direct: np.ndarray):
    """Grid sums: returns (cross term, relative error of R = X + N + 2 cross)."""
    residual = reverberant - direct
    R, X, N = cf.stft(reverberant), cf.stft(direct), cf.stft(residual)
    e_r = float(np.sum(np.abs(R) ** 2))
    e_x = float(np.sum(np.abs(X) ** 2))
    e_n = float(np.sum(np.abs(N) ** 2))
    cross = float(np.sum((X * np.conj(N)).real))
    err = abs(e_r - (e_x + e_n + 2 * cross)) / e_r if e_r > 0 else 0.0
    return cross, err


def render_pair(audio: AudioBuffer, rir: ra.Rir, split: Optional[ra.RirSplit] = None):
    """Reverberant and direct-path signals, trimmed to the anechoic length.

    Both are rounded to float32 so that what is written to disk is exactly
    what later stages analyse.
    """
    split = ra.split_direct_path(rir) if split is None else split
    n = len(audio)
    rev = convolve(audio, rir).samples[:n]
    dp = convolve(audio, split.direct_path).samples[:n]
    return rev.astype(np.float32).astype(np.float64), dp.astype(np.float32).astype(np.float64)


def shift_track(track: PhonemeTrack, offset_s: float) -> PhonemeTrack:
    return PhonemeTrack(tuple((a + offset_s, b + offset_s, s) for a, b, s in track.intervals))


# --- the experiment -----------------------------------------------------------

class Experiment:
    """All stages of one configured run.  Every public method is idempotent."""

    def __init__(self, cfg: ExperimentConfig, out: Optional[os.PathLike] = None):
        self.cfg = cfg
        self.root = Path(out if out is not None else cfg.out)
        self.root.mkdir(parents=True, exist_ok=True)
        self._keys: Dict[str, str] = {}

    # cache plumbing
    def _stage(self, name: str, payload, build: Callable[[Path], None]) -> str:
        key = _hash({"stage": name, "payload": payload})
        d = self.root / name
        key_file = d / ".key"
        if key_file.exists() and key_file.read_text() == key:
            log.info("stage %s is current", name)
        else:
            if d.exists():
                shutil.rmtree(d)
            d.mkdir(parents=True)
            log.info("building stage %s", name)
            build(d)
            key_file.write_text(key)
        self._keys[name] = key
        return key

    def _seed(self, what: str) -> int:
        return (self.cfg.seed + _SEED_OFFSETS[what]) % 2**63

    # rooms
    def _room_spec(self, room: RoomConfig) -> ra.RoomSpec:
        return ra.preset_room(room.name, room.distance_m, seed=self.cfg.seed, height_m=room.height_m,
                              max_order=room.max_order, highpass_hz=room.highpass_hz)

    def simulate_rirs(self) -> str:
        rooms = [asdict(r) for r in self.cfg.rooms]

        def build(d: Path):
            for room in self.cfg.rooms:
                spec = self._room_spec(room)
                rir48 = ra.simulate_rir(spec)
                rir16 = ra.resample_rir(rir48)
                rep = ra.acoustics_report(rir16, distance_m=spec.distance_m)
                np.save(d / f"{room.room_id}.npy", rir48.coefficients)
                write_wav(d / f"{room.room_id}.wav", AudioBuffer(rir48.coefficients, 48000))
                meta = json.loads(ra.rir_metadata(rir48, spec))
                meta.update(rt60_s=rep.rt60_s, drr_db=rep.drr_db, distance_m=spec.distance_m,
                            direct_delay_s=rir48.direct_delay_s)
                _write_text(d / f"{room.room_id}.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
                log.info("room %s: RT60 %.3f s, DRR %.2f dB", room.room_id, rep.rt60_s, rep.drr_db)

        return self._stage("rirs", {"rooms": rooms, "seed": self.cfg.seed}, build)

    def load_rir(self, room_id: str) -> ra.Rir:
        meta = json.loads((self.root / "rirs" / f"{room_id}.json").read_text())
        h = np.load(self.root / "rirs" / f"{room_id}.npy")
        rir48 = ra.Rir(h, 48000, meta["direct_arrival_index"], meta["direct_delay_s"])
        return ra.resample_rir(rir48)

    # dataset
    def _utterances(self):
        c = self.cfg.corpus
        if c.kind == "synthetic":
            for u in generate_corpus(self.cfg.seed, c.n_train, c.n_dev, c.n_test, c.phonemes_per_utterance):
                yield u.utterance_id, u.split, u.audio, u.track
            return
        for rec in c.utterances:
            for key in ("id", "audio", "split"):
                if key not in rec:
                    raise PipelineError(f"corpus utterance {rec} lacks {key!r}")
            audio = read_wav(rec["audio"])
            if audio.sample_rate_hz == 48000:
                audio = resample_48k_to_16k(audio)
            track = parse_label_file(rec["labels"]) if rec.get("labels") else None
            yield rec["id"], rec["split"], audio, track

    def make_dataset(self) -> DatasetManifest:
        rir_key = self.simulate_rirs()
        corpus = asdict(self.cfg.corpus)
        if self.cfg.corpus.kind == "files":
            corpus["hashes"] = [_file_hash(r["audio"]) + (_file_hash(r["labels"]) if r.get("labels") else "")
                                for r in self.cfg.corpus.utterances]

        def build(d: Path):
            for sub in ("anechoic", "labels", "reverberant", "direct"):
                (d / sub).mkdir()
            rirs, splits = {}, {}
            for room in self.cfg.rooms:
                rir = self.load_rir(room.room_id)
                meta = json.loads((self.root / "rirs" / f"{room.room_id}.json").read_text())
                rirs[room.room_id] = {"room_spec": meta["room_spec"], "rt60_s": meta["rt60_s"],
                                      "drr_db": meta["drr_db"], "distance_m": meta["distance_m"]}
                splits[room.room_id] = (rir, ra.split_direct_path(rir))
            entries = []
            for utt_id, split, audio, track in self._utterances():
                write_wav(d / "anechoic" / f"{utt_id}.wav", audio)
                label_rel = None
                if track is not None:
                    label_rel = f"dataset/labels/{utt_id}.lab"
                    write_label_file(self.root / label_rel, track)
                for room in self.cfg.rooms:
                    rir, sp = splits[room.room_id]
                    try:
                        rev, dp = render_pair(audio, rir, sp)
                    except Exception as exc:
                        raise PipelineError(f"rir {room.room_id}: {exc}") from exc
                    entry_id = f"{utt_id}_{room.room_id}"
                    write_wav(d / "reverberant" / f"{entry_id}.wav", AudioBuffer(rev, cf.FS))
                    write_wav(d / "direct" / f"{entry_id}.wav", AudioBuffer(dp, cf.FS))
                    cross, err = energy_bookkeeping(rev, dp)
                    entries.append(ManifestEntry(
                        entry_id, utt_id, split, room.room_id,
                        f"dataset/anechoic/{utt_id}.wav",
                        f"dataset/reverberant/{entry_id}.wav",
                        f"dataset/direct/{entry_id}.wav",
                        label_rel, float(rir.direct_arrival_index / rir.sample_rate_hz), cross, err))
            manifest = DatasetManifest(entries, rirs)
            manifest.validate(self.root)
            _write_text(d / "manifest.json", manifest.to_json())

        self._stage("dataset", {"corpus": corpus, "seed": self.cfg.seed, "rirs": rir_key}, build)
        return self.manifest()

    def manifest(self) -> DatasetManifest:
        m = DatasetManifest.from_json((self.root / "dataset" / "manifest.json").read_text())
        m.validate(self.root)
        return m

    # per-entry analysis
    def signals(self, e: ManifestEntry):
        rev = read_wav(self.root / e.reverberant).samples
        dp = read_wav(self.root / e.direct).samples
        return rev, dp

    def frame_labels(self, e: ManifestEntry, n_frames: int) -> Optional[FrameLabels]:
        if e.labels is None:
            return None
        # labels are anechoic time stamps; the direct path arrives later
        track = shift_track(parse_label_file(self.root / e.labels), e.label_offset_s)
        return track_to_frame_labels(track, n_frames)

    def _raw_items(self, split: str):
        out = []
        for e in self.manifest().split(split):
            rev, dp = self.signals(e)
            R, X, N = cf.analyze(rev), cf.analyze(dp), cf.analyze(rev - dp)
            out.append((e, cf.log_compress(R), tm.compute_irm(X, N).values,
                        self.frame_labels(e, R.n_frames)))
        return out

    def items(self, split: str, stats: cf.NormStats) -> List[me.Item]:
        return [me.Item(cf.normalize(feat, stats).values, target, None, e.entry_id, labels)
                for e, feat, target, labels in self._raw_items(split)]

    def norm_stats(self) -> cf.NormStats:
        return cf.fit_norm_stats([feat for _, feat, _, _ in self._raw_items("train")])

    # training
    def _train_cfg(self, what: str) -> me.TrainConfig:
        return me.TrainConfig(**asdict(self.cfg.training), rng_seed=self._seed(what))

    def _needed_models(self) -> List[str]:
        need = {ERM_MODELS[c][0] for c in self.cfg.conditions if c in ERM_MODELS}
        if any(c in ERM_BANKS for c in self.cfg.conditions):
            need.add("erm1")
        return sorted(need)

    def train(self, names: Optional[Sequence[str]] = None) -> Dict[str, str]:
        self.make_dataset()
        names = self._needed_models() if names is None else list(names)
        layers = dict(ERM_MODELS.values())
        keys = {}
        for name in names:
            if name not in layers:
                raise PipelineError(f"unknown model {name!r}")

            def build(d: Path, name=name):
                stats = self.norm_stats()
                train_set, dev_set = self.items("train", stats), self.items("dev", stats)
                tcfg = self._train_cfg(name)
                model = me.init_model(layers[name], self._seed(name), tcfg.init_range)
                model = me.LstmModel(model.params, model.n_layers, norm_stats=stats)
                res = me.train(model, train_set, dev_set, tcfg, label=name)
                me.save_model(d / f"{name}.pmm", res.model)
                mean_irm = np.mean(np.concatenate([it.target for it in train_set]), axis=0)
                const = float(np.mean(np.concatenate([(it.target - mean_irm) ** 2 for it in dev_set])))
                hist = {"dev_history": res.dev_history, "train_history": res.train_history,
                        "best_epoch": res.best_epoch, "stopped_early": res.stopped_early,
                        "constant_mean_irm_dev_mse": const}
                _write_text(d / f"{name}.history.json", json.dumps(hist, indent=2) + "\n")

            keys[name] = self._stage(f"models/{name}", {
                "dataset": self._keys["dataset"], "training": asdict(self.cfg.training),
                "seed": self._seed(name), "layers": layers[name]}, build)
        return keys

    def finetune(self, names: Optional[Sequence[str]] = None) -> Dict[str, str]:
        names = sorted(b for c, (b, _) in ERM_BANKS.items() if c in self.cfg.conditions) \
            if names is None else list(names)
        schemes = dict(ERM_BANKS.values())
        base_key = self.train(["erm1"])["erm1"]
        keys = {}
        for name in names:
            if name not in schemes:
                raise PipelineError(f"unknown bank {name!r}")

            def build(d: Path, name=name):
                base = self.load_model("erm1")
                stats = base.norm_stats
                train_set, dev_set = self.items("train", stats), self.items("dev", stats)
                bank = me.finetune_bank(base, train_set, dev_set, schemes[name], self._train_cfg(name))
                me.save_bank(d / f"{name}.pmb", bank)
                summary = {}
                for cls_name in me.scheme_classes(schemes[name]):
                    dv = me.restrict_to_class(dev_set, schemes[name], cls_name)
                    if not sum(it.selected().size for it in dv):
                        summary[cls_name] = {"fallback": True}
                        continue
                    summary[cls_name] = {
                        "fallback": cls_name in bank.fallbacks,
                        "base_dev_mse": me.dataset_loss(base, dv),
                        "finetuned_dev_mse": me.dataset_loss(bank.models[cls_name], dv),
                    }
                    res = bank.results.get(cls_name)
                    if res is not None:
                        summary[cls_name].update(best_epoch=res.best_epoch, epochs=len(res.dev_history) - 1)
                _write_text(d / f"{name}.classes.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")

            keys[name] = self._stage(f"models/{name}", {
                "base": base_key, "training": asdict(self.cfg.training), "seed": self._seed(name),
                "scheme": schemes[name]}, build)
        return keys

    def load_model(self, name: str) -> me.LstmModel:
        path = self.root / "models" / name / f"{name}.pmm"
        if not path.exists():
            raise PipelineError(f"model {name} has not been trained (expected {path})")
        return me.load_model(path)

    def load_bank(self, name: str) -> me.ModelBank:
        path = self.root / "models" / name / f"{name}.pmb"
        if not path.exists():
            raise PipelineError(f"bank {name} has not been fine-tuned (expected {path})")
        return me.load_bank(path)

    # enhancement and evaluation
    def condition_mask(self, condition: str, e: ManifestEntry, rev, dp, models) -> Optional[tm.Mask]:
        if condition in ("REV", "DP"):
            return None
        R = cf.analyze(rev)
        if condition in ("IRM", "IBM"):
            X, N = cf.analyze(dp), cf.analyze(rev - dp)
            if condition == "IRM":
                return tm.compute_irm(X, N)
            return tm.compute_ibm(X, N, self.cfg.features.ibm_threshold_db)
        bank = models.get(condition)
        if bank is None:
            raise PipelineError(f"no model available for {condition}")
        stats = bank.base.norm_stats
        feat = cf.normalize(cf.log_compress(R), stats)
        labels = None
        if condition in ERM_BANKS:
            labels = self.frame_labels(e, R.n_frames)
            if labels is None:
                raise PipelineError(f"{condition} needs phoneme labels for {e.entry_id}")
        return me.estimate_mask(bank, feat, labels)

    def _models_for_conditions(self) -> Dict[str, me.ModelBank]:
        models = {}
        for cond in self.cfg.conditions:
            if cond in ERM_MODELS:
                models[cond] = me.ModelBank.independent(self.load_model(ERM_MODELS[cond][0]))
            elif cond in ERM_BANKS:
                models[cond] = self.load_bank(ERM_BANKS[cond][0])
        return models

    def _ensure_models(self) -> Dict[str, str]:
        keys = dict(self.train())
        keys.update(self.finetune())
        return keys

    def process_entry(self, condition: str, e: ManifestEntry, models, write_dir: Optional[Path] = None):
        """Metrics row and electrodogram for one entry, plus the vocoded audio and the mask when ``write_dir`` is set."""
        rev, dp = self.signals(e)
        n_max = self.cfg.features.n_maxima
        ref = cf.electrodogram(cf.analyze(dp), n_max)
        mask = self.condition_mask(condition, e, rev, dp, models)
        if condition == "REV":
            power, audio = cf.analyze(rev), AudioBuffer(rev, cf.FS)
        elif condition == "DP":
            power, audio = cf.analyze(dp), AudioBuffer(dp, cf.FS)
        else:
            spec = cf.stft(rev)
            mag = tm.apply_mask(cf.TfGrid(np.abs(spec), "amplitude"), mask)
            power = cf.TfGrid(mag.values ** 2, "power")
            audio = cf.overlap_add_resynthesize(mag, np.angle(spec))
        edg = cf.select_maxima(cf.ace_channelize(power), n_max)
        row = em.MetricsRow(condition, e.rir_id, e.entry_id, em.compute_ecm(edg, ref), em.compute_srmr_ci(audio))
        if write_dir is not None:
            voc = cf.sine_vocode(edg, len(rev))
            if voc.rms() > 0:
                voc = _rms_safe(voc, self.cfg.output.vocoder_target_rms)
            write_wav(write_dir / f"{e.entry_id}.wav", voc)
            if mask is not None:
                cf.save_grid(write_dir / f"{e.entry_id}.mask", mask.values, "mask")
        return row, edg

    def run_condition(self, condition: str, models=None, write_dir: Optional[Path] = None) -> List[em.MetricsRow]:
        """Metrics rows for every test entry under ``condition``."""
        if condition not in em.CONDITIONS:
            raise PipelineError(f"unknown condition {condition!r}")
        models = self._models_for_conditions() if models is None else models
        return [self.process_entry(condition, e, models, write_dir)[0] for e in self.manifest().split("test")]

    def enhance(self) -> str:
        model_keys = self._ensure_models()

        def build(d: Path):
            models = self._models_for_conditions()
            rows = []
            for cond in self.cfg.conditions:
                (d / cond).mkdir()
                rows.extend(self.run_condition(cond, models, d / cond))
                log.info("condition %s done", cond)
            _write_text(d / "metrics.csv", em.rows_to_csv(rows))

        return self._stage("enhanced", {
            "dataset": self._keys["dataset"], "models": model_keys, "conditions": self.cfg.conditions,
            "features": asdict(self.cfg.features), "vocoder_rms": self.cfg.output.vocoder_target_rms}, build)

    def evaluate(self) -> em.MetricsReport:
        key = self.enhance()

        def build(d: Path):
            text = (self.root / "enhanced" / "metrics.csv").read_text()
            rows = em.rows_from_csv(text)
            rows.sort(key=lambda r: (self.cfg.conditions.index(r.condition), r.room, r.utterance_id))
            _write_text(d / "metrics.csv", em.rows_to_csv(rows))

        self._stage("report", {"enhanced": key}, build)
        return self.metrics()

    def metrics(self) -> em.MetricsReport:
        path = self.root / "report" / "metrics.csv"
        if not path.exists():
            raise PipelineError("no metrics yet: run evaluate first")
        return em.MetricsReport(em.rows_from_csv(path.read_text()))

    def score(self, responses_path) -> List[Dict]:
        """Score listener responses from a CSV of condition, room, utterance_id, response, target."""
        lexicon = em.load_lexicon()
        out = []
        with open(responses_path, encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                rep = em.score_intelligibility(rec["response"], rec["target"], lexicon)
                out.append({"condition": rec["condition"], "room": rec["room"],
                            "utterance_id": rec["utterance_id"],
                            "phonemes_correct": rep.phonemes_correct, "phonemes_total": rep.phonemes_total,
                            "pct_correct": repr(rep.percent_correct), "rau": repr(rep.rau)})
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["condition", "room", "utterance_id", "phonemes_correct",
                                            "phonemes_total", "pct_correct", "rau"], lineterminator="\n")
        w.writeheader()
        w.writerows(out)
        _write_text(self.root / "scores" / "scores.csv", buf.getvalue())
        return out

    def report(self) -> Path:
        report = self.evaluate()
        d = self.root / "report"
        scores_path = self.root / "scores" / "scores.csv"
        if scores_path.exists():
            with open(scores_path, encoding="utf-8", newline="") as fh:
                scores = {(r["condition"], r["room"], r["utterance_id"]): r for r in csv.DictReader(fh)}
            for row in report.rows:
                s = scores.get((row.condition, row.room, row.utterance_id))
                if s is not None:
                    row.pct_correct, row.rau = float(s["pct_correct"]), float(s["rau"])
            _write_text(d / "metrics_scored.csv", em.rows_to_csv(report.rows))
        _write_text(d / "table.csv", em.condition_table_csv(report, self.cfg.conditions))
        self.export_electrodograms(d)
        return d / "table.csv"

    def _electrodogram_entry(self) -> ManifestEntry:
        test = self.manifest().split("test")
        if not test:
            raise PipelineError("test split is empty")
        wanted = self.cfg.output.electrodogram_entry
        if wanted:
            for e in test:
                if e.entry_id == wanted:
                    return e
            raise PipelineError(f"electrodogram entry {wanted!r} not in the test split")
        rirs = self.manifest().rirs
        worst = max(rirs, key=lambda k: rirs[k]["rt60_s"])
        return next(e for e in test if e.rir_id == worst)

    def export_electrodograms(self, d: Path) -> None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        e = self._electrodogram_entry()
        conds = [c for c in self.cfg.output.electrodogram_conditions if c in self.cfg.conditions]
        models = self._models_for_conditions()
        grams = {}
        for cond in conds:
            _, edg = self.process_entry(cond, e, models)
            grams[cond] = edg
            _write_text(d / f"electrodogram_{cond}.csv", cf.electrodogram_csv(edg))
        if not grams:
            return
        fig, axes = plt.subplots(len(grams), 1, figsize=(8, 1.8 * len(grams)), sharex=True, squeeze=False)
        for ax, (cond, edg) in zip(axes[:, 0], grams.items()):
            t_ms = (cf.HOP * np.arange(edg.n_frames) + cf.FRAME_LEN // 2) / cf.FS * 1000
            ax.imshow(edg.magnitudes.T, aspect="auto", origin="lower", cmap="gray_r",
                      extent=(t_ms[0], t_ms[-1], 0.5, cf.N_CHANNELS + 0.5))
            ax.set_ylabel(f"{cond}\nelectrode")
        axes[-1, 0].set_xlabel("time (ms)")
        fig.suptitle(e.entry_id)
        fig.tight_layout()
        fig.savefig(d / "electrodograms.png", dpi=100, metadata={"Software": None})
        plt.close(fig)


def _rms_safe(x: AudioBuffer, target: float) -> AudioBuffer:
    from .signal_io import rms_equalize

    y = rms_equalize(x, target)
    peak = float(np.max(np.abs(y.samples))) if len(y) else 0.0
    if peak > 1.0:
        # RMS target would clip; back off to full scale
        y = AudioBuffer(y.samples / peak, y.sample_rate_hz)
    return y


def condition_ordering_rate(report: em.MetricsReport, better: str, worse: str, room: str) -> float:
    """Fraction of utterances in ``room`` where ECM(better) >= ECM(worse)."""
    by = {(r.condition, r.utterance_id): r.ecm for r in report.rows if r.room == room}
    utts = sorted({u for c, u in by if c == worse})
    wins = [by[(better, u)] >= by[(worse, u)] for u in utts if (better, u) in by]
    return float(np.mean(wins)) if wins else math.nan
