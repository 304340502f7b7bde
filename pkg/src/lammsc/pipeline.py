"""End-to-end orchestration of the five workflow steps.

A single transmission runs payload -> caption -> personalized semantics ->
QPSK frames -> fading channel -> gain estimation -> equalization ->
demodulation -> receiver personalization -> payload, recording every
intermediate. A sweep repeats that over a corpus and an (snr, estimator)
grid with per-message derived seeds, so paired arms see identical channel
and noise draws and the whole run is a pure function of (config, corpus,
master seed).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import cge, codec, semeval
from .channel import (NO_NOISE, apply_channel, gen_channel, ls_estimate,
                      make_pilot_pattern, nmse)
from .corpus import load_corpus, save_corpus, synthetic_corpus  # noqa: F401
from .errors import CaptionParseError, ConfigError, LamMscError
from .lkb import (Profile, default_prompt_base, load_prompt_base,
                  personalize_extract, personalize_recover, personalize_remote)
from .mma import ScenePayload, scene_to_text, text_to_scene, transform_remote
from .wire import Endpoint

ESTIMATORS = ("perfect", "cge", "ls", "none")
BACKENDS = ("mock", "remote")
REPORT_HEADER = "snr_db,estimator,accuracy,mean_cosine,mean_nmse,mean_ser,n"


@dataclass
class PipelineConfig:
    rows: int = 32
    cols: int = 32
    pilot_df: int = 4
    pilot_dt: int = 4
    pilot_seed: int = 97
    sigma_f: float = 4.0
    sigma_t: float = 4.0
    snr_db: list = field(default_factory=lambda: [10.0])
    repetition: int = 1
    estimator: str = "perfect"
    estimators: list | None = None  # sweep arms; None means [estimator]
    equalizer: str = "zf"
    mma_backend: str = "mock"
    lkb_backend: str = "mock"
    embed_backend: str = "mock"
    lkb_enabled: bool = True
    mma_endpoint: str = ""
    lkb_endpoint: str = ""
    embed_endpoint: str = ""
    timeout_ms: int = 5000
    retries: int = 1
    master_seed: int = 1
    threshold: float = 0.6
    sender: str = "Mike"
    receiver: str = "Jane"
    prompt_base_path: str = ""
    model_path: str = ""
    corpus_path: str = ""
    ideal_channel: bool = False

    def validate(self):
        if self.rows < 4 or self.cols < 4:
            raise ConfigError(f"grid must be at least 4x4, got "
                              f"{self.rows}x{self.cols}")
        if not self.snr_db:
            raise ConfigError("snr_db list must be non-empty")
        if self.repetition < 1:
            raise ConfigError("repetition must be >= 1")
        if not -1.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [-1, 1]")
        if self.equalizer not in ("zf", "mmse"):
            raise ConfigError(f"unknown equalizer {self.equalizer!r}")
        arms = self.estimators or [self.estimator]
        for est in arms:
            if est not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {est!r} "
                                  f"(expected one of {ESTIMATORS})")
        if "cge" in arms and not self.model_path:
            raise ConfigError("estimator 'cge' requires model_path")
        for stage, backend, endpoint in (
                ("mma", self.mma_backend, self.mma_endpoint),
                ("lkb", self.lkb_backend, self.lkb_endpoint),
                ("embed", self.embed_backend, self.embed_endpoint)):
            if backend not in BACKENDS:
                raise ConfigError(f"{stage} backend must be one of {BACKENDS}, "
                                  f"got {backend!r}")
            if backend == "remote" and not endpoint:
                raise ConfigError(f"{stage} backend 'remote' needs an endpoint")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.snr_db = [float(s) for s in cfg.snr_db]
        if cfg.estimators is not None:
            cfg.estimators = [str(e) for e in cfg.estimators]
        return cfg

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class TransmissionRecord:
    input_payload: object
    caption: str = ""
    semantics: str = ""
    reference_text: str = ""
    received_text: str = ""
    recovered_text: str = ""
    recovered_payload: object = None
    cosine: float = 0.0
    correct: bool = False
    frame_ser: list = field(default_factory=list)
    ser: float = 0.0
    nmse: float = 0.0
    snr_db: float = 0.0
    estimator: str = ""
    seed: int = 0
    timings: dict = field(default_factory=dict)
    error_stage: str | None = None
    error_message: str = ""
    flags: list = field(default_factory=list)


@dataclass
class SweepRow:
    snr_db: float
    estimator: str
    accuracy: float
    mean_cosine: float
    mean_nmse: float
    mean_ser: float
    n: int


@dataclass
class SweepReport:
    rows: list
    config_fingerprint: str
    master_seed: int
    failures: dict = field(default_factory=dict)  # "snr/estimator" -> count


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary labeled parts."""
    blob = "|".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "little")


def _snr_key(snr_db: float) -> str:
    return "inf" if snr_db == NO_NOISE else f"{snr_db:.6g}"


# ---------------------------------------------------------------------------
# stage backends

def _endpoint(cfg: PipelineConfig, stage: str) -> Endpoint:
    url = getattr(cfg, f"{stage}_endpoint")
    return Endpoint(url, cfg.timeout_ms, cfg.retries)


def _to_caption(payload, cfg: PipelineConfig) -> str:
    if isinstance(payload, str):
        return payload
    if cfg.mma_backend == "remote":
        return transform_remote(payload, "text", _endpoint(cfg, "mma"))
    return scene_to_text(payload)


def _to_payload(text: str, modality: str, cfg: PipelineConfig):
    if cfg.mma_backend == "remote":
        return transform_remote(text, modality, _endpoint(cfg, "mma"))
    return text_to_scene(text, modality)


def _extract(text: str, sender: Profile, receiver: Profile,
             cfg: PipelineConfig) -> str:
    if not cfg.lkb_enabled:
        return text
    if cfg.lkb_backend == "remote":
        return personalize_remote(text, sender, "extract", _endpoint(cfg, "lkb"))
    return personalize_extract(text, sender, receiver)


def _recover(text: str, receiver: Profile, sender_name: str,
             cfg: PipelineConfig) -> str:
    if not cfg.lkb_enabled:
        return text
    if cfg.lkb_backend == "remote":
        return personalize_remote(text, receiver, "recover", _endpoint(cfg, "lkb"))
    return personalize_recover(text, receiver, sender_name)


def _embed(text: str, cfg: PipelineConfig) -> semeval.EmbeddingVector:
    if cfg.embed_backend == "remote":
        return semeval.embed_remote(text, _endpoint(cfg, "embed"))
    return semeval.embed(text)


def load_profiles(cfg: PipelineConfig) -> tuple[Profile, Profile]:
    base = (load_prompt_base(cfg.prompt_base_path) if cfg.prompt_base_path
            else default_prompt_base())
    try:
        return base.get(cfg.sender), base.get(cfg.receiver)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# single transmission

def _estimate_gains(estimator: str, y: np.ndarray, gains: np.ndarray, pattern,
                    model) -> np.ndarray:
    if estimator == "perfect":
        return gains
    if estimator == "ls":
        return ls_estimate(y, pattern)
    if estimator == "cge":
        return cge.estimate(model, cge.make_condition(y, pattern))
    return np.ones_like(gains)


def run_pipeline(payload, cfg: PipelineConfig, sender: Profile, receiver: Profile,
                 *, snr_db: float | None = None, estimator: str | None = None,
                 seed: int | None = None, model: cge.CganModel | None = None,
                 pattern=None) -> TransmissionRecord:
    """One end-to-end transmission; stage errors are captured, not raised."""
    snr_db = cfg.snr_db[0] if snr_db is None else snr_db
    estimator = estimator or cfg.estimator
    if estimator not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {estimator!r}")
    seed = cfg.master_seed if seed is None else seed
    pattern = pattern or make_pilot_pattern(cfg.rows, cfg.cols, cfg.pilot_df,
                                            cfg.pilot_dt, cfg.pilot_seed)
    if estimator == "cge" and model is None:
        model = cge.load_model(cfg.model_path)

    record = TransmissionRecord(input_payload=payload, snr_db=snr_db,
                                estimator=estimator, seed=seed)
    timings = record.timings

    def attempt(stage, fn, fallback):
        start = time.perf_counter()
        try:
            return fn()
        except (LamMscError, ValueError) as exc:
            if record.error_stage is None:
                record.error_stage = stage
                record.error_message = str(exc)
            return fallback
        finally:
            timings[stage] = timings.get(stage, 0.0) + time.perf_counter() - start

    record.caption = attempt("modal-transform",
                             lambda: _to_caption(payload, cfg), "")
    record.semantics = attempt("personalize-extract",
                               lambda: _extract(record.caption, sender, receiver,
                                                cfg), "")
    if not record.semantics:
        record.flags.append("empty-semantics")
    record.reference_text = attempt("reference",
                                    lambda: _recover(record.semantics, receiver,
                                                     sender.name, cfg),
                                    record.semantics)

    def transmit() -> str:
        stream = codec.tokenize(record.semantics)
        frames = codec.map_to_grid(codec.modulate(stream, cfg.repetition), pattern)
        noise_var = 0.0 if snr_db == NO_NOISE else 10.0 ** (-snr_db / 10.0)
        received = []
        nmses = []
        errors = 0
        total = 0
        for i, frame in enumerate(frames):
            if cfg.ideal_channel:
                gains = np.ones((cfg.rows, cfg.cols), np.complex64)
            else:
                gains = gen_channel(derive_seed(seed, "chan", i), cfg.rows,
                                    cfg.cols, cfg.sigma_f, cfg.sigma_t).gains
            y = apply_channel(frame.grid, gains, snr_db,
                              derive_seed(seed, "noise", i))
            h_est = _estimate_gains(estimator, y, gains, pattern, model)
            nmses.append(nmse(h_est, gains))
            eq = codec.equalize(y, h_est, noise_var, cfg.equalizer)
            got = frame.extract(eq)
            received.append(got)
            sent = frame.extract(frame.grid)
            frame_ser = codec.ser(sent, got)
            record.frame_ser.append(frame_ser)
            errors += frame_ser * sent.size
            total += sent.size
        record.nmse = float(np.mean(nmses)) if nmses else 0.0
        record.ser = errors / total if total else 0.0
        stream_rx = codec.demodulate(np.concatenate(received), cfg.repetition)
        if stream_rx.missing_terminator:
            record.flags.append("missing-terminator")
        return codec.detokenize(stream_rx)

    record.received_text = attempt("transmit", transmit, "")
    record.recovered_text = attempt("personalize-recover",
                                    lambda: _recover(record.received_text,
                                                     receiver, sender.name, cfg),
                                    record.received_text)
    modality = payload.modality if isinstance(payload, ScenePayload) else "image"
    record.recovered_payload = attempt(
        "modal-recovery",
        lambda: _to_payload(record.recovered_text, modality, cfg), None)
    record.cosine = attempt(
        "scoring",
        lambda: semeval.cosine(_embed(record.reference_text, cfg),
                               _embed(record.recovered_text, cfg)), 0.0)
    record.correct = record.cosine > cfg.threshold
    return record


# ---------------------------------------------------------------------------
# sweeps and reports

def sweep(cfg: PipelineConfig, messages) -> SweepReport:
    """Run every (snr, estimator) arm over the corpus with paired seeds."""
    messages = list(messages)
    if not messages:
        raise ConfigError("sweep needs a non-empty corpus")
    cfg.validate()
    sender, receiver = load_profiles(cfg)
    pattern = make_pilot_pattern(cfg.rows, cfg.cols, cfg.pilot_df, cfg.pilot_dt,
                                 cfg.pilot_seed)
    arms = sorted(set(cfg.estimators or [cfg.estimator]))
    model = cge.load_model(cfg.model_path) if "cge" in arms else None
    rows = []
    failures = {}
    for snr in sorted(set(cfg.snr_db)):
        for est in arms:
            scores, nmses, sers = [], [], []
            fails = 0
            for idx, payload in enumerate(messages):
                msg_seed = derive_seed(cfg.master_seed, idx, _snr_key(snr))
                rec = run_pipeline(payload, cfg, sender, receiver, snr_db=snr,
                                   estimator=est, seed=msg_seed, model=model,
                                   pattern=pattern)
                scores.append(rec.cosine)
                nmses.append(rec.nmse)
                sers.append(rec.ser)
                if rec.error_stage is not None:
                    fails += 1
            rows.append(SweepRow(
                snr_db=snr, estimator=est,
                accuracy=semeval.accuracy_from_scores(scores, cfg.threshold),
                mean_cosine=float(np.mean(scores)),
                mean_nmse=float(np.mean(nmses)),
                mean_ser=float(np.mean(sers)), n=len(messages)))
            if fails:
                failures[f"{_snr_key(snr)}/{est}"] = fails
    return SweepReport(rows, cfg.fingerprint(), cfg.master_seed, failures)


def format_report(report: SweepReport) -> str:
    lines = [REPORT_HEADER]
    for row in sorted(report.rows, key=lambda r: (r.snr_db, r.estimator)):
        lines.append(f"{row.snr_db:.6g},{row.estimator},{row.accuracy:.6g},"
                     f"{row.mean_cosine:.6g},{row.mean_nmse:.6g},"
                     f"{row.mean_ser:.6g},{row.n}")
    return "\n".join(lines) + "\n"


def write_report(report: SweepReport, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_report(report))
    except OSError as exc:
        raise LamMscError(f"cannot write report to {path}: {exc}") from exc
