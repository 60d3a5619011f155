"""Frame tensor files, JSON-lines manifests and the synthetic data generators.

FrameTensorFile layout (little-endian)::

    b"FTB1" | n_frames u32 | height u32 | width u32 | channels u32 | float32 payload

The payload is frame-major, row-major, channel-last.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import FormatError, InputError
from .expression_model import LABELS, ExpressionLabel, FrameSequence
from .features import Diagnosis, IntensityRecord
from .numerics import SeededRng

log = logging.getLogger(__name__)

FRAME_MAGIC = b"FTB1"
_HEADER = struct.Struct("<4I")
HEADER_BYTES = len(FRAME_MAGIC) + _HEADER.size
MAX_ELEMENTS = 1 << 31

EXPRESSION_MANIFEST = "expressions.jsonl"
SUBJECT_MANIFEST = "subjects.jsonl"


# -- FrameTensorFile ----------------------------------------------------------------

def encode_frames(frames: np.ndarray) -> tuple[bytes, int]:
    """Serialise (N, H, W, C) frames; returns the bytes and how many values were clamped."""
    arr = np.asarray(frames)
    if arr.ndim != 4:
        raise InputError(f"frames must have shape (N, H, W, C), got {arr.shape}")
    arr = arr.astype(np.float32)
    out_of_range = int(np.count_nonzero((arr < 0) | (arr > 1)))
    if out_of_range:
        arr = np.clip(arr, 0.0, 1.0)
    header = FRAME_MAGIC + _HEADER.pack(*arr.shape)
    return header + arr.astype("<f4").tobytes(order="C"), out_of_range


def decode_frames(buf: bytes) -> np.ndarray:
    if len(buf) < len(FRAME_MAGIC) or buf[:4] != FRAME_MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {FRAME_MAGIC!r}", 0)
    if len(buf) < HEADER_BYTES:
        raise FormatError("truncated header", len(buf))
    shape = _HEADER.unpack_from(buf, 4)
    count = math.prod(shape)
    if count >= MAX_ELEMENTS:
        raise FormatError(f"header dimensions {shape} overflow the element limit", 4)
    need = HEADER_BYTES + 4 * count
    if len(buf) < need:
        raise FormatError(f"truncated payload: header promises {count} floats", len(buf))
    if len(buf) > need:
        raise FormatError("trailing bytes after payload", need)
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=HEADER_BYTES)
    return data.reshape(shape).astype(np.float32)


def write_frames(path, frames: np.ndarray) -> int:
    """Write a FrameTensorFile. Returns the number of values clamped into [0, 1]."""
    buf, clamped = encode_frames(frames)
    if clamped:
        log.warning("%s: clamped %d values into [0, 1]", path, clamped)
    Path(path).write_bytes(buf)
    return clamped


def read_frames(path) -> np.ndarray:
    return decode_frames(Path(path).read_bytes())


# -- manifests ----------------------------------------------------------------------

@dataclass(frozen=True)
class ClipEntry:
    path: str
    label: ExpressionLabel

    def __post_init__(self):
        object.__setattr__(self, "label", ExpressionLabel.parse(self.label))

    def to_json(self) -> dict:
        return {"path": self.path, "label": self.label.key}


@dataclass(frozen=True)
class SubjectEntry:
    subject_id: str
    diagnosis: Diagnosis
    videos: dict  # expression key -> relative path

    def __post_init__(self):
        object.__setattr__(self, "diagnosis", Diagnosis.parse(self.diagnosis))

    def to_json(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "diagnosis": self.diagnosis.name,
            "videos": {lbl.key: self.videos[lbl.key] for lbl in LABELS},
        }

    def ordered_paths(self) -> list[str]:
        return [self.videos[lbl.key] for lbl in LABELS]


def _iter_json_lines(path) -> Iterator[tuple[int, int, dict]]:
    offset = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if text:
                try:
                    yield lineno, offset, json.loads(text.decode("utf-8"))
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    raise FormatError(f"{path}: line {lineno}: {exc}", offset) from None
            offset += len(raw)


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row.to_json() if hasattr(row, "to_json") else row) + "\n")


def read_clip_manifest(path) -> list[ClipEntry]:
    out = []
    for lineno, offset, obj in _iter_json_lines(path):
        try:
            out.append(ClipEntry(str(obj["path"]), ExpressionLabel.parse(obj["label"])))
        except (KeyError, InputError, ValueError) as exc:
            raise FormatError(f"{path}: line {lineno}: bad clip entry ({exc})", offset) from None
    return out


def read_subject_manifest(path) -> list[SubjectEntry]:
    out = []
    expected = {lbl.key for lbl in LABELS}
    for lineno, offset, obj in _iter_json_lines(path):
        try:
            videos = {str(k): str(v) for k, v in obj["videos"].items()}
            if set(videos) != expected:
                raise InputError(f"videos must list exactly {sorted(expected)}")
            out.append(SubjectEntry(str(obj["subject_id"]), Diagnosis.parse(obj["diagnosis"]), videos))
        except (KeyError, InputError, ValueError, AttributeError) as exc:
            raise FormatError(f"{path}: line {lineno}: bad subject entry ({exc})", offset) from None
    return out


# -- synthetic generators ---------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the two synthetic data levels.

    Pixel level: each class is a grating at ``class * 45`` degrees whose
    contrast follows ``a0 + amp * sin(2 pi t / period)``. PD subjects use
    ``a0 * damp_static`` and ``amp * damp_dynamic``. Intensity level: values
    are log-normal around the cohort's diagonal / off-diagonal means.
    """

    seed: int = 0
    videos_per_class: int = 16
    n_hc: int = 80
    n_pd: int = 80
    n_frames: int = 40
    image_size: int = 32
    channels: int = 1
    spatial_cycles: float = 3.0
    noise_sigma: float = 0.1
    a0: float = 0.5
    amp: float = 0.3
    period: float = 20.0
    damp_static: float = 0.6
    damp_dynamic: float = 0.4
    subject_jitter: float = 0.1
    diag_mean_hc: float = 0.7
    diag_mean_pd: float = 0.45
    offdiag_mean_hc: float = 0.3
    offdiag_mean_pd: float = 0.3
    intensity_sigma_hc: float = 0.08
    intensity_sigma_pd: float = 0.08

    def __post_init__(self):
        if min(self.videos_per_class, self.n_hc, self.n_pd, self.n_frames, self.image_size, self.channels) < 1:
            raise InputError("counts and geometry must be >= 1")
        if min(self.noise_sigma, self.a0, self.amp, self.subject_jitter,
               self.intensity_sigma_hc, self.intensity_sigma_pd) < 0:
            raise InputError("sigmas and amplitudes must be >= 0")
        if self.period <= 0:
            raise InputError("period must be positive")
        if min(self.diag_mean_hc, self.diag_mean_pd, self.offdiag_mean_hc, self.offdiag_mean_pd) <= 0:
            raise InputError("intensity means must be positive")


def grating(label: ExpressionLabel | int, size: int, cycles: float) -> np.ndarray:
    theta = math.radians(45.0 * int(label))
    coords = np.arange(size, dtype=np.float64)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    return np.sin(2.0 * math.pi * cycles * (xx * math.cos(theta) + yy * math.sin(theta)) / size)


def render_clip(cfg: SyntheticConfig, label, a0: float, amp: float, rng: SeededRng) -> np.ndarray:
    """(n_frames, H, W, C) clip with a random start phase of the contrast oscillation."""
    pattern = grating(label, cfg.image_size, cfg.spatial_cycles)
    t0 = rng.uniform(0.0, cfg.period)
    t = np.arange(cfg.n_frames, dtype=np.float64)
    contrast = a0 + amp * np.sin(2.0 * math.pi * (t + t0) / cfg.period)
    clip = 0.5 + 0.5 * contrast[:, None, None, None] * pattern[None, :, :, None]
    clip = np.broadcast_to(clip, (cfg.n_frames, cfg.image_size, cfg.image_size, cfg.channels))
    noise = rng.normal(0.0, cfg.noise_sigma, clip.shape) if cfg.noise_sigma > 0 else 0.0
    return np.clip(clip + noise, 0.0, 1.0).astype(np.float32)


def synth_expression_clips(cfg: SyntheticConfig) -> list[tuple[np.ndarray, ExpressionLabel]]:
    rng = SeededRng(cfg.seed).child("expression")
    clips = []
    for i in range(cfg.videos_per_class):
        for label in LABELS:
            clips.append((render_clip(cfg, label, cfg.a0, cfg.amp, rng), label))
    return clips


def cohort_motion(cfg: SyntheticConfig, diagnosis: Diagnosis) -> tuple[float, float]:
    if diagnosis == Diagnosis.PD:
        return cfg.a0 * cfg.damp_static, cfg.amp * cfg.damp_dynamic
    return cfg.a0, cfg.amp


def subject_ids(cfg: SyntheticConfig) -> list[tuple[str, Diagnosis]]:
    return ([(f"HC{i:03d}", Diagnosis.HC) for i in range(cfg.n_hc)]
            + [(f"PD{i:03d}", Diagnosis.PD) for i in range(cfg.n_pd)])


def synth_subject_clips(cfg: SyntheticConfig) -> list[tuple[str, Diagnosis, list[np.ndarray]]]:
    """Four clips per subject in canonical expression order."""
    rng = SeededRng(cfg.seed).child("subjects")
    out = []
    for sid, diagnosis in subject_ids(cfg):
        a0, amp = cohort_motion(cfg, diagnosis)
        scale = math.exp(rng.normal(0.0, cfg.subject_jitter)) if cfg.subject_jitter > 0 else 1.0
        clips = [render_clip(cfg, label, a0 * scale, amp * scale, rng) for label in LABELS]
        out.append((sid, diagnosis, clips))
    return out


def synth_intensity_records(cfg: SyntheticConfig) -> list[IntensityRecord]:
    rng = SeededRng(cfg.seed).child("intensity")
    diag_idx = np.arange(4) * 5
    records = []
    for sid, diagnosis in subject_ids(cfg):
        if diagnosis == Diagnosis.PD:
            dm, om, sigma = cfg.diag_mean_pd, cfg.offdiag_mean_pd, cfg.intensity_sigma_pd
        else:
            dm, om, sigma = cfg.diag_mean_hc, cfg.offdiag_mean_hc, cfg.intensity_sigma_hc
        means = np.full(16, math.log(om))
        means[diag_idx] = math.log(dm)
        values = np.exp(means + sigma * rng.normal(0.0, 1.0, 16))
        records.append(IntensityRecord(values, sid, diagnosis))
    return records


def write_expression_dataset(root, cfg: SyntheticConfig) -> list[ClipEntry]:
    root = Path(root)
    (root / "clips").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (clip, label) in enumerate(synth_expression_clips(cfg)):
        rel = f"clips/expr_{i:04d}_{label.key}.ftb"
        write_frames(root / rel, clip)
        entries.append(ClipEntry(rel, label))
    write_jsonl(root / EXPRESSION_MANIFEST, entries)
    return entries


def write_subject_dataset(root, cfg: SyntheticConfig) -> list[SubjectEntry]:
    root = Path(root)
    (root / "subjects").mkdir(parents=True, exist_ok=True)
    entries = []
    for sid, diagnosis, clips in synth_subject_clips(cfg):
        videos = {}
        for label, clip in zip(LABELS, clips):
            rel = f"subjects/{sid}_{label.key}.ftb"
            write_frames(root / rel, clip)
            videos[label.key] = rel
        entries.append(SubjectEntry(sid, diagnosis, videos))
    write_jsonl(root / SUBJECT_MANIFEST, entries)
    return entries


def load_expression_dataset(root, m: int) -> list[FrameSequence]:
    """Read every clip listed in the expression manifest and sample ``m`` frames from each."""
    from .expression_model import sample_frames

    root = Path(root)
    out = []
    for entry in read_clip_manifest(root / EXPRESSION_MANIFEST):
        frames = read_frames(root / entry.path)
        out.append(sample_frames(FrameSequence(frames, entry.label), m))
    return out


def load_subject_videos(root, entry: SubjectEntry, m: int) -> list[FrameSequence]:
    from .expression_model import sample_frames

    root = Path(root)
    return [sample_frames(FrameSequence(read_frames(root / p), lbl), m)
            for lbl, p in zip(LABELS, entry.ordered_paths())]
