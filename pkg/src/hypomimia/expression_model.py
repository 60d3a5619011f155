"""Dual-encoder expression-intensity network.

Visual side: a ViT frame encoder, a self-attention gate applied to its
tokens, and a temporal transformer over the sampled frames. Text side: a
small causal transformer over a class description with learnable context
vectors prepended. A video's intensity for a class is
``exp(cos(F, G) / tau)`` between the pooled video embedding ``F`` and the
class text embedding ``G``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

from . import numerics as nx
from .errors import InputError, NumericError
from .layers import LayerNorm, Linear, Module, MultiHeadSelfAttention, TransformerBlock, causal_mask
from .numerics import Adam, Parameter, SeededRng, Tensor

log = logging.getLogger(__name__)


class ExpressionLabel(IntEnum):
    NEUTRAL = 0
    HAPPINESS = 1
    SURPRISED = 2
    ANGRY = 3

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "ExpressionLabel":
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise InputError(f"unknown expression label {value!r}") from None
        return cls(int(value))


LABELS = tuple(ExpressionLabel)
NUM_CLASSES = len(LABELS)


@dataclass(frozen=True)
class ClassPrompt:
    label: ExpressionLabel
    description: str

    def __post_init__(self):
        if not self.description.strip():
            raise InputError(f"empty description for {self.label.key}")


DEFAULT_DESCRIPTIONS = (
    "a calm face with a relaxed neutral expression and resting muscles",
    "a happy smiling face with raised cheeks and lip corners pulled up",
    "a surprised face with raised eyebrows wide open eyes and a dropped jaw",
    "an angry face with lowered frowning brows and tightly pressed lips",
)

PAD, UNK, SOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<sos>", "<eos>")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return re.findall(r"[a-z0-9]+", text.lower())


def build_vocab(descriptions: Sequence[str]) -> tuple[str, ...]:
    words = sorted({w for d in descriptions for w in tokenize(d)})
    return SPECIAL_TOKENS + tuple(words)


@dataclass(frozen=True)
class FrameSequence:
    """``frames`` has shape (M, height, width, channels) with values in [0, 1]."""

    frames: np.ndarray
    source_label: ExpressionLabel | None = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 4 or frames.shape[0] < 1:
            raise InputError(f"frames must have shape (M, H, W, C) with M >= 1, got {frames.shape}")
        if frames.min() < 0.0 or frames.max() > 1.0:
            raise InputError("frame values must lie in [0, 1]")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class ExpressionModelConfig:
    frames: int = 8
    image_size: int = 32
    channels: int = 1
    patch_size: int = 8
    embed_dim: int = 64
    vit_depth: int = 2
    mhsa_heads: int = 4
    temporal_depth: int = 1
    text_depth: int = 1
    mlp_ratio: int = 2
    max_text_len: int = 24
    n_ctx: int = 4
    tau: float = 0.07
    learnable_tau: bool = False
    descriptions: tuple[str, ...] = DEFAULT_DESCRIPTIONS
    vocab: tuple[str, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise InputError(f"patch_size {self.patch_size} does not divide image_size {self.image_size}")
        if self.embed_dim % self.mhsa_heads:
            raise InputError(f"embed_dim {self.embed_dim} is not divisible by {self.mhsa_heads} heads")
        if not self.tau > 0:
            raise InputError(f"tau must be positive, got {self.tau}")
        if self.frames < 1 or self.n_ctx < 0:
            raise InputError("frames must be >= 1 and n_ctx >= 0")
        if len(self.descriptions) != NUM_CLASSES:
            raise InputError(f"need one description per class ({NUM_CLASSES}), got {len(self.descriptions)}")
        object.__setattr__(self, "descriptions", tuple(self.descriptions))
        if self.vocab is None:
            object.__setattr__(self, "vocab", build_vocab(self.descriptions))
        else:
            object.__setattr__(self, "vocab", tuple(self.vocab))

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def prompts(self) -> tuple[ClassPrompt, ...]:
        return tuple(ClassPrompt(lbl, d) for lbl, d in zip(LABELS, self.descriptions))


@dataclass(frozen=True)
class ExpressionTrainConfig:
    batch_size: int = 16
    epochs: int = 50
    lr_image: float = 1e-5
    lr_temporal: float = 1e-3
    seed: int = 0
    stop_at_accuracy: float | None = None


@dataclass
class TrainingHistory:
    """``accuracy`` is the running accuracy seen during each epoch; ``fit_accuracy``
    is a full re-scoring of the training set after the epoch, recorded only when
    early stopping is enabled."""

    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    fit_accuracy: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"loss": list(self.loss), "accuracy": list(self.accuracy), "fit_accuracy": list(self.fit_accuracy)}


class VisualEncoder(Module):
    """Patch embedding and ViT blocks (frame encoder) followed by the attention gate."""

    def __init__(self, cfg: ExpressionModelConfig, rng: SeededRng):
        d, p = cfg.embed_dim, cfg.patch_size
        self.patch_embed = Linear(p * p * cfg.channels, d, rng)
        self.cls = Parameter(rng.normal(0.0, 0.02, d))
        self.pos = Parameter(rng.normal(0.0, 0.02, (cfg.num_patches + 1, d)))
        self.vit = [TransformerBlock(d, cfg.mhsa_heads, rng, cfg.mlp_ratio) for _ in range(cfg.vit_depth)]
        self.ln_post = LayerNorm(d)
        self.gate_ln = LayerNorm(d)
        self.gate = MultiHeadSelfAttention(d, cfg.mhsa_heads, rng)
        self._cfg = cfg

    def patchify(self, images: np.ndarray) -> np.ndarray:
        cfg = self._cfg
        n, h, w, c = images.shape
        if (h, w, c) != (cfg.image_size, cfg.image_size, cfg.channels):
            raise InputError(
                f"frame shape {(h, w, c)} does not match configured "
                f"{(cfg.image_size, cfg.image_size, cfg.channels)}"
            )
        p = cfg.patch_size
        g = h // p
        x = images.reshape(n, g, p, g, p, c).transpose(0, 1, 3, 2, 4, 5)
        return x.reshape(n, g * g, p * p * c)

    def encode(self, images: np.ndarray) -> Tensor:
        patches = self.patchify(np.asarray(images, dtype=np.float64))
        n = patches.shape[0]
        tokens = self.patch_embed(patches)
        cls = nx.broadcast_to(self.cls, (n, 1, self._cfg.embed_dim))
        x = nx.concat([cls, tokens], axis=1) + self.pos
        for block in self.vit:
            x = block(x)
        return self.ln_post(x)

    def gate_tokens(self, a: Tensor) -> Tensor:
        """Per-frame vector: mean over tokens of ``A * sigmoid(E2(A))``."""
        a_tilde = self.gate(self.gate_ln(a))
        return nx.mean(a * nx.sigmoid(a_tilde), axis=1)


class TemporalModel(Module):
    def __init__(self, cfg: ExpressionModelConfig, rng: SeededRng):
        d = cfg.embed_dim
        self.pos = Parameter(rng.normal(0.0, 0.02, (cfg.frames, d)))
        self.blocks = [TransformerBlock(d, cfg.mhsa_heads, rng, cfg.mlp_ratio) for _ in range(cfg.temporal_depth)]
        self.ln_f = LayerNorm(d)

    def __call__(self, f: Tensor, pool: bool = True) -> Tensor:
        m = f.shape[1]
        x = f + self.pos[:m]
        for block in self.blocks:
            x = block(x)
        x = self.ln_f(x)
        return nx.mean(x, axis=1) if pool else x


class TextEncoder(Module):
    def __init__(self, cfg: ExpressionModelConfig, rng: SeededRng):
        d = cfg.embed_dim
        self.token_embed = Parameter(rng.normal(0.0, 0.02, (len(cfg.vocab), d)))
        self.ctx = Parameter(rng.normal(0.0, 0.02, (cfg.n_ctx, d)))
        self.pos = Parameter(rng.normal(0.0, 0.01, (cfg.max_text_len, d)))
        self.blocks = [TransformerBlock(d, cfg.mhsa_heads, rng, cfg.mlp_ratio) for _ in range(cfg.text_depth)]
        self.ln_final = LayerNorm(d)
        self._cfg = cfg
        self._index = {w: i for i, w in enumerate(cfg.vocab)}

    def token_ids(self, description: str) -> list[int]:
        ids = [self._index.get(w, UNK) for w in tokenize(description)]
        limit = self._cfg.max_text_len - self._cfg.n_ctx - 2
        if len(ids) > limit:
            raise InputError(f"prompt has {len(ids)} tokens; the limit is {limit}")
        return ids

    def __call__(self, descriptions: Sequence[str]) -> Tensor:
        cfg = self._cfg
        rows = [self.token_ids(d) + [EOS] for d in descriptions]
        width = max(len(r) for r in rows)
        ids = np.array([r + [PAD] * (width - len(r)) for r in rows])
        eos_pos = np.array([1 + cfg.n_ctx + len(r) - 1 for r in rows])
        n = len(rows)
        sos = nx.broadcast_to(self.token_embed[np.array([SOS])], (n, 1, cfg.embed_dim))
        ctx = nx.broadcast_to(self.ctx, (n, cfg.n_ctx, cfg.embed_dim))
        words = self.token_embed[ids]
        x = nx.concat([sos, ctx, words], axis=1)
        length = x.shape[1]
        x = x + self.pos[:length]
        mask = causal_mask(length)
        for block in self.blocks:
            x = block(x, mask)
        x = self.ln_final(x)
        return x[np.arange(n), eos_pos]


class ExpressionModel(Module):
    def __init__(self, config: ExpressionModelConfig | None = None):
        cfg = config or ExpressionModelConfig()
        rng = SeededRng(cfg.seed)
        self.visual = VisualEncoder(cfg, rng.child("visual"))
        self.temporal = TemporalModel(cfg, rng.child("temporal"))
        self.text = TextEncoder(cfg, rng.child("text"))
        self.log_tau = Parameter(np.array(math.log(cfg.tau))) if cfg.learnable_tau else None
        self._cfg = cfg
        self.assign_names()

    @property
    def config(self) -> ExpressionModelConfig:
        return self._cfg

    @property
    def tau(self) -> float:
        return math.exp(float(self.log_tau.data)) if self.log_tau is not None else self._cfg.tau

    def image_parameters(self) -> list[Parameter]:
        return self.visual.parameters()

    def temporal_text_parameters(self) -> list[Parameter]:
        image = {id(p) for p in self.image_parameters()}
        return [p for p in self.parameters() if id(p) not in image]

    # forward pieces
    def encode_frames(self, images: np.ndarray) -> Tensor:
        return self.visual.encode(images)

    def video_features(self, videos: np.ndarray) -> Tensor:
        """(B, M, H, W, C) pixel batch -> (B, d) video embeddings F."""
        videos = np.asarray(videos, dtype=np.float64)
        if videos.ndim != 5:
            raise InputError(f"expected a (B, M, H, W, C) batch, got shape {videos.shape}")
        b, m = videos.shape[:2]
        if m > self._cfg.frames:
            raise InputError(f"got {m} frames; the model was built for at most {self._cfg.frames}")
        a = self.visual.encode(videos.reshape((b * m,) + videos.shape[2:]))
        f = self.visual.gate_tokens(a).reshape(b, m, self._cfg.embed_dim)
        return self.temporal(f)

    def text_features(self, descriptions: Sequence[str] | None = None) -> Tensor:
        return self.text(descriptions if descriptions is not None else self._cfg.descriptions)

    def cosines(self, videos: np.ndarray) -> Tensor:
        F = nx.l2_normalize(self.video_features(videos))
        G = nx.l2_normalize(self.text_features())
        return nx.matmul(F, nx.transpose(G))

    def class_logits(self, videos: np.ndarray) -> Tensor:
        cos = self.cosines(videos)
        if self.log_tau is not None:
            return cos * nx.exp(-self.log_tau)
        return cos * (1.0 / self._cfg.tau)


# -- operations on single items ------------------------------------------------------

def sample_frames(video, m: int) -> FrameSequence:
    """Pick ``m`` frames at indices floor(k (N-1) / (m-1)), k = 0..m-1."""
    label = video.source_label if isinstance(video, FrameSequence) else None
    frames = video.frames if isinstance(video, FrameSequence) else np.asarray(video)
    n = len(frames)
    if n < 1:
        raise InputError("cannot sample frames from an empty video")
    if m < 1:
        raise InputError(f"frame count must be >= 1, got {m}")
    idx = sample_indices(n, m)
    return FrameSequence(np.asarray(frames)[idx], label)


def sample_indices(n: int, m: int) -> np.ndarray:
    if m == 1:
        return np.zeros(1, dtype=np.int64)
    return np.array([(k * (n - 1)) // (m - 1) for k in range(m)], dtype=np.int64)


def encode_frame(model: ExpressionModel, frame: np.ndarray) -> Tensor:
    """Token matrix A_i of shape (num_patches + 1, d) for one (H, W, C) frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3:
        raise InputError(f"expected one (H, W, C) frame, got shape {frame.shape}")
    return model.encode_frames(frame[None])[0]


def mhsa_gate(model: ExpressionModel, a: Tensor) -> Tensor:
    a = nx.as_tensor(a)
    single = a.ndim == 2
    f = model.visual.gate_tokens(a.reshape((1,) + a.shape) if single else a)
    return f[0] if single else f


def temporal_encode(model: ExpressionModel, features, pool: bool = True) -> Tensor:
    """Stack M per-frame vectors (M, d) and run the temporal model."""
    f = nx.as_tensor(features)
    out = model.temporal(f.reshape((1,) + f.shape), pool=pool)
    return out[0]


def encode_text(prompt: ClassPrompt | str, model: ExpressionModel) -> Tensor:
    text = prompt.description if isinstance(prompt, ClassPrompt) else prompt
    return model.text([text])[0]


def intensity(F, G, tau: float) -> float:
    """exp(cos(F, G) / tau)."""
    if not tau > 0:
        raise InputError(f"tau must be positive, got {tau}")
    F = np.asarray(F.data if isinstance(F, Tensor) else F, dtype=np.float64)
    G = np.asarray(G.data if isinstance(G, Tensor) else G, dtype=np.float64)
    return math.exp(nx.cosine_similarity(F, G) / tau)


@dataclass(frozen=True)
class ClassScores:
    probabilities: np.ndarray
    intensities: np.ndarray

    @property
    def predicted(self) -> ExpressionLabel:
        return ExpressionLabel(int(np.argmax(self.probabilities)))


def _stack_videos(videos) -> np.ndarray:
    if isinstance(videos, FrameSequence):
        return videos.frames[None]
    if isinstance(videos, np.ndarray):
        return videos if videos.ndim == 5 else videos[None]
    return np.stack([v.frames if isinstance(v, FrameSequence) else np.asarray(v) for v in videos])


def batch_scores(model: ExpressionModel, videos, batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """(probabilities, raw intensities), each of shape (B, 4)."""
    arr = _stack_videos(videos)
    cos = np.concatenate(
        [model.cosines(arr[i:i + batch_size]).data for i in range(0, len(arr), batch_size)]
    )
    logits = cos / model.tau
    probs = nx.softmax(logits, axis=1).data
    return probs, np.exp(logits)


def class_scores(video: FrameSequence, model: ExpressionModel) -> ClassScores:
    probs, raw = batch_scores(model, video)
    return ClassScores(probs[0], raw[0])


# -- training and evaluation ---------------------------------------------------------

def _labels_of(dataset: Sequence[FrameSequence]) -> np.ndarray:
    labels = []
    for i, item in enumerate(dataset):
        if item.source_label is None:
            raise InputError(f"training item {i} has no label")
        labels.append(int(item.source_label))
    return np.array(labels, dtype=np.int64)


def train_expression_model(
    dataset: Sequence[FrameSequence],
    config: ExpressionModelConfig | None = None,
    train_cfg: ExpressionTrainConfig | None = None,
    model: ExpressionModel | None = None,
) -> tuple[ExpressionModel, TrainingHistory]:
    """Minimise 4-way cross-entropy of cos/tau logits against the class prompts.

    The visual encoder is updated with ``lr_image``; the temporal model, text
    encoder and temperature use ``lr_temporal``. Training runs for the full
    epoch budget unless ``stop_at_accuracy`` is set, in which case it ends after
    the first epoch whose model classifies that share of the training set.
    """
    train_cfg = train_cfg or ExpressionTrainConfig()
    if len(dataset) == 0:
        raise InputError("training set is empty")
    labels = _labels_of(dataset)
    missing = set(range(NUM_CLASSES)) - set(labels.tolist())
    if missing:
        names = [ExpressionLabel(c).key for c in sorted(missing)]
        raise InputError(f"labels missing from training set: {names}")
    model = model or ExpressionModel(config)
    videos = _stack_videos(dataset)
    opt = Adam([
        (model.image_parameters(), train_cfg.lr_image),
        (model.temporal_text_parameters(), train_cfg.lr_temporal),
    ])
    rng = SeededRng(train_cfg.seed).child("shuffle")
    history = TrainingHistory()
    n = len(dataset)
    bs = train_cfg.batch_size
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n)
        total_loss, correct = 0.0, 0
        for batch_no, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            opt.zero_grad()
            try:
                logits = model.class_logits(videos[idx])
                loss = nx.cross_entropy(logits, labels[idx])
                loss.backward()
            except NumericError as exc:
                raise NumericError(f"non-finite value at epoch {epoch}, batch {batch_no}: {exc}") from exc
            opt.step()
            total_loss += float(loss.data) * len(idx)
            correct += int((logits.data.argmax(axis=1) == labels[idx]).sum())
        history.loss.append(total_loss / n)
        history.accuracy.append(correct / n)
        log.debug("epoch %d loss %.4f acc %.3f", epoch, history.loss[-1], history.accuracy[-1])
        if train_cfg.stop_at_accuracy is not None:
            probs, _ = batch_scores(model, videos)
            history.fit_accuracy.append(float(np.mean(probs.argmax(axis=1) == labels)))
            if history.fit_accuracy[-1] >= train_cfg.stop_at_accuracy:
                break
    return model, history


@dataclass(frozen=True)
class ExpressionEvaluation:
    accuracy: float
    confusion: np.ndarray


def evaluate_expression(model: ExpressionModel, dataset: Sequence[FrameSequence]) -> ExpressionEvaluation:
    """Accuracy and a 4x4 confusion matrix (rows = true label, columns = predicted)."""
    if len(dataset) == 0:
        raise InputError("evaluation set is empty")
    labels = _labels_of(dataset)
    probs, _ = batch_scores(model, dataset)
    return confusion_from_predictions(labels, probs.argmax(axis=1))


def confusion_from_predictions(labels, predicted) -> ExpressionEvaluation:
    labels = np.asarray(labels, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if labels.size == 0:
        raise InputError("evaluation set is empty")
    matrix = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(matrix, (labels, predicted), 1)
    return ExpressionEvaluation(float(np.trace(matrix)) / labels.size, matrix)


def extract_intensity_record(videos: Sequence[FrameSequence], model: ExpressionModel,
                             subject_id: str = "", diagnosis=None):
    """Score each of the four expression videos against every class text.

    Value ``4 * j + c`` (0-based) is video ``j`` against class ``c``.
    """
    from .features import IntensityRecord

    if len(videos) != NUM_CLASSES:
        raise InputError(f"need exactly {NUM_CLASSES} videos, got {len(videos)}")
    seen = [v.source_label for v in videos if v.source_label is not None]
    if len(set(seen)) != len(seen):
        raise InputError("duplicate expression labels among the videos")
    for j, v in enumerate(videos):
        if v.source_label is not None and int(v.source_label) != j:
            raise InputError(f"video {j} is labelled {v.source_label.key}; videos must follow canonical order")
    _, raw = batch_scores(model, videos)
    return IntensityRecord(raw.reshape(-1), subject_id, diagnosis)
