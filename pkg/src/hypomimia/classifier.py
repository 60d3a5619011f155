"""Stacked LSTM/GRU classifier over the four-step feature sequence (HC vs PD)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import numerics as nx
from .errors import InputError, NumericError
from .features import Diagnosis, IntensityRecord, SequenceMode, assemble_sequence
from .layers import Linear, Module
from .numerics import Adam, Parameter, SeededRng, Tensor

log = logging.getLogger(__name__)

CLASS_ORDER = (Diagnosis.HC, Diagnosis.PD)


@dataclass(frozen=True)
class RnnConfig:
    cell: str = "lstm"
    input_dim: int = 12
    hidden_dim: int = 32
    num_layers: int = 2
    residual: bool = True
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.cell not in ("lstm", "gru"):
            raise InputError(f"cell must be 'lstm' or 'gru', got {self.cell!r}")
        if self.hidden_dim <= 0 or self.input_dim <= 0 or self.num_layers < 1:
            raise InputError("hidden_dim, input_dim and num_layers must be positive")
        if self.residual and self.num_layers < 2:
            raise InputError("a residual stack needs at least 2 layers")
        if not 0.0 <= self.dropout < 1.0:
            raise InputError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass(frozen=True)
class ClassifierTrainConfig:
    epochs: int = 150
    batch_size: int = 16
    lr: float = 3e-3
    seed: int = 0
    standardize: bool = True
    stop_at_accuracy: float | None = None


@dataclass(frozen=True)
class DiagnosisOutput:
    logits: np.ndarray  # (HC, PD)
    probability_pd: float

    @property
    def probability_hc(self) -> float:
        return 1.0 - self.probability_pd

    @property
    def predicted(self) -> Diagnosis:
        return CLASS_ORDER[int(np.argmax(self.logits))]


class LSTMCell(Module):
    def __init__(self, d_in: int, hidden: int, rng: SeededRng):
        self.w = Parameter(rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, 4 * hidden)))
        self.u = Parameter(rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, 4 * hidden)))
        self.b = Parameter(np.zeros(4 * hidden))
        self._h = hidden

    def run(self, x: Tensor) -> list[Tensor]:
        """x: (B, T, d_in) -> list of T hidden states (B, hidden)."""
        b, t, _ = x.shape
        h_dim = self._h
        proj = nx.matmul(x, self.w) + self.b
        h = nx.Tensor(np.zeros((b, h_dim)))
        c = nx.Tensor(np.zeros((b, h_dim)))
        out = []
        for step in range(t):
            z = proj[:, step] + nx.matmul(h, self.u)
            i = nx.sigmoid(z[:, :h_dim])
            f = nx.sigmoid(z[:, h_dim:2 * h_dim])
            g = nx.tanh(z[:, 2 * h_dim:3 * h_dim])
            o = nx.sigmoid(z[:, 3 * h_dim:])
            c = f * c + i * g
            h = o * nx.tanh(c)
            out.append(h)
        return out


class GRUCell(Module):
    def __init__(self, d_in: int, hidden: int, rng: SeededRng):
        self.w = Parameter(rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, 3 * hidden)))
        self.u = Parameter(rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, 3 * hidden)))
        self.bw = Parameter(np.zeros(3 * hidden))
        self.bu = Parameter(np.zeros(3 * hidden))
        self._h = hidden

    def run(self, x: Tensor) -> list[Tensor]:
        b, t, _ = x.shape
        h_dim = self._h
        proj = nx.matmul(x, self.w) + self.bw
        h = nx.Tensor(np.zeros((b, h_dim)))
        out = []
        for step in range(t):
            xp = proj[:, step]
            hp = nx.matmul(h, self.u) + self.bu
            r = nx.sigmoid(xp[:, :h_dim] + hp[:, :h_dim])
            z = nx.sigmoid(xp[:, h_dim:2 * h_dim] + hp[:, h_dim:2 * h_dim])
            n = nx.tanh(xp[:, 2 * h_dim:] + r * hp[:, 2 * h_dim:])
            h = (1.0 - z) * n + z * h
            out.append(h)
        return out


class RecurrentClassifier(Module):
    """Stacked recurrent layers with optional per-timestep identity skips, plus a 2-logit head.

    With ``residual`` on, the input is first projected to ``hidden_dim`` and
    every layer k >= 2 emits ``cell_k(h_{k-1}) + h_{k-1}`` at each timestep.
    Inputs are standardised with per-feature statistics fitted on training data.
    """

    def __init__(self, config: RnnConfig | None = None):
        cfg = config or RnnConfig()
        rng = SeededRng(cfg.seed)
        cell_cls = LSTMCell if cfg.cell == "lstm" else GRUCell
        self.in_proj = Linear(cfg.input_dim, cfg.hidden_dim, rng.child("in_proj")) if cfg.residual else None
        first_dim = cfg.hidden_dim if cfg.residual else cfg.input_dim
        self.layers = [
            cell_cls(first_dim if k == 0 else cfg.hidden_dim, cfg.hidden_dim, rng.child("layer", k))
            for k in range(cfg.num_layers)
        ]
        self.head = Linear(cfg.hidden_dim, 2, rng.child("head"))
        self.feature_mean = np.zeros(cfg.input_dim)
        self.feature_scale = np.ones(cfg.input_dim)
        self._cfg = cfg
        self._dropout_rng = rng.child("dropout")
        self.assign_names()

    @property
    def config(self) -> RnnConfig:
        return self._cfg

    def fit_standardizer(self, x: np.ndarray) -> None:
        flat = x.reshape(-1, x.shape[-1])
        self.feature_mean = flat.mean(axis=0)
        scale = flat.std(axis=0)
        self.feature_scale = np.where(scale > 1e-12, scale, 1.0)

    def hidden_sequences(self, x: np.ndarray) -> list[list[Tensor]]:
        """Per-layer hidden states for a (B, T, input_dim) batch."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[-1] != self._cfg.input_dim:
            raise InputError(f"expected (B, T, {self._cfg.input_dim}) input, got shape {x.shape}")
        inp = nx.Tensor((x - self.feature_mean) / self.feature_scale)
        if self.in_proj is not None:
            inp = self.in_proj(inp)
        layers_out = []
        for k, cell in enumerate(self.layers):
            hs = cell.run(inp)
            if self._cfg.residual and k >= 1:
                hs = [h + inp[:, t] for t, h in enumerate(hs)]
            layers_out.append(hs)
            inp = nx.stack(hs, axis=1)
            inp = nx.dropout(inp, self._cfg.dropout, self._dropout_rng, self.training)
        return layers_out

    def __call__(self, x: np.ndarray) -> Tensor:
        """(B, T, input_dim) -> (B, 2) logits in (HC, PD) order."""
        top = self.hidden_sequences(x)[-1][-1]
        return self.head(top)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = super().state_dict()
        state["feature_mean"] = self.feature_mean.copy()
        state["feature_scale"] = self.feature_scale.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        state = dict(state)
        self.feature_mean = np.asarray(state.pop("feature_mean"), dtype=np.float64)
        self.feature_scale = np.asarray(state.pop("feature_scale"), dtype=np.float64)
        super().load_state_dict(state)


def _output(logits_row: np.ndarray) -> DiagnosisOutput:
    probs = nx.softmax(logits_row).data
    return DiagnosisOutput(np.array(logits_row), float(probs[1]))


def rnn_forward(sequence, model: RecurrentClassifier) -> DiagnosisOutput:
    steps = sequence.timesteps if hasattr(sequence, "timesteps") else np.asarray(sequence)
    if steps.ndim != 2 or steps.shape[1] != model.config.input_dim:
        raise InputError(f"sequence of shape {steps.shape} does not match input_dim {model.config.input_dim}")
    return _output(model(steps[None]).data[0])


def predict_batch(model: RecurrentClassifier, x: np.ndarray) -> np.ndarray:
    """(B, T, D) -> (B, 2) logits."""
    return model(x).data


def predict(record: IntensityRecord, mode: str, model: RecurrentClassifier) -> DiagnosisOutput:
    if SequenceMode.dim(mode) != model.config.input_dim:
        raise InputError(f"mode {mode!r} gives {SequenceMode.dim(mode)} features; model expects {model.config.input_dim}")
    return rnn_forward(assemble_sequence(record, mode), model)


def train_classifier(
    x: np.ndarray,
    y: Sequence[int],
    config: RnnConfig | None = None,
    train_cfg: ClassifierTrainConfig | None = None,
) -> tuple[RecurrentClassifier, dict]:
    """Fit on (N, T, D) sequences with labels 0 = HC, 1 = PD.

    Returns the model and a history with per-epoch mean loss and running training
    accuracy. With ``stop_at_accuracy`` set, training ends after the first epoch
    whose model classifies at least that share of ``x`` correctly.
    """
    train_cfg = train_cfg or ClassifierTrainConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(set(y.tolist())) < 2:
        raise InputError("training data must contain both HC and PD examples")
    config = config or RnnConfig(input_dim=x.shape[-1])
    model = RecurrentClassifier(config)
    if train_cfg.standardize:
        model.fit_standardizer(x)
    opt = Adam([(model.parameters(), train_cfg.lr)])
    rng = SeededRng(train_cfg.seed).child("shuffle")
    history = {"loss": [], "accuracy": []}
    n = len(y)
    model.training = True
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n)
        total, correct = 0.0, 0
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            opt.zero_grad()
            try:
                logits = model(x[idx])
                loss = nx.cross_entropy(logits, y[idx])
            except NumericError as exc:
                raise NumericError(f"non-finite value at epoch {epoch}: {exc}") from exc
            loss.backward()
            opt.step()
            total += float(loss.data) * len(idx)
            correct += int((logits.data.argmax(axis=1) == y[idx]).sum())
        history["loss"].append(total / n)
        history["accuracy"].append(correct / n)
        if train_cfg.stop_at_accuracy is not None:
            model.training = False
            fit = float(np.mean(predict_batch(model, x).argmax(axis=1) == y))
            model.training = True
            if fit >= train_cfg.stop_at_accuracy:
                break
    model.training = False
    return model, history
