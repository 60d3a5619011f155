"""Finite-difference checks for every trainable component at toy dimensions."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import numerics as nx
from .classifier import RecurrentClassifier, RnnConfig
from .expression_model import ExpressionModel, ExpressionModelConfig
from .numerics import Parameter, gradient_check

TOLERANCE = 1e-4
EPSILON = 1e-5


def tiny_expression_config(**overrides) -> ExpressionModelConfig:
    base = dict(frames=3, image_size=4, patch_size=2, embed_dim=8, vit_depth=1, mhsa_heads=2,
                temporal_depth=1, text_depth=1, max_text_len=20, n_ctx=2, tau=0.5, learnable_tau=True)
    base.update(overrides)
    return ExpressionModelConfig(**base)


def _projection_loss(out: nx.Tensor, weights: np.ndarray) -> nx.Tensor:
    """A scalar that depends on every output coordinate."""
    return nx.tsum(out * weights)


def _cases() -> dict[str, Callable[[], float]]:
    rng = np.random.default_rng(1234)
    cfg = tiny_expression_config()
    model = ExpressionModel(cfg)
    d = cfg.embed_dim
    images = rng.random((2, cfg.image_size, cfg.image_size, cfg.channels))
    videos = rng.random((2, cfg.frames, cfg.image_size, cfg.image_size, cfg.channels))
    targets = np.array([1, 3])

    def patch_embedding():
        patches = model.visual.patchify(images)
        w = rng.normal(size=(2, cfg.num_patches, d))
        return gradient_check(lambda: _projection_loss(model.visual.patch_embed(patches), w),
                              model.visual.patch_embed.parameters(), EPSILON)

    def vit_block():
        block = model.visual.vit[0]
        x = nx.Tensor(rng.normal(size=(2, cfg.num_patches + 1, d)))
        w = rng.normal(size=x.shape)
        return gradient_check(lambda: _projection_loss(block(x), w), block.parameters(), EPSILON)

    def frame_encoder():
        w = rng.normal(size=(2, cfg.num_patches + 1, d))
        params = [p for n, p in model.visual.named_parameters() if not n.startswith("gate")]
        return gradient_check(lambda: _projection_loss(model.visual.encode(images), w), params, EPSILON)

    def mhsa_gate():
        a = nx.Tensor(rng.normal(size=(2, cfg.num_patches + 1, d)))
        w = rng.normal(size=(2, d))
        params = model.visual.gate.parameters() + model.visual.gate_ln.parameters()
        return gradient_check(lambda: _projection_loss(model.visual.gate_tokens(a), w), params, EPSILON)

    def temporal_encoder():
        f = nx.Tensor(rng.normal(size=(2, cfg.frames, d)))
        w = rng.normal(size=(2, d))
        return gradient_check(lambda: _projection_loss(model.temporal(f), w), model.temporal.parameters(), EPSILON)

    def text_encoder():
        w = rng.normal(size=(4, d))
        return gradient_check(lambda: _projection_loss(model.text_features(), w), model.text.parameters(), EPSILON)

    def intensity_head():
        F = Parameter(rng.normal(size=(3, d)))
        G = Parameter(rng.normal(size=(4, d)))
        log_tau = Parameter(np.array(math.log(0.5)))
        labels = np.array([0, 2, 3])

        def loss():
            cos = nx.matmul(nx.l2_normalize(F), nx.transpose(nx.l2_normalize(G)))
            logits = cos * nx.exp(-log_tau)
            return nx.cross_entropy(logits, labels) + 0.1 * nx.mean(nx.exp(logits))

        return gradient_check(loss, [F, G, log_tau], EPSILON)

    def end_to_end():
        return gradient_check(lambda: nx.cross_entropy(model.class_logits(videos), targets),
                              model.parameters(), EPSILON)

    cases = {
        "patch_embedding": patch_embedding,
        "vit_block": vit_block,
        "frame_encoder": frame_encoder,
        "mhsa_gate": mhsa_gate,
        "temporal_encoder": temporal_encoder,
        "text_encoder_with_prompts": text_encoder,
        "intensity_cross_entropy_head": intensity_head,
        "expression_model_end_to_end": end_to_end,
    }

    for cell in ("lstm", "gru"):
        for residual in (False, True):
            def rnn_case(cell=cell, residual=residual):
                clf = RecurrentClassifier(RnnConfig(cell=cell, input_dim=5, hidden_dim=6, residual=residual, seed=7))
                x = rng.normal(size=(3, 4, 5))
                y = np.array([0, 1, 1])
                return gradient_check(lambda: nx.cross_entropy(clf(x), y), clf.parameters(), EPSILON)

            cases[f"{cell}{'_residual' if residual else ''}"] = rnn_case
    return cases


def run_suite(names: list[str] | None = None) -> dict[str, float]:
    """Maximum relative error per component."""
    cases = _cases()
    selected = names or list(cases)
    return {name: float(cases[name]()) for name in selected}


def case_names() -> list[str]:
    return list(_cases())
