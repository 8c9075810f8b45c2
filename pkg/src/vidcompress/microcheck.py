"""Finite-difference check of the whole Stage-2 loss on a micro instance.

Two classes, one video each, T=4 frames of 8x8 pixels, K=2 frozen Gumbel
draws. Everything runs in float64 so central differences are meaningful.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .classifiers import ConvNet3
from .codec import Codec
from .distill import stage2_loss
from .gradcheck import GradCheckReport, grad_check
from .gumbel import gumbel_from_uniform
from .scorer import FrameScorer


def micro_instance(seed: int = 0, frames: int = 4, k: int = 2, size: int = 8, classes: int = 2):
    """(latents, labels, codec, scorer, classifier, noise) in float64."""
    rng = np.random.default_rng(seed)
    codec = Codec(rng).to(np.float64).freeze()
    scorer = FrameScorer(rng).to(np.float64)
    classifier = ConvNet3(rng, 3 * k, classes).to(np.float64)
    with T.precision(np.float64):
        latents = [T.parameter(rng.normal(0.0, 1.0, (frames, 4, size // 4, size // 4))) for _ in range(classes)]
    labels = np.arange(classes)
    noise = gumbel_from_uniform(rng.random((classes, k, frames)))
    return latents, labels, codec, scorer, classifier, noise


def stage2_grad_check(seed: int = 0, max_entries: int = 24, h: float = 1e-3,
                      tol: float = 1e-3) -> dict[str, GradCheckReport]:
    """Reports for the latents, the scorer and the classifier."""
    latents, labels, codec, scorer, classifier, noise = micro_instance(seed)
    rng = np.random.default_rng(seed + 1)
    with T.precision(np.float64):
        def loss():
            return stage2_loss(latents, labels, codec, scorer, classifier, noise, tau=1.0)

        groups = {"latents": latents, "scorer": scorer.parameters(), "classifier": classifier.parameters()}
        return {name: grad_check(loss, params, h=h, tol=tol, max_entries=max_entries, rng=rng,
                                 skip_kinks=True)
                for name, params in groups.items()}
