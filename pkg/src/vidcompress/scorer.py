"""Per-frame importance scorer: two strided 3x3 convs, global pool, linear head."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Module, uniform_fan_in, zeros
from .tensor import ShapeError, Tensor


class FrameScorer(Module):
    names = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b")

    def __init__(self, rng: np.random.Generator):
        self.conv1_w = uniform_fan_in(rng, (8, 3, 3, 3), 3 * 3 * 3)
        self.conv1_b = zeros(8)
        self.conv2_w = uniform_fan_in(rng, (16, 8, 3, 3), 8 * 3 * 3)
        self.conv2_b = zeros(16)
        self.fc_w = uniform_fan_in(rng, (16, 1), 16)
        self.fc_b = zeros(1)

    def __call__(self, frames: Tensor) -> Tensor:
        return score_frames(frames, self)


def init_scorer(rng: np.random.Generator) -> FrameScorer:
    return FrameScorer(rng)


def score_frames(frames: Tensor, params: FrameScorer) -> Tensor:
    """Logits for each frame of ``frames``.

    Accepts (T, 3, H, W) and returns (T,), or (B, T, 3, H, W) and returns
    (B, T). Frames are scored independently with shared weights.
    """
    if frames.ndim not in (4, 5) or frames.shape[-3] != 3:
        raise ShapeError(f"score_frames: expected (..., 3, H, W) frames, got {frames.shape}")
    h, w = frames.shape[-2:]
    if h % 4 or w % 4:
        raise ShapeError(f"score_frames: H and W must be divisible by 4, got {h}x{w}")
    lead = frames.shape[:-3]
    x = T.reshape(frames, (-1, 3, h, w)) if frames.ndim == 5 else frames
    x = T.relu(T.conv2d(x, params.conv1_w, params.conv1_b, stride=2, padding=1))
    x = T.relu(T.conv2d(x, params.conv2_w, params.conv2_b, stride=2, padding=1))
    x = T.mean(x, axis=(2, 3))
    q = T.linear(x, params.fc_w, params.fc_b)
    return T.reshape(q, lead)
