"""Video classifiers over K channel-stacked frames (input N x 3K x H x W)."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Module, uniform_fan_in, zeros
from .tensor import ShapeError, Tensor

ARCHITECTURES = ("convnet3", "mlp")

# fixed input standardization; without it 100 plain-SGD steps barely move
# a classifier trained on a handful of videos
PIXEL_MEAN = 0.25
PIXEL_STD = 0.2


def standardize(x: Tensor) -> Tensor:
    return T.mul(T.sub(x, PIXEL_MEAN), 1.0 / PIXEL_STD)


class ConvNet3(Module):
    """Three strided 3x3 conv + ReLU blocks (32, 64, 128 channels), global pool, linear."""

    names = ("c1_w", "c1_b", "c2_w", "c2_b", "c3_w", "c3_b", "fc_w", "fc_b")

    def __init__(self, rng: np.random.Generator, in_channels: int, classes: int):
        self.in_channels, self.classes = in_channels, classes
        widths = (in_channels, 32, 64, 128)
        for i in range(3):
            setattr(self, f"c{i + 1}_w", uniform_fan_in(rng, (widths[i + 1], widths[i], 3, 3), widths[i] * 9))
            setattr(self, f"c{i + 1}_b", zeros(widths[i + 1]))
        self.fc_w = uniform_fan_in(rng, (128, classes), 128)
        self.fc_b = zeros(classes)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"convnet3: expected (N, {self.in_channels}, H, W), got {x.shape}")
        x = standardize(x)
        for i in (1, 2, 3):
            x = T.relu(T.conv2d(x, getattr(self, f"c{i}_w"), getattr(self, f"c{i}_b"), stride=2, padding=1))
        return T.linear(T.mean(x, axis=(2, 3)), self.fc_w, self.fc_b)


class MLP(Module):
    names = ("h_w", "h_b", "o_w", "o_b")

    def __init__(self, rng: np.random.Generator, in_features: int, classes: int, hidden: int = 256):
        self.in_features, self.classes = in_features, classes
        self.h_w = uniform_fan_in(rng, (in_features, hidden), in_features)
        self.h_b = zeros(hidden)
        self.o_w = uniform_fan_in(rng, (hidden, classes), hidden)
        self.o_b = zeros(classes)

    def __call__(self, x: Tensor) -> Tensor:
        x = T.reshape(x, (x.shape[0], -1))
        if x.shape[1] != self.in_features:
            raise ShapeError(f"mlp: expected {self.in_features} input features, got {x.shape[1]}")
        x = standardize(x)
        return T.linear(T.relu(T.linear(x, self.h_w, self.h_b)), self.o_w, self.o_b)


def build_classifier(arch: str, rng: np.random.Generator, k: int, classes: int, height: int, width: int) -> Module:
    if arch == "convnet3":
        return ConvNet3(rng, 3 * k, classes)
    if arch == "mlp":
        return MLP(rng, 3 * k * height * width, classes)
    raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")


def stack_frames(frames: Tensor) -> Tensor:
    """(N, K, 3, H, W) -> (N, 3K, H, W)."""
    n, k, c, h, w = frames.shape
    return T.reshape(frames, (n, k * c, h, w))
