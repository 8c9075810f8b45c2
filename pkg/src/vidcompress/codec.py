"""Frozen convolutional autoencoder mapping frames to 4-channel latent grids.

The encoder halves the resolution twice; the decoder mirrors it with
transposed convolutions and ends in a sigmoid so decoded pixels stay in
[0, 1]. After :meth:`Codec.freeze` the weights no longer take gradients, but
gradients still flow through :meth:`Codec.decode` into the latents.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import tensor as T
from .nn import Module, uniform_fan_in, zeros
from .optim import Adam
from .tensor import NonFiniteError, ShapeError, Tensor
from .tensorio import load_tensor, save_tensor

LATENT_CHANNELS = 4


class FrozenCodecError(RuntimeError):
    pass


class Codec(Module):
    names = ("enc1_w", "enc1_b", "enc2_w", "enc2_b", "dec1_w", "dec1_b", "dec2_w", "dec2_b")

    def __init__(self, rng: np.random.Generator):
        self.enc1_w = uniform_fan_in(rng, (8, 3, 3, 3), 27)
        self.enc1_b = zeros(8)
        self.enc2_w = uniform_fan_in(rng, (LATENT_CHANNELS, 8, 3, 3), 72)
        self.enc2_b = zeros(LATENT_CHANNELS)
        self.dec1_w = uniform_fan_in(rng, (LATENT_CHANNELS, 8, 4, 4), LATENT_CHANNELS * 16)
        self.dec1_b = zeros(8)
        self.dec2_w = uniform_fan_in(rng, (8, 3, 4, 4), 8 * 16)
        self.dec2_b = zeros(3)
        self.frozen = False
        self.train_mse: float | None = None
        self.seed: int | None = None
        self._digest: str | None = None

    # -------------------------------------------------------------- state
    def freeze(self) -> "Codec":
        if not self.frozen:
            for p in self.parameters():
                if not np.all(np.isfinite(p.data)):
                    raise NonFiniteError("freeze: codec parameters are not finite")
                p.requires_grad = False
                p.grad = None
                p.data.flags.writeable = False
            self.frozen = True
            self._digest = self.digest()
        return self

    @property
    def frozen_digest(self) -> str:
        if not self.frozen:
            raise FrozenCodecError("codec is not frozen yet")
        return self._digest

    def trainable_parameters(self) -> list[Tensor]:
        if self.frozen:
            raise FrozenCodecError("codec is frozen; its parameters cannot be updated")
        return self.parameters()

    def load_flat(self, vec) -> None:
        if self.frozen:
            raise FrozenCodecError("codec is frozen; its parameters cannot be overwritten")
        super().load_flat(vec)

    def require_frozen(self) -> None:
        if not self.frozen:
            raise FrozenCodecError("distillation requires a frozen codec; call freeze() first")

    def to(self, dtype):
        if self.frozen:
            for p in self.parameters():
                p.data = p.data.astype(dtype)
                p.data.flags.writeable = False
            return self
        return super().to(dtype)

    # -------------------------------------------------------------- maps
    def encode(self, frames: Tensor) -> Tensor:
        """(N, 3, H, W) or (3, H, W) frames to latents of a quarter the spatial size."""
        single = frames.ndim == 3
        x = T.reshape(frames, (1,) + frames.shape) if single else frames
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"encode: expected (N, 3, H, W) frames, got {frames.shape}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ShapeError(f"encode: H and W must be divisible by 4, got {x.shape[2]}x{x.shape[3]}")
        x = T.relu(T.conv2d(x, self.enc1_w, self.enc1_b, stride=2, padding=1))
        z = T.conv2d(x, self.enc2_w, self.enc2_b, stride=2, padding=1)
        return T.reshape(z, z.shape[1:]) if single else z

    def decode(self, z: Tensor) -> Tensor:
        single = z.ndim == 3
        x = T.reshape(z, (1,) + z.shape) if single else z
        if x.ndim != 4 or x.shape[1] != LATENT_CHANNELS:
            raise ShapeError(f"decode: expected (N, {LATENT_CHANNELS}, h, w) latents, got {z.shape}")
        x = T.relu(T.conv_transpose2d(x, self.dec1_w, self.dec1_b, stride=2, padding=1))
        f = T.sigmoid(T.conv_transpose2d(x, self.dec2_w, self.dec2_b, stride=2, padding=1))
        return T.reshape(f, f.shape[1:]) if single else f

    def reconstruct(self, frames: np.ndarray, batch: int = 512) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float32)
        out = [self.decode(self.encode(Tensor(frames[i:i + batch]))).data for i in range(0, len(frames), batch)]
        return np.concatenate(out)

    def reconstruction_mse(self, frames: np.ndarray) -> float:
        frames = np.asarray(frames, dtype=np.float32)
        return float(np.mean((self.reconstruct(frames).astype(np.float64) - frames) ** 2))

    # -------------------------------------------------------------- files
    def save(self, path) -> None:
        """Write ``<path>.vct`` (flat weights) and ``<path>.json`` (sidecar)."""
        path = Path(path)
        save_tensor(path.with_suffix(".vct"), self.flat())
        meta = {
            "digest": self.digest(),
            "frozen": self.frozen,
            "seed": self.seed,
            "train_mse": self.train_mse,
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Codec":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        codec = cls(np.random.default_rng(0))
        codec.load_flat(load_tensor(path.with_suffix(".vct")).data)
        if codec.digest() != meta["digest"]:
            raise ValueError(f"{path}: codec digest mismatch")
        codec.train_mse = meta.get("train_mse")
        codec.seed = meta.get("seed")
        if meta.get("frozen"):
            codec.freeze()
        return codec


def pretrain_codec(
    frames: np.ndarray,
    epochs: int,
    rng: np.random.Generator,
    batch_size: int = 64,
    lr: float = 3e-3,
    seed: int | None = None,
) -> tuple[Codec, float]:
    """Fit the autoencoder to ``frames`` (N, 3, H, W) by Adam on mean squared error.

    Returns the (unfrozen) codec and its reconstruction MSE on ``frames``
    after training.
    """
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 4 or len(frames) == 0:
        raise ValueError(f"pretrain_codec: need a non-empty (N, 3, H, W) corpus, got {frames.shape}")
    codec = Codec(rng)
    codec.seed = seed
    opt = Adam(codec.trainable_parameters(), lr=lr)
    n = len(frames)
    for _ in range(epochs):
        order = rng.permutation(n)
        for i in range(0, n, batch_size):
            x = Tensor(frames[order[i:i + batch_size]])
            opt.zero_grad()
            diff = T.sub(codec.decode(codec.encode(x)), x)
            loss = T.mean(T.square(diff))
            loss.backward()
            if not np.isfinite(loss.item()):
                raise NonFiniteError("pretrain_codec: reconstruction loss diverged")
            opt.step()
    mse = codec.reconstruction_mse(frames)
    if not np.isfinite(mse):
        raise NonFiniteError("pretrain_codec: reconstruction loss diverged")
    codec.train_mse = mse
    return codec, mse


def freeze(codec: Codec) -> Codec:
    return codec.freeze()
