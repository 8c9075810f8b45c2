"""Latent keyframe distillation.

Three stages:

1. encode a per-class budget of real training videos into latent sequences;
2. jointly optimize the latents, the frame scorer and a classifier through
   decode -> score -> Gumbel-Softmax -> soft aggregation -> classify;
3. keep, for every video, the latents of the scorer's top-K frames.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .classifiers import build_classifier, stack_frames
from .codec import Codec
from .gumbel import gumbel_from_uniform, gumbel_softmax, soft_aggregate, top_k
from .nn import Module
from .optim import Adam
from .scorer import FrameScorer, score_frames
from .synth import SplitArrays, draw_sources
from .tensor import NonFiniteError, Tensor
from .tensorio import decode, save_tensor


@dataclass(frozen=True)
class DistillConfig:
    budget_per_class: int = 1
    k: int = 4
    tau: float = 1.0
    latent_lr: float = 1e-2
    scorer_lr: float = 1e-3
    classifier_lr: float = 1e-3
    inner_steps: int = 4
    batch_size: int = 64
    iterations: int = 300
    arch: str = "convnet3"
    synthesize: bool = True
    seed: int = 0

    def validate(self, frames: int | None = None) -> None:
        if self.budget_per_class < 1:
            raise ValueError("budget_per_class must be >= 1")
        if self.k < 1 or (frames is not None and self.k > frames):
            raise ValueError(f"k={self.k} must lie in [1, {frames}]")
        if min(self.latent_lr, self.scorer_lr, self.classifier_lr) <= 0:
            raise ValueError("learning rates must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.inner_steps < 1 or self.batch_size < 1 or self.iterations < 0:
            raise ValueError("inner_steps and batch_size must be >= 1, iterations >= 0")


@dataclass
class LatentSeq:
    z: Tensor  # (T, 4, h, w)
    label: int
    source_id: int


@dataclass
class TrainingLog:
    loss: list[float] = field(default_factory=list)
    logit_entropy: list[float] = field(default_factory=list)
    selection_hist: list[list[int]] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)

    def append(self, loss, entropy, hist, wall) -> None:
        self.loss.append(float(loss))
        self.logit_entropy.append(float(entropy))
        self.selection_hist.append([int(h) for h in hist])
        self.wall_time.append(float(wall))

    def to_csv(self) -> str:
        lines = ["iteration,loss,logit_entropy,selection_hist"]
        for i, (l, e, h) in enumerate(zip(self.loss, self.logit_entropy, self.selection_hist)):
            lines.append(f"{i},{l:.6f},{e:.6f},{';'.join(map(str, h))}")
        return "\n".join(lines) + "\n"


class DistillationDiverged(RuntimeError):
    """Stage 2 hit a non-finite loss; ``snapshot`` holds the last good state."""

    def __init__(self, iteration: int, snapshot: dict):
        super().__init__(f"non-finite loss at iteration {iteration}; restored last good state")
        self.iteration = iteration
        self.snapshot = snapshot


@dataclass
class DistilledDataset:
    labels: np.ndarray  # (R,)
    latents: np.ndarray  # (R, K, 4, h, w)
    indices: np.ndarray  # (R, K)
    source_ids: np.ndarray  # (R,)
    codec_digest: str
    scorer: np.ndarray  # flat scorer weights
    config: dict

    def __len__(self):
        return len(self.labels)

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_tensor(out / "distilled_latents.vct", self.latents)
        save_tensor(out / "scorer.vct", self.scorer)
        meta = {
            "codec_digest": self.codec_digest,
            "config": self.config,
            "indices": self.indices.tolist(),
            "labels": self.labels.tolist(),
            "source_ids": self.source_ids.tolist(),
        }
        (out / "distilled.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, out_dir) -> "DistilledDataset":
        out = Path(out_dir)
        meta = json.loads((out / "distilled.json").read_text(encoding="utf-8"))
        latents = decode((out / "distilled_latents.vct").read_bytes(), str(out / "distilled_latents.vct"))
        scorer = decode((out / "scorer.vct").read_bytes(), str(out / "scorer.vct"))
        return cls(
            labels=np.asarray(meta["labels"], dtype=np.int64),
            latents=latents,
            indices=np.asarray(meta["indices"], dtype=np.int64),
            source_ids=np.asarray(meta["source_ids"], dtype=np.int64),
            codec_digest=meta["codec_digest"],
            scorer=scorer,
            config=meta["config"],
        )

    def decoded_frames(self, codec: Codec) -> np.ndarray:
        """Decode to (R, K, 3, H, W) pixel frames."""
        if codec.frozen_digest != self.codec_digest:
            raise ValueError("distilled dataset was produced with a different codec")
        r, k = self.latents.shape[:2]
        flat = self.latents.reshape((r * k,) + self.latents.shape[2:])
        frames = codec.decode(Tensor(flat)).data
        return frames.reshape((r, k) + frames.shape[1:])


# ---------------------------------------------------------------- budget

def budget_from_ratio(ratio: float, n_total: int, classes: int) -> list[int]:
    """Per-class video counts for a retained fraction of a dataset of ``n_total`` videos."""
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    total = max(classes, int(round(ratio * n_total)))
    base, extra = divmod(total, classes)
    return [base + (1 if c < extra else 0) for c in range(classes)]


# ---------------------------------------------------------------- stage 1

def init_latents(train: SplitArrays, cfg: DistillConfig, codec: Codec, rng: np.random.Generator,
                 per_class: list[int] | None = None) -> list[LatentSeq]:
    """Encode ``budget_per_class`` pair-matched training videos of every class."""
    train.require_train("init_latents")
    codec.require_frozen()
    classes = int(train.labels.max()) + 1
    per_class = per_class or [cfg.budget_per_class] * classes
    seqs = []
    for i in draw_sources(train, per_class, rng):
        z = codec.encode(Tensor(train.frames[i])).data
        seqs.append(LatentSeq(T.parameter(z.copy(), dtype=np.float32), int(train.labels[i]), int(train.ids[i])))
    return seqs


# ---------------------------------------------------------------- stage 2

def stage2_loss(latents, labels, codec: Codec, scorer: FrameScorer, classifier: Module,
                noise: np.ndarray, tau: float = 1.0) -> Tensor:
    """Mean cross-entropy of the classifier on Gumbel-aggregated decoded frames.

    ``latents`` is a list of B (T, 4, h, w) tensors and ``noise`` has shape
    (B, K, T).
    """
    z = T.stack(latents)
    b, t_len = z.shape[:2]
    frames = codec.decode(T.reshape(z, (b * t_len,) + z.shape[2:]))
    frames = T.reshape(frames, (b, t_len) + frames.shape[1:])
    q = score_frames(frames, scorer)
    weights = gumbel_softmax(q, Tensor(noise, dtype=z.data.dtype), tau)
    picked = soft_aggregate(frames, weights)
    return T.cross_entropy(classifier(stack_frames(picked)), labels)


def _entropy(q: np.ndarray) -> float:
    p = np.exp(q - q.max(axis=-1, keepdims=True))
    p /= p.sum(axis=-1, keepdims=True)
    return float(np.mean(-(p * np.log(np.clip(p, 1e-30, None))).sum(axis=-1)))


def _snapshot(latents, scorer, classifier) -> dict:
    return {
        "latents": [s.z.data.copy() for s in latents],
        "scorer": scorer.flat(),
        "classifier": classifier.flat(),
    }


def _restore(snap, latents, scorer, classifier) -> None:
    for s, z in zip(latents, snap["latents"]):
        s.z.data[...] = z
    scorer.load_flat(snap["scorer"])
    classifier.load_flat(snap["classifier"])


def joint_optimize(latents: list[LatentSeq], scorer: FrameScorer, classifier: Module, codec: Codec,
                   cfg: DistillConfig, rng: np.random.Generator) -> TrainingLog:
    """Stage 2, updating ``latents``, ``scorer`` and ``classifier`` in place.

    Each outer iteration draws a batch of latent sequences and runs
    ``inner_steps`` forward/backward passes with fresh Gumbel noise; every
    pass takes one Adam step on the batch latents, and the first pass also
    steps the scorer and the classifier. With ``synthesize`` off the latents
    are left at their initial values and one pass is run per iteration.
    """
    codec.require_frozen()
    log = TrainingLog()
    if cfg.iterations == 0 or not latents:
        return log
    t_len = latents[0].z.shape[0]
    cfg.validate(t_len)
    opt_scorer = Adam(scorer.parameters(), lr=cfg.scorer_lr)
    opt_cls = Adam(classifier.parameters(), lr=cfg.classifier_lr)
    opt_z = [Adam([s.z], lr=cfg.latent_lr) for s in latents]
    n = len(latents)
    inner = cfg.inner_steps if cfg.synthesize else 1
    start = time.perf_counter()
    for it in range(cfg.iterations):
        snap = _snapshot(latents, scorer, classifier)
        batch = np.sort(rng.choice(n, size=min(cfg.batch_size, n), replace=False))
        zs = [latents[i].z for i in batch]
        labels = np.array([latents[i].label for i in batch])
        try:
            for j in range(inner):
                scorer.zero_grad()
                classifier.zero_grad()
                T.zero_grad(zs)
                noise = gumbel_from_uniform(rng.random((len(batch), cfg.k, t_len)))
                loss = stage2_loss(zs, labels, codec, scorer, classifier, noise, cfg.tau)
                loss.backward()
                if j == 0:
                    first_loss = loss.item()
                    opt_scorer.step()
                    opt_cls.step()
                if cfg.synthesize:
                    for i in batch:
                        opt_z[i].step()
        except NonFiniteError:
            _restore(snap, latents, scorer, classifier)
            raise DistillationDiverged(it, snap) from None
        q = _batch_logits(zs, codec, scorer)
        hist = np.bincount(np.argmax(q, axis=1), minlength=t_len)
        log.append(first_loss, _entropy(q), hist, time.perf_counter() - start)
    scorer.zero_grad()
    classifier.zero_grad()
    T.zero_grad([s.z for s in latents])
    return log


def _batch_logits(zs, codec: Codec, scorer: FrameScorer) -> np.ndarray:
    z = np.stack([s.data for s in zs])
    b, t_len = z.shape[:2]
    frames = codec.decode(Tensor(z.reshape((b * t_len,) + z.shape[2:])))
    return score_frames(frames, scorer).data.reshape(b, t_len)


# ---------------------------------------------------------------- stage 3

def extract_topk(latents: list[LatentSeq], scorer: FrameScorer, codec: Codec, k: int,
                 config: dict | None = None) -> DistilledDataset:
    """Keep each sequence's top-K latents (by scorer logit) in temporal order."""
    codec.require_frozen()
    labels, picked, indices, ids = [], [], [], []
    for s in latents:
        q = score_frames(codec.decode(Tensor(s.z.data)), scorer).data
        idx = top_k(q, k)
        labels.append(s.label)
        picked.append(s.z.data[idx])
        indices.append(idx)
        ids.append(s.source_id)
    return DistilledDataset(
        labels=np.asarray(labels, dtype=np.int64),
        latents=np.stack(picked).astype(np.float32),
        indices=np.stack(indices).astype(np.int64),
        source_ids=np.asarray(ids, dtype=np.int64),
        codec_digest=codec.frozen_digest,
        scorer=scorer.flat(),
        config=dict(config or {}),
    )


# ---------------------------------------------------------------- end to end

@dataclass
class DistillResult:
    dataset: DistilledDataset
    scorer: FrameScorer
    classifier: Module
    latents: list[LatentSeq]
    log: TrainingLog


def distill(train: SplitArrays, codec: Codec, cfg: DistillConfig, per_class: list[int] | None = None) -> DistillResult:
    """Run all three stages with every random draw derived from ``cfg.seed``."""
    train.require_train("distill")
    codec.require_frozen()
    t_len, _, h, w = train.frames.shape[1:]
    cfg.validate(t_len)
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    latents = init_latents(train, cfg, codec, np.random.default_rng(seeds[0]), per_class)
    scorer = FrameScorer(np.random.default_rng(seeds[1]))
    classes = int(train.labels.max()) + 1
    classifier = build_classifier(cfg.arch, np.random.default_rng(seeds[2]), cfg.k, classes, h, w)
    log = joint_optimize(latents, scorer, classifier, codec, cfg, np.random.default_rng(seeds[3]))
    dataset = extract_topk(latents, scorer, codec, cfg.k, config=asdict(cfg))
    return DistillResult(dataset, scorer, classifier, latents, log)
