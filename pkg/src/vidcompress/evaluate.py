"""From-scratch retraining, frame-selection baselines and redundancy analysis."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .classifiers import build_classifier, stack_frames
from .codec import Codec
from .gumbel import top_k
from .nn import Module
from .optim import SGD
from .scorer import FrameScorer, score_frames
from .synth import SplitArrays, draw_sources
from .tensor import Tensor

SELECTION_RULES = ("scorer", "uniform", "pixel-diff", "first-k")


@dataclass(frozen=True)
class EvalConfig:
    arch: str = "convnet3"
    epochs: int = 100
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 256
    repeats: int = 3
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


# ---------------------------------------------------------------- frame selection

def uniform_indices(t_len: int, k: int) -> np.ndarray:
    """idx_i = floor(i * T / K) for i = 0..K-1."""
    if not 1 <= k <= t_len:
        raise ValueError(f"uniform_indices: need 1 <= K <= T, got K={k}, T={t_len}")
    return (np.arange(k) * t_len) // k


def frame_differences(frames: np.ndarray) -> np.ndarray:
    """L1 change to the previous frame; the first frame scores +inf."""
    frames = np.asarray(frames, dtype=np.float64)
    d = np.empty(len(frames))
    d[0] = np.inf
    d[1:] = np.abs(np.diff(frames.reshape(len(frames), -1), axis=0)).sum(axis=1)
    return d


def pixel_diff_indices(frames: np.ndarray, k: int) -> np.ndarray:
    """Top-K frames by L1 change to their predecessor, earliest first on ties."""
    if not 1 <= k <= len(frames):
        raise ValueError(f"pixel_diff_indices: need 1 <= K <= T, got K={k}, T={len(frames)}")
    return top_k(frame_differences(frames), k)


def select_indices(frames: np.ndarray, rule: str, k: int, scorer: FrameScorer | None = None) -> np.ndarray:
    """Per-video frame indices (N, K) for videos ``frames`` (N, T, 3, H, W)."""
    n, t_len = frames.shape[:2]
    if rule == "uniform":
        return np.tile(uniform_indices(t_len, k), (n, 1))
    if rule == "first-k":
        if k > t_len:
            raise ValueError(f"first-k: K={k} exceeds T={t_len}")
        return np.tile(np.arange(k), (n, 1))
    if rule == "pixel-diff":
        return np.stack([pixel_diff_indices(v, k) for v in frames])
    if rule == "scorer":
        if scorer is None:
            raise ValueError("scorer rule needs a trained scorer")
        q = batched_scores(frames, scorer)
        return np.stack([top_k(row, k) for row in q])
    raise ValueError(f"unknown selection rule {rule!r}; expected one of {SELECTION_RULES}")


def batched_scores(frames: np.ndarray, scorer: FrameScorer, chunk: int = 64) -> np.ndarray:
    out = [score_frames(Tensor(frames[i:i + chunk]), scorer).data for i in range(0, len(frames), chunk)]
    return np.concatenate(out).astype(np.float64)


def gather(frames: np.ndarray, indices: np.ndarray) -> np.ndarray:
    return np.take_along_axis(frames, indices[:, :, None, None, None], axis=1)


def roundtrip(frames: np.ndarray, codec: Codec, chunk: int = 64) -> np.ndarray:
    """Pass (N, T, 3, H, W) videos through encode -> decode."""
    n, t_len = frames.shape[:2]
    flat = frames.reshape((n * t_len,) + frames.shape[2:])
    out = np.concatenate([codec.reconstruct(flat[i:i + chunk * t_len]) for i in range(0, len(flat), chunk * t_len)])
    return out.reshape(frames.shape)


def prepare_inputs(videos: SplitArrays, rule: str, k: int, scorer: FrameScorer | None = None,
                   codec: Codec | None = None) -> np.ndarray:
    """Select K frames per video; with ``codec`` the videos are round-tripped first."""
    frames = videos.frames if codec is None else roundtrip(videos.frames, codec)
    return gather(frames, select_indices(frames, rule, k, scorer))


# ---------------------------------------------------------------- training / testing

def train_from_scratch(frames: np.ndarray, labels: np.ndarray, cfg: EvalConfig, rng: np.random.Generator,
                       classes: int) -> Module:
    """Train a fresh classifier on (N, K, 3, H, W) inputs with SGD + momentum."""
    cfg.validate()
    frames = np.asarray(frames, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if len(frames) == 0:
        raise ValueError("train_from_scratch: empty dataset")
    n, k, _, h, w = frames.shape
    model = build_classifier(cfg.arch, rng, k, classes, h, w)
    opt = SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    bs = min(cfg.batch_size, n)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for i in range(0, n, bs):
            idx = order[i:i + bs]
            opt.zero_grad()
            loss = T.cross_entropy(model(stack_frames(Tensor(frames[idx]))), labels[idx])
            loss.backward()
            opt.step()
    return model


def predict(model: Module, frames: np.ndarray, chunk: int = 128) -> np.ndarray:
    out = []
    for i in range(0, len(frames), chunk):
        logits = model(stack_frames(Tensor(np.asarray(frames[i:i + chunk], dtype=np.float32))))
        out.append(np.argmax(logits.data, axis=1))
    return np.concatenate(out)


def evaluate_accuracy(model: Module, frames: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    classes = getattr(model, "classes", None)
    if classes is not None and labels.max() >= classes:
        raise ValueError(f"labels reach class {labels.max()} but the model has {classes} outputs")
    return float(np.mean(predict(model, frames) == labels))


def run_repeats(train_frames, train_labels, test_frames, test_labels, cfg: EvalConfig, classes: int) -> list[float]:
    """Accuracy of ``cfg.repeats`` independently seeded from-scratch runs."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.repeats)
    accs = []
    for s in seeds:
        model = train_from_scratch(train_frames, train_labels, cfg, np.random.default_rng(s), classes)
        accs.append(evaluate_accuracy(model, test_frames, test_labels))
    return accs


# ---------------------------------------------------------------- baselines

def random_coreset(train: SplitArrays, per_class: Sequence[int] | int, rng: np.random.Generator) -> SplitArrays:
    """``per_class`` random real training videos of every class (no optimization).

    Uses the same pair-matched draw as latent initialization, so with equal
    seeds the coreset is exactly the set of videos distillation starts from.
    """
    return train.subset(draw_sources(train, per_class, rng))


def baseline_random_coreset(train: SplitArrays, per_class, k: int, rng: np.random.Generator,
                            rule: str = "uniform") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(frames (M, K, 3, H, W), labels, source ids) for the random-coreset baseline."""
    core = random_coreset(train, per_class, rng)
    return prepare_inputs(core, rule, k), core.labels, core.ids


# ---------------------------------------------------------------- redundancy

@dataclass
class Redundancy:
    intra: list[np.ndarray]  # one (T, T) matrix per video
    inter: np.ndarray  # (n, n)
    flagged: int = 0  # zero-variance entries set to 0

    @property
    def mean_adjacent_intra(self) -> float:
        return float(np.mean([np.mean(np.diag(m, 1)) for m in self.intra]))

    @property
    def mean_inter(self) -> float:
        n = len(self.inter)
        return float(self.inter[~np.eye(n, dtype=bool)].mean())


def correlation_matrix(rows: np.ndarray) -> tuple[np.ndarray, int]:
    """Pearson correlation between rows; rows with zero variance correlate 0 (diagonal 1)."""
    x = np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)
    x = x - x.mean(axis=1, keepdims=True)
    norm = np.sqrt((x * x).sum(axis=1))
    flat = norm < 1e-12
    safe = np.where(flat, 1.0, norm)
    c = (x @ x.T) / np.outer(safe, safe)
    c[flat, :] = 0.0
    c[:, flat] = 0.0
    c = np.clip(c, -1.0, 1.0)
    np.fill_diagonal(c, 1.0)
    return c, int(flat.sum())


def redundancy_matrices(videos: np.ndarray) -> Redundancy:
    """Intra-video frame correlations and inter-video mean-frame correlations.

    ``videos`` holds n >= 2 videos (n, T, 3, H, W), normally from one class.
    """
    videos = np.asarray(videos)
    if len(videos) < 2:
        raise ValueError("redundancy_matrices: need at least two videos")
    intra, flagged = [], 0
    for v in videos:
        m, f = correlation_matrix(v)
        intra.append(m)
        flagged += f
    inter, f = correlation_matrix(videos.mean(axis=1))
    return Redundancy(intra, inter, flagged + f)


def matrix_csv(m: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in m:
        w.writerow([f"{v:.6f}" for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------- reporting

@dataclass
class EvalReport:
    method: str
    accuracies: list[float]
    ratio: float | None = None
    config: dict = field(default_factory=dict)
    reference: float | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        # sample std; a single run reports 0
        return float(np.std(self.accuracies, ddof=1)) if len(self.accuracies) > 1 else 0.0

    @property
    def gap(self) -> float | None:
        return None if self.reference is None else self.reference - self.mean

    def summary(self) -> dict:
        out = {
            "method": self.method,
            "accuracies": [round(a, 6) for a in self.accuracies],
            "mean": round(self.mean, 6),
            "std": round(self.std, 6),
            "ratio": self.ratio,
            "config": self.config,
        }
        if self.reference is not None:
            out["full_data_reference"] = round(self.reference, 6)
            out["gap_to_full_data"] = round(self.gap, 6)
        return out


def results_csv(reports: Sequence[EvalReport], seeds: Sequence[int] | None = None) -> str:
    """Long format: one row per run with columns method, ratio, seed, accuracy."""
    lines = ["method,ratio,seed,accuracy"]
    for r in reports:
        for i, a in enumerate(r.accuracies):
            seed = seeds[i] if seeds is not None and i < len(seeds) else i
            ratio = "" if r.ratio is None else f"{r.ratio:.6g}"
            lines.append(f"{r.method},{ratio},{seed},{a:.6f}")
    return "\n".join(lines) + "\n"


def write_report(reports: Sequence[EvalReport], out_dir, seeds: Sequence[int] | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(reports, seeds), encoding="utf-8")
    summary = {r.method: r.summary() for r in reports}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def report_from_csv(text: str) -> list[EvalReport]:
    rows = list(csv.DictReader(io.StringIO(text)))
    order, runs, ratios = [], {}, {}
    for row in rows:
        m = row["method"]
        if m not in runs:
            order.append(m)
            runs[m] = []
            ratios[m] = float(row["ratio"]) if row["ratio"] else None
        runs[m].append(float(row["accuracy"]))
    return [EvalReport(m, runs[m], ratios[m]) for m in order]
