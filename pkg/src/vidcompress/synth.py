"""Synthetic moving-shape videos with short class-defining events.

Classes come in pairs. Both members of a pair draw the same shape type and
resting color on the same textured background along the same trajectory;
they differ only inside a short event window, where the shape takes on a
class-specific color. Two illumination flicker frames per video act as large but
uninformative pixel changes.

A dataset directory holds ``manifest.json`` plus one frames tensor per split
(``<split>_frames.vct``, shape (N, T, 3, H, W)) in the tensor container.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .tensorio import decode, save_tensor

FORMAT_VERSION = 1
SPLITS = ("train", "test")
SHAPES = ("square", "plus", "bar", "diamond", "ring", "vbar")
EVENT_COLORS = (np.array([0.95, 0.1, 0.1]), np.array([0.1, 0.25, 0.95]))
# per-pair resting colors; visible in every frame, so the pair is easy and
# only the member within a pair depends on seeing the event
PAIR_COLORS = (
    np.array([0.9, 0.85, 0.2]),
    np.array([0.2, 0.8, 0.3]),
    np.array([0.9, 0.9, 0.9]),
    np.array([0.2, 0.85, 0.85]),
)
FLASH_GAIN = 0.3
# kept mild: with one video per class a busy backdrop is memorized instead
# of the shape
BACKGROUND_LEVEL = 0.175
SHAPE_SIZE = (12.0, 16.0)
BACKGROUND_TINT = 0.03
BLOB_AMPLITUDE = 0.05


class DatasetError(ValueError):
    pass


class SplitLeakError(RuntimeError):
    """A training path was handed held-out data."""


@dataclass(frozen=True)
class GeneratorConfig:
    classes: int = 8
    train_per_class: int = 100
    test_per_class: int = 50
    frames: int = 16
    height: int = 32
    width: int = 32
    event_width: int = 2
    noise_sigma: float = 0.01
    flashes: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.classes < 2 or self.classes % 2:
            raise DatasetError(f"classes must be a positive even number, got {self.classes}")
        if self.event_width < 1 or self.event_width > self.frames:
            raise DatasetError(f"event_width must lie in [1, frames], got {self.event_width}")
        if self.height % 4 or self.width % 4 or self.height < 8 or self.width < 8:
            raise DatasetError(f"height and width must be multiples of 4 and >= 8, got {self.height}x{self.width}")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise DatasetError("per-class counts must be positive")
        if self.flashes < 0 or self.flashes > self.frames - self.event_width:
            raise DatasetError(f"cannot fit {self.flashes} flicker frames outside the event window")
        if self.noise_sigma < 0:
            raise DatasetError("noise_sigma must be non-negative")


@dataclass
class VideoSample:
    frames: np.ndarray  # (T, 3, H, W) in [0, 1]
    label: int
    event_window: tuple[int, int]
    sample_id: int
    split: str = "train"


@dataclass
class SplitArrays:
    """All samples of one split, tagged with the split name."""

    split: str
    frames: np.ndarray  # (N, T, 3, H, W)
    labels: np.ndarray
    ids: np.ndarray
    windows: np.ndarray  # (N, 2) [start, stop)

    def __len__(self):
        return len(self.labels)

    def require_train(self, what: str = "training") -> "SplitArrays":
        if self.split != "train":
            raise SplitLeakError(f"{what} was given the {self.split!r} split")
        return self

    def subset(self, idx) -> "SplitArrays":
        idx = np.asarray(idx)
        return SplitArrays(self.split, self.frames[idx], self.labels[idx], self.ids[idx], self.windows[idx])


# ---------------------------------------------------------------- rendering

def _shape_mask(kind: str, cy: float, cx: float, size: float, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    dy, dx = yy - cy, xx - cx
    r = size / 2
    if kind == "square":
        m = (np.abs(dy) <= r) & (np.abs(dx) <= r)
    elif kind == "plus":
        m = ((np.abs(dy) <= r) & (np.abs(dx) <= r / 3)) | ((np.abs(dx) <= r) & (np.abs(dy) <= r / 3))
    elif kind == "bar":
        m = (np.abs(dy) <= r / 2.5) & (np.abs(dx) <= r * 1.3)
    elif kind == "diamond":
        m = np.abs(dy) + np.abs(dx) <= r * 1.2
    elif kind == "ring":
        d = np.sqrt(dy**2 + dx**2)
        m = (d <= r) & (d >= r * 0.5)
    else:  # vbar
        m = (np.abs(dx) <= r / 2.5) & (np.abs(dy) <= r * 1.3)
    return m.astype(np.float64)


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Dark backdrop with a faint per-video tint and a few soft blobs."""
    base = BACKGROUND_LEVEL + rng.uniform(-BACKGROUND_TINT, BACKGROUND_TINT, size=(3, 1, 1))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.broadcast_to(base, (3, h, w)).copy()
    for _ in range(3):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sig = rng.uniform(3, 8)
        col = rng.uniform(-BLOB_AMPLITUDE, BLOB_AMPLITUDE, size=(3, 1, 1))
        img += col * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig**2))
    return img


def render_pair(cfg: GeneratorConfig, pair: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, tuple[int, int]]:
    """Render the two videos of a class pair from a single random stream.

    Every random draw happens once and is shared, so the two videos are
    bitwise identical outside the event window.
    """
    t_len, h, w, we = cfg.frames, cfg.height, cfg.width, cfg.event_width
    kind = SHAPES[pair % len(SHAPES)]
    rest = PAIR_COLORS[pair % len(PAIR_COLORS)]
    bg = _background(rng, h, w)
    size = rng.uniform(*SHAPE_SIZE) * min(h, w) / 32.0  # sizes are quoted for 32x32 frames
    pos = np.array([rng.uniform(size, h - size), rng.uniform(size, w - size)])
    speed = rng.uniform(1.0, 2.5)
    angle = rng.uniform(0, 2 * np.pi)
    vel = speed * np.array([np.sin(angle), np.cos(angle)])
    start = int(rng.integers(0, t_len - we + 1))
    outside = [t for t in range(t_len) if not start <= t < start + we]
    flash_t = set(rng.choice(outside, size=cfg.flashes, replace=False).tolist()) if cfg.flashes else set()
    noise = rng.normal(0.0, cfg.noise_sigma, size=(t_len, 3, h, w))

    masks = []
    lo, hi = size / 2, np.array([h, w]) - size / 2
    for _ in range(t_len):
        masks.append(_shape_mask(kind, pos[0], pos[1], size, h, w))
        pos = pos + vel
        for d in range(2):
            if pos[d] < lo:
                pos[d], vel[d] = 2 * lo - pos[d], -vel[d]
            elif pos[d] > hi[d]:
                pos[d], vel[d] = 2 * hi[d] - pos[d], -vel[d]

    videos = []
    for member in range(2):
        frames = np.empty((t_len, 3, h, w))
        for t in range(t_len):
            color = EVENT_COLORS[member] if start <= t < start + we else rest
            m = masks[t][None]
            f = bg * (1 - m) + color[:, None, None] * m
            if t in flash_t:
                f = f + FLASH_GAIN
            frames[t] = f + noise[t]
        videos.append(np.clip(frames, 0.0, 1.0).astype(np.float32))
    return videos[0], videos[1], (start, start + we)


def _pair_rng(cfg: GeneratorConfig, split: str, pair: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, SPLITS.index(split), pair, index]))


def generate_split(cfg: GeneratorConfig, split: str) -> SplitArrays:
    cfg.validate()
    per_class = cfg.train_per_class if split == "train" else cfg.test_per_class
    n = cfg.classes * per_class
    frames = np.empty((n, cfg.frames, 3, cfg.height, cfg.width), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    windows = np.empty((n, 2), dtype=np.int64)
    i = 0
    for pair in range(cfg.classes // 2):
        for j in range(per_class):
            a, b, win = render_pair(cfg, pair, _pair_rng(cfg, split, pair, j))
            for member, video in enumerate((a, b)):
                frames[i], labels[i], windows[i] = video, 2 * pair + member, win
                i += 1
    offset = 0 if split == "train" else cfg.classes * cfg.train_per_class
    return SplitArrays(split, frames, labels, np.arange(offset, offset + n), windows)


def draw_sources(train: SplitArrays, per_class, rng: np.random.Generator) -> np.ndarray:
    """Pick ``per_class`` training videos of every class, matched within pairs.

    Both classes of a pair take the videos at the same positions of their
    (id-sorted) pools, so a small subset keeps the paired structure of the
    corpus: partners differ only inside the event window. Each class still
    sees a uniform draw without replacement. Budget beyond the smaller
    partner's count is drawn independently.
    """
    train.require_train("source sampling")
    classes = int(train.labels.max()) + 1
    if isinstance(per_class, (int, np.integer)):
        per_class = [int(per_class)] * classes
    pools = [np.flatnonzero(train.labels == c) for c in range(classes)]
    for c in range(classes):
        if per_class[c] > len(pools[c]):
            raise ValueError(f"budget {per_class[c]} exceeds the {len(pools[c])} training videos of class {c}")
    picks = []
    for a in range(0, classes, 2):
        b = a + 1
        if b >= classes:
            picks.extend(np.sort(rng.choice(pools[a], size=per_class[a], replace=False)))
            continue
        shared = min(per_class[a], per_class[b], len(pools[a]), len(pools[b]))
        pos = rng.choice(min(len(pools[a]), len(pools[b])), size=shared, replace=False)
        for c in (a, b):
            rest = np.setdiff1d(np.arange(len(pools[c])), pos)
            extra = rng.choice(rest, size=per_class[c] - shared, replace=False)
            picks.extend(np.sort(pools[c][np.concatenate([pos, extra]).astype(np.int64)]))
    return np.asarray(picks, dtype=np.int64)


# ---------------------------------------------------------------- files

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def generate_dataset(cfg: GeneratorConfig, out_dir) -> dict:
    """Write both splits and ``manifest.json`` to ``out_dir``; returns the manifest."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files, samples, counts = [], {}, {}
    for split in SPLITS:
        arr = generate_split(cfg, split)
        name = f"{split}_frames.vct"
        save_tensor(out / name, arr.frames)
        files.append({"name": name, "sha256": _sha256(out / name), "split": split})
        samples[split] = [[int(i), int(y), int(w[0]), int(w[1])] for i, y, w in zip(arr.ids, arr.labels, arr.windows)]
        counts[split] = {str(c): int(np.sum(arr.labels == c)) for c in range(cfg.classes)}
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": asdict(cfg),
        "classes": cfg.classes,
        "counts": counts,
        "frames": cfg.frames,
        "height": cfg.height,
        "width": cfg.width,
        "event_width": cfg.event_width,
        "seed": cfg.seed,
        "files": files,
        "samples": samples,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    manifest["root"] = str(out)
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"{path}: unsupported manifest version {manifest.get('format_version')}")
    manifest["root"] = str(path.parent)
    return manifest


def load_split(manifest: dict, split: str) -> SplitArrays:
    if split not in SPLITS:
        raise DatasetError(f"unknown split {split!r}; expected one of {SPLITS}")
    entry = next(f for f in manifest["files"] if f["split"] == split)
    path = Path(manifest["root"]) / entry["name"]
    buf = path.read_bytes()
    if hashlib.sha256(buf).hexdigest() != entry["sha256"]:
        raise DatasetError(f"{path}: digest mismatch against manifest")
    frames = decode(buf, str(path))
    rows = np.asarray(manifest["samples"][split], dtype=np.int64).reshape(-1, 4)
    if len(rows) != len(frames):
        raise DatasetError(f"{path}: {len(frames)} videos but manifest lists {len(rows)}")
    return SplitArrays(split, frames, rows[:, 1].copy(), rows[:, 0].copy(), rows[:, 2:4].copy())


def split_loader(manifest: dict, split: str, shuffle_seed: int | None = None) -> Iterator[VideoSample]:
    arr = load_split(manifest, split)
    order = np.arange(len(arr)) if shuffle_seed is None else np.random.default_rng(shuffle_seed).permutation(len(arr))
    for i in order:
        yield VideoSample(arr.frames[i], int(arr.labels[i]), (int(arr.windows[i, 0]), int(arr.windows[i, 1])),
                          int(arr.ids[i]), split)
