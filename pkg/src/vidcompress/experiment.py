"""Experiment protocol: distilled vs baseline comparisons on a generated corpus.

Every method is scored with the same from-scratch recipe and repeat seeds;
only the training set and the test-time frame selection differ.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .codec import Codec
from .distill import DistillConfig, DistilledDataset, distill
from .evaluate import (EvalConfig, gather, prepare_inputs, random_coreset, roundtrip, run_repeats,
                       select_indices, uniform_indices)
from .scorer import FrameScorer
from .synth import SplitArrays


@dataclass
class TestViews:
    """Test videos in the two pixel domains the methods consume."""

    __test__ = False  # not a pytest class

    split: SplitArrays
    decoded: np.ndarray  # codec round trip of every test video

    @classmethod
    def build(cls, test: SplitArrays, codec: Codec) -> "TestViews":
        return cls(test, roundtrip(test.frames, codec))

    def select(self, rule: str, k: int, scorer: FrameScorer | None = None, decoded: bool = True) -> np.ndarray:
        frames = self.decoded if decoded else self.split.frames
        return gather(frames, select_indices(frames, rule, k, scorer))


def scorer_from_dataset(ds: DistilledDataset) -> FrameScorer:
    scorer = FrameScorer(np.random.default_rng(0))
    scorer.load_flat(ds.scorer)
    return scorer


def evaluate_distilled(ds: DistilledDataset, codec: Codec, views: TestViews, cfg: EvalConfig,
                       classes: int) -> list[float]:
    """Train on decoded distilled frames; test on scorer top-K of round-tripped test videos."""
    k = ds.latents.shape[1]
    test_in = views.select("scorer", k, scorer_from_dataset(ds))
    return run_repeats(ds.decoded_frames(codec), ds.labels, test_in, views.split.labels, cfg, classes)


def evaluate_random_uniform(train: SplitArrays, per_class, k: int, views: TestViews, cfg: EvalConfig,
                            classes: int, seed: int) -> list[float]:
    """Random real videos with uniform frames, in raw pixels, drawn exactly as distillation draws its sources."""
    core = random_coreset(train, per_class, _source_rng(seed))
    train_in = prepare_inputs(core, "uniform", k)
    test_in = views.select("uniform", k, decoded=False)
    return run_repeats(train_in, core.labels, test_in, views.split.labels, cfg, classes)


def evaluate_selector(sources: SplitArrays, rule: str, k: int, codec: Codec, views: TestViews, cfg: EvalConfig,
                      classes: int) -> list[float]:
    """A fixed selection rule on round-tripped source videos (decoupled comparison)."""
    train_in = prepare_inputs(sources, rule, k, codec=codec)
    test_in = views.select(rule, k)
    return run_repeats(train_in, sources.labels, test_in, views.split.labels, cfg, classes)


def full_data_reference(train: SplitArrays, test: SplitArrays, k: int, cfg: EvalConfig, classes: int) -> list[float]:
    """Every real training video with uniform K-frame selection."""
    idx = np.tile(uniform_indices(train.frames.shape[1], k), (len(train), 1))
    tidx = np.tile(uniform_indices(test.frames.shape[1], k), (len(test), 1))
    return run_repeats(gather(train.frames, idx), train.labels, gather(test.frames, tidx), test.labels, cfg, classes)


def _source_rng(seed: int) -> np.random.Generator:
    # the same child stream distill() uses for Stage 1
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[0])


@dataclass
class SeedOutcome:
    seed: int
    accuracies: dict  # method -> list of repeat accuracies
    dataset: DistilledDataset | None = None


def run_efficacy_seed(train: SplitArrays, views: TestViews, codec: Codec, dcfg: DistillConfig, ecfg: EvalConfig,
                      seed: int, per_class: list[int] | None = None) -> SeedOutcome:
    """Full pipeline vs random coreset with uniform frames, for one seed."""
    dcfg = replace(dcfg, seed=seed, synthesize=True)
    classes = int(train.labels.max()) + 1
    ecfg = replace(ecfg, seed=seed)
    res = distill(train, codec, dcfg, per_class)
    budget = per_class or dcfg.budget_per_class
    acc = {
        "videocompressa": evaluate_distilled(res.dataset, codec, views, ecfg, classes),
        "random-uniform": evaluate_random_uniform(train, budget, dcfg.k, views, ecfg, classes, seed),
    }
    return SeedOutcome(seed, acc, res.dataset)


def run_selector_seed(train: SplitArrays, views: TestViews, codec: Codec, dcfg: DistillConfig, ecfg: EvalConfig,
                      seed: int) -> SeedOutcome:
    """Learned Gumbel selection vs fixed rules with latents frozen at their encoded values."""
    dcfg = replace(dcfg, seed=seed, synthesize=False)
    classes = int(train.labels.max()) + 1
    ecfg = replace(ecfg, seed=seed)
    res = distill(train, codec, dcfg)
    sources = train.subset(np.searchsorted(train.ids, res.dataset.source_ids))
    acc = {"gumbel": evaluate_distilled(res.dataset, codec, views, ecfg, classes)}
    for rule in ("uniform", "pixel-diff"):
        acc[rule] = evaluate_selector(sources, rule, dcfg.k, codec, views, ecfg, classes)
    return SeedOutcome(seed, acc, res.dataset)


def mean_by_method(outcomes: list[SeedOutcome]) -> dict:
    methods = outcomes[0].accuracies.keys()
    return {m: float(np.mean([np.mean(o.accuracies[m]) for o in outcomes])) for m in methods}
