"""End to end on a small corpus: generate, pretrain a codec, distill, evaluate.

Uses a reduced dataset (12 training videos per class) so it finishes in
under a minute on one core. The default-scale experiment is
``python3 -m vidcompress reproduce``.

    python3 demos/tiny_pipeline.py
"""
import numpy as np

from vidcompress.codec import pretrain_codec
from vidcompress.distill import DistillConfig
from vidcompress.evaluate import EvalConfig
from vidcompress.experiment import TestViews, run_efficacy_seed
from vidcompress.synth import GeneratorConfig, generate_split

gen = GeneratorConfig(train_per_class=12, test_per_class=10)
train, test = generate_split(gen, "train"), generate_split(gen, "test")
print(f"{len(train)} train / {len(test)} test videos, {train.frames.shape[1]} frames each")

flat = train.frames.reshape(-1, 3, 32, 32)
codec, mse = pretrain_codec(flat, 15, np.random.default_rng(0), batch_size=16)
codec.freeze()
print(f"codec reconstruction MSE {mse:.4f}, digest {codec.frozen_digest[:12]}")

views = TestViews.build(test, codec)
out = run_efficacy_seed(train, views, codec, DistillConfig(iterations=100), EvalConfig(epochs=60), seed=0)
for method, accs in out.accuracies.items():
    print(f"{method:15s} {np.mean(accs):.3f} ± {np.std(accs, ddof=1):.3f}")

ds = out.dataset
print(f"\ndistilled set: {len(ds)} records of {ds.latents.shape[1]} latent frames "
      f"({ds.latents[0].size} floats each vs {train.frames[0].size} for a raw video)")
print("kept frame indices per record:")
for label, idx, src in zip(ds.labels, ds.indices, ds.source_ids):
    window = train.windows[np.searchsorted(train.ids, src)]
    print(f"  class {label}: {idx.tolist()}  event window {window.tolist()}")
