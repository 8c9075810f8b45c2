"""Gumbel noise turns scorer logits into frame samples.

Adding Gumbel noise and taking the argmax samples frames exactly from
softmax(q). Lowering the temperature makes the soft weights approach that
hard sample, and the straight-through gradient gap shrinks with it.

    python3 demos/gumbel_selection.py
"""
import numpy as np

from vidcompress.gumbel import gap_vs_tau, gumbel_max_frequency, softmax_np

rng = np.random.default_rng(0)
q = rng.uniform(-2, 2, 8)
freq = gumbel_max_frequency(q, 100_000, rng)
print("frame  softmax  empirical")
for t, (p, f) in enumerate(zip(softmax_np(q), freq)):
    print(f"{t:5d}  {p:7.4f}  {f:9.4f}")
print(f"max deviation {np.max(np.abs(freq - softmax_np(q))):.4f}\n")

print("mean |g_soft - g_straight_through| over 100 shared draws")
for tau, gap in gap_vs_tau((1.0, 0.5, 0.25), instances=20).items():
    print(f"  tau={tau:<5} {gap:.4f}")
