"""Frames within a video are far more alike than different videos of a class.

Prints mean adjacent-frame correlation inside videos against correlation
between the mean frames of different videos, class by class.

    python3 demos/redundancy.py
"""
import numpy as np

from vidcompress.evaluate import redundancy_matrices
from vidcompress.synth import GeneratorConfig, generate_split

train = generate_split(GeneratorConfig(train_per_class=20, test_per_class=1), "train")
print("class  intra(adjacent)  inter")
for c in range(8):
    r = redundancy_matrices(train.frames[train.labels == c])
    print(f"{c:5d}  {r.mean_adjacent_intra:15.3f}  {r.mean_inter:5.3f}")
m = redundancy_matrices(train.frames[train.labels == 0]).intra[0]
print("\nvideo 0 of class 0, correlation with frame 0:")
print(np.array2string(m[0], precision=2))
