"""Neveu genealogy: block-count law at n=30 and the n^{e^-t} scaling of the block count."""
import math

import numpy as np

from csbp import coalescent as C

mu = C.ReproductionMeasure.neveu()
rng = np.random.default_rng(2)
n, t = 30, 1.0
law = C.block_count_law(mu, n, t)
sim = np.bincount(C.simulate_block_counts(mu, n, t, 20000, rng), minlength=n + 1)[1:] / 20000
print("blocks  exact    simulated")
for k in range(1, 11):
    print(f"{k:6d}  {law[k - 1]:.4f}   {sim[k - 1]:.4f}")
a = math.exp(-t)
print(f"\nscaled count #C/n^{a:.3f}: limit mean 1/Gamma(1+e^-t) = {1 / math.gamma(1 + a):.4f}")
for m in (500, 2000, 8000):
    c = C.simulate_block_counts(mu, m, t, 20000, rng) / m ** a
    print(f"n={m:5d}  mean {c.mean():.4f}  sd {c.std():.4f}  median {np.median(c):.4f}")
