#!/usr/bin/env python3
"""Measure redundancy of synthetic convolution layers.

Three layers: one whose kernels are all noisy copies of a single
template (maximal redundancy), one fully random, and one half-and-half.
The redundancy at threshold t is the fraction of kernel pairs more
similar than t, so the duplicated layer scores ~1 and the random one
~0. The text histogram mirrors what `ckrm hist` renders as SVG.
"""

import numpy as np

from ckrm import ConvKernelSet, analyze_layer


def kset(name, weights):
    weights = np.asarray(weights, dtype=np.float64)
    return ConvKernelSet(name, *weights.shape, weights=weights)


rng = np.random.default_rng(3)
template = rng.normal(size=(1, 4, 3, 3))
layers = {
    "duplicated": np.repeat(template, 32, axis=0)
    + rng.normal(scale=1e-3, size=(32, 4, 3, 3)),
    "random": rng.normal(size=(32, 4, 3, 3)),
    "half-and-half": np.concatenate(
        [
            np.repeat(template, 16, axis=0) + rng.normal(scale=1e-3, size=(16, 4, 3, 3)),
            rng.normal(size=(16, 4, 3, 3)),
        ]
    ),
}

for name, weights in layers.items():
    result = analyze_layer(kset(name, weights), sample_size="all")
    lams = "  ".join(
        f"lambda({t:g}) = {v:.3f}" for t, v in zip(result.thresholds, result.lambdas)
    )
    print(f"{name:>14}: {lams}  ({result.sample.count} pairs)")
    # coarse text histogram: 10 buckets over [0, 1]
    coarse = [sum(result.histogram[i : i + 5]) for i in range(0, 50, 5)]
    peak = max(coarse)
    for bucket, count in enumerate(coarse):
        bar = "#" * round(30 * count / peak) if peak else ""
        print(f"                [{bucket/10:.1f}, {(bucket+1)/10:.1f}) {bar} {count}")
    print()

print("sampling instead of enumerating all pairs:")
big = kset("wide", rng.normal(size=(256, 4, 3, 3)))
exact = analyze_layer(big, sample_size="all")
fast = analyze_layer(big, sample_size=2000, seed=0)
print(f"  exhaustive lambda(0.6) = {exact.lambdas[1]:.4f} over {exact.sample.count} pairs")
print(
    f"  sampled    lambda(0.6) = {fast.lambdas[1]:.4f} over {fast.sample.count} pairs"
    f" (stderr {fast.stderr[1]:.4f})"
)
