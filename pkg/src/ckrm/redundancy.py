"""Pairwise kernel similarity, the per-layer pair set, and the
redundancy measure.

Two kernels i and j of a layer are compared slice by slice at matching
input-channel index; their similarity is the mean of the weighted patch
measure over the f1 slices and lies in [0, 1]. The redundancy of a
layer at threshold t is the fraction of kernel pairs whose similarity
strictly exceeds t; for wide layers it is estimated from a seeded
uniform sample of pairs instead of all f2*(f2-1)/2 of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ssim import SimilarityParams, psi
from .tensor_io import ConvKernelSet

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7)
PRIMARY_THRESHOLD = 0.6
DEFAULT_SAMPLE_SIZE = 5000
HISTOGRAM_BINS = 50

_CHUNK = 1024  # pairs per batched evaluation


# -- pair indexing ---------------------------------------------------------
#
# Pairs (i, j), 0 <= i < j < n, are ranked lexicographically:
# rank(i, j) = i*n - i*(i+1)/2 + (j - i - 1). Sampling draws ranks, not
# pairs, so nothing of size n*(n-1)/2 is ever materialized.


def pair_count(n: int) -> int:
    return n * (n - 1) // 2


def pair_rank(i: int, j: int, n: int) -> int:
    if not 0 <= i < j < n:
        raise ValueError(f"need 0 <= i < j < n, got i={i}, j={j}, n={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def pair_unrank(rank: int, n: int) -> tuple[int, int]:
    if not 0 <= rank < pair_count(n):
        raise ValueError(f"rank {rank} out of range for n={n}")
    # largest i with i*n - i*(i+1)/2 <= rank, via the quadratic root
    disc = (2 * n - 1) ** 2 - 8 * rank
    i = (2 * n - 1 - math.isqrt(disc)) // 2
    while i * n - i * (i + 1) // 2 > rank:
        i -= 1
    while (i + 1) * n - (i + 1) * (i + 2) // 2 <= rank:
        i += 1
    j = rank - (i * n - i * (i + 1) // 2) + i + 1
    return i, j


def sample_pair_ranks(population: int, k: int, seed: int) -> np.ndarray:
    """k distinct ranks from [0, population), uniform without replacement.

    Partial Fisher-Yates over a virtual arange(population): only the
    touched entries are stored, so memory is O(k).
    """
    if not 0 < k < population:
        raise ValueError(f"need 0 < k < population, got k={k}, population={population}")
    rng = np.random.Generator(np.random.Philox(key=seed))
    state: dict[int, int] = {}
    out = np.empty(k, dtype=np.int64)
    for idx in range(k):
        swap = int(rng.integers(idx, population))
        out[idx] = state.get(swap, swap)
        state[swap] = state.get(idx, idx)
    return out


# -- similarity evaluation -------------------------------------------------


def kernel_similarity(
    kernels: ConvKernelSet, i: int, j: int, params: SimilarityParams | None = None
) -> float:
    """Similarity of kernels i and j: mean weighted patch measure over
    their f1 input-channel slices."""
    p = params if params is not None else SimilarityParams()
    if i == j:
        raise ValueError("kernel indices must differ")
    for idx in (i, j):
        if not 0 <= idx < kernels.f2:
            raise ValueError(f"kernel index {idx} out of range for f2={kernels.f2}")
    values = [psi(kernels.slice(i, k), kernels.slice(j, k), p) for k in range(kernels.f1)]
    return float(np.mean(values))


def _pair_similarities(
    kernels: ConvKernelSet, ii: np.ndarray, jj: np.ndarray, params: SimilarityParams
) -> np.ndarray:
    """Vectorized kernel similarity for index arrays ii, jj."""
    f2, f1 = kernels.f2, kernels.f1
    n = kernels.k1 * kernels.k2
    flat = kernels.weights.reshape(f2, f1, n)
    mu = flat.mean(axis=2)
    centered = flat - mu[:, :, None]
    var = np.einsum("fkn,fkn->fk", centered, centered) / n

    eps = params.epsilon
    out = np.empty(len(ii), dtype=np.float64)
    for start in range(0, len(ii), _CHUNK):
        ic = ii[start : start + _CHUNK]
        jc = jj[start : start + _CHUNK]
        mu_i, mu_j = mu[ic], mu[jc]
        var_i, var_j = var[ic], var[jc]
        cov = np.einsum("pkn,pkn->pk", centered[ic], centered[jc]) / n
        sg_prod = np.sqrt(var_i * var_j)
        lum = (2 * mu_i * mu_j + eps) / (mu_i**2 + mu_j**2 + eps)
        con = (2 * sg_prod + eps) / (var_i + var_j + eps)
        struct = (cov + eps) / (sg_prod + eps)
        slice_psi = (
            np.abs(lum) ** params.alpha
            * con**params.beta
            * np.abs(struct) ** params.gamma
        )
        out[start : start + _CHUNK] = slice_psi.mean(axis=1)
    # mathematically in [0, 1]; shave float spill so thresholds at 1.0 hold
    return np.clip(out, 0.0, 1.0)


# -- sampling and the measure ----------------------------------------------


@dataclass(frozen=True)
class KernelPairSimilarity:
    i: int
    j: int
    value: float


@dataclass(frozen=True)
class OmegaSample:
    """Pairwise similarities of one layer: all of them, or a seeded
    uniform subsample."""

    layer_id: str
    i_indices: np.ndarray
    j_indices: np.ndarray
    values: np.ndarray
    population_size: int
    exhaustive: bool
    seed: int | None
    params: SimilarityParams

    def __len__(self) -> int:
        return len(self.values)

    @property
    def pairs(self) -> list[KernelPairSimilarity]:
        return [
            KernelPairSimilarity(int(i), int(j), float(v))
            for i, j, v in zip(self.i_indices, self.j_indices, self.values)
        ]


@dataclass(frozen=True)
class SampleInfo:
    count: int
    exhaustive: bool
    seed: int | None


@dataclass(frozen=True)
class CkrmResult:
    """Redundancy of one layer: lambda per threshold plus the sampled
    similarity histogram (50 uniform bins over [0, 1])."""

    layer_id: str
    thresholds: tuple[float, ...]
    lambdas: tuple[float, ...]
    histogram: tuple[int, ...]
    sample: SampleInfo
    stderr: tuple[float, ...] | None  # binomial, only when sampled

    def lambda_at(self, t: float) -> float:
        for threshold, value in zip(self.thresholds, self.lambdas):
            if threshold == t:
                return value
        raise KeyError(f"threshold {t} not present in {self.thresholds}")


@dataclass(frozen=True)
class MultiRunCkrm:
    """Per-checkpoint results for one layer plus their mean lambda."""

    layer_id: str
    per_run: tuple[CkrmResult, ...]
    mean_lambda: tuple[float, ...]

    @property
    def thresholds(self) -> tuple[float, ...]:
        return self.per_run[0].thresholds

    def mean_lambda_at(self, t: float) -> float:
        for threshold, value in zip(self.thresholds, self.mean_lambda):
            if threshold == t:
                return value
        raise KeyError(f"threshold {t} not present in {self.thresholds}")


def sample_omega(
    kernels: ConvKernelSet,
    params: SimilarityParams | None = None,
    sample_size: int | str = "all",
    seed: int | None = None,
) -> OmegaSample:
    """Evaluate the pair set of a layer, exhaustively or by sampling.

    With sample_size >= the population (or "all"), every pair (i, j),
    i < j, is evaluated in lexicographic order. Otherwise sample_size
    distinct pairs are drawn uniformly without replacement from the
    seeded generator; the same seed always yields the same pairs.
    """
    p = params if params is not None else SimilarityParams()
    if kernels.f2 < 2:
        raise ValueError(
            f"layer {kernels.layer_id!r} has f2={kernels.f2}; need >= 2 kernels"
        )
    population = pair_count(kernels.f2)
    exhaustive = sample_size == "all" or int(sample_size) >= population
    if not exhaustive and int(sample_size) < 1:
        raise ValueError("sample_size must be >= 1")

    if exhaustive:
        ii, jj = np.triu_indices(kernels.f2, k=1)
        used_seed = None
    else:
        if seed is None:
            raise ValueError("seed is required when sampling")
        ranks = sample_pair_ranks(population, int(sample_size), seed)
        pairs = np.asarray([pair_unrank(int(r), kernels.f2) for r in ranks])
        ii, jj = pairs[:, 0], pairs[:, 1]
        used_seed = int(seed)

    values = _pair_similarities(kernels, ii, jj, p)
    return OmegaSample(
        layer_id=kernels.layer_id,
        i_indices=np.asarray(ii, dtype=np.int64),
        j_indices=np.asarray(jj, dtype=np.int64),
        values=values,
        population_size=population,
        exhaustive=exhaustive,
        seed=used_seed,
        params=p,
    )


def measure_redundancy(
    sample: OmegaSample, thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
) -> CkrmResult:
    """Lambda per threshold: the fraction of sampled pair similarities
    strictly above t, with binomial standard errors when sampled."""
    if len(sample) == 0:
        raise ValueError("empty omega sample")
    for t in thresholds:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"threshold {t} outside [0, 1]")
    count = len(sample)
    lambdas = tuple(
        float(np.count_nonzero(sample.values > t)) / count for t in thresholds
    )
    hist, _ = np.histogram(sample.values, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    stderr = None
    if not sample.exhaustive:
        stderr = tuple(math.sqrt(lam * (1 - lam) / count) for lam in lambdas)
    return CkrmResult(
        layer_id=sample.layer_id,
        thresholds=tuple(float(t) for t in thresholds),
        lambdas=lambdas,
        histogram=tuple(int(c) for c in hist),
        sample=SampleInfo(count=count, exhaustive=sample.exhaustive, seed=sample.seed),
        stderr=stderr,
    )


def analyze_layer(
    kernels: ConvKernelSet,
    params: SimilarityParams | None = None,
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
    sample_size: int | str = DEFAULT_SAMPLE_SIZE,
    seed: int | None = None,
) -> CkrmResult:
    """Pair sampling and redundancy measurement in one step."""
    return measure_redundancy(
        sample_omega(kernels, params, sample_size, seed), thresholds
    )


def aggregate(results: list[CkrmResult]) -> MultiRunCkrm:
    """Mean lambda over independently trained checkpoints of one layer."""
    if not results:
        raise ValueError("need at least one result to aggregate")
    first = results[0]
    for r in results[1:]:
        if r.layer_id != first.layer_id:
            raise ValueError(
                f"layer mismatch: {r.layer_id!r} vs {first.layer_id!r}"
            )
        if r.thresholds != first.thresholds:
            raise ValueError(
                f"threshold mismatch for {r.layer_id!r}: "
                f"{r.thresholds} vs {first.thresholds}"
            )
    mean = tuple(
        float(np.mean([r.lambdas[k] for r in results]))
        for k in range(len(first.thresholds))
    )
    return MultiRunCkrm(
        layer_id=first.layer_id, per_run=tuple(results), mean_lambda=mean
    )
