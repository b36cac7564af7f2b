"""Patch similarity measures: luminance, contrast, structure, and the
weighted-exponent variant used for kernel comparison.

Given two equally shaped 2-D patches x and y with population statistics
(mu, sigma, sigma_xy), the three components are

    L = (2 mu_x mu_y + eps) / (mu_x^2 + mu_y^2 + eps)
    C = (2 sg_x sg_y + eps) / (sg_x^2 + sg_y^2 + eps)
    S = (sg_xy + eps)       / (sg_x sg_y + eps)

phi = L*C*S is the plain patch similarity in [-1, 1]; the weighted form
psi = |L|^alpha * C^beta * |S|^gamma lies in [0, 1] and, with a small
alpha, tolerates luminance offsets and sign flips: adding a constant to
a patch changes neither sigma nor sigma_xy, so C and S stay exactly 1
and psi reduces to |L|^alpha.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_EPSILON = 1e-4

# noise-table settings: std of level i is i/10 - 0.05, luminance shift 0.5
NOISE_STDS = tuple(i / 10 - 0.05 for i in range(1, 6))
NOISE_SHIFT = 0.5
_MEASURES = (("psi_1_1_1", 1.0), ("psi_0.1_1_1", 0.1))


@dataclass(frozen=True)
class SimilarityParams:
    """Exponents (alpha, beta, gamma) and stabilizer epsilon for psi."""

    alpha: float = 0.1
    beta: float = 1.0
    gamma: float = 1.0
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ValueError("alpha, beta, gamma must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class PatchStats:
    """Population statistics of a patch pair (divide-by-n convention)."""

    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    sigma_xy: float
    n: int


@dataclass(frozen=True)
class PatchPlan:
    """Sliding-window grid: patch size and stride for image comparison."""

    patch_height: int = 7
    patch_width: int = 7
    stride: int = 1

    def __post_init__(self) -> None:
        if min(self.patch_height, self.patch_width, self.stride) < 1:
            raise ValueError("patch dims and stride must be >= 1")


def _as_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"patch shapes differ: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ValueError("empty patch")
    return x, y


def patch_stats(x, y) -> PatchStats:
    """Two-pass means, standard deviations, and covariance of a pair."""
    x, y = _as_pair(x, y)
    n = x.size
    mu_x = float(x.mean())
    mu_y = float(y.mean())
    xc = x - mu_x
    yc = y - mu_y
    var_x = float((xc * xc).mean())
    var_y = float((yc * yc).mean())
    sigma_xy = float((xc * yc).mean())
    return PatchStats(
        mu_x=mu_x,
        mu_y=mu_y,
        sigma_x=float(np.sqrt(var_x)),
        sigma_y=float(np.sqrt(var_y)),
        sigma_xy=sigma_xy,
        n=n,
    )


def components(x, y, epsilon: float = DEFAULT_EPSILON) -> tuple[float, float, float]:
    """Luminance, contrast, and structure similarity of two patches."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x, y = _as_pair(x, y)
    mu_x = float(x.mean())
    mu_y = float(y.mean())
    xc = x - mu_x
    yc = y - mu_y
    var_x = float((xc * xc).mean())
    var_y = float((yc * yc).mean())
    cov = float((xc * yc).mean())
    # one sqrt of the variance product keeps identical inputs exactly at 1
    sg_prod = math.sqrt(var_x * var_y)
    lum = (2 * mu_x * mu_y + epsilon) / (mu_x * mu_x + mu_y * mu_y + epsilon)
    con = (2 * sg_prod + epsilon) / (var_x + var_y + epsilon)
    struct = (cov + epsilon) / (sg_prod + epsilon)
    return lum, con, struct


def phi(x, y, epsilon: float = DEFAULT_EPSILON) -> float:
    """Plain patch similarity L*C*S in [-1, 1]."""
    lum, con, struct = components(x, y, epsilon)
    return lum * con * struct


def psi(x, y, params: SimilarityParams | None = None) -> float:
    """Weighted patch similarity |L|^alpha * C^beta * |S|^gamma in [0, 1]."""
    p = params if params is not None else SimilarityParams()
    lum, con, struct = components(x, y, p.epsilon)
    return abs(lum) ** p.alpha * con**p.beta * abs(struct) ** p.gamma


def big_phi(
    img_a, img_b, plan: PatchPlan | None = None, epsilon: float = DEFAULT_EPSILON
) -> float:
    """Mean of phi over the sliding-window patch grid of two images."""
    a, b = _as_pair(img_a, img_b)
    if a.ndim != 2:
        raise ValueError(f"images must be 2-D, got shape {a.shape}")
    plan = plan if plan is not None else PatchPlan()
    h, w = a.shape
    if plan.patch_height > h or plan.patch_width > w:
        raise ValueError(
            f"patch plan ({plan.patch_height}x{plan.patch_width}) larger than "
            f"image ({h}x{w})"
        )
    values = []
    for r in range(0, h - plan.patch_height + 1, plan.stride):
        for c in range(0, w - plan.patch_width + 1, plan.stride):
            values.append(
                phi(
                    a[r : r + plan.patch_height, c : c + plan.patch_width],
                    b[r : r + plan.patch_height, c : c + plan.patch_width],
                    epsilon,
                )
            )
    return float(np.mean(values))


@dataclass(frozen=True)
class NoiseDemoRow:
    noise_level: int
    sigma: float
    shifted: bool
    measure: str
    mean: float
    std: float


@dataclass
class NoiseDemoTable:
    """Mean psi per noise level, for both exponent settings, with and
    without a constant luminance shift added on top of the noise."""

    seed: int
    trials: int
    rows: list[NoiseDemoRow] = field(default_factory=list)

    def row(self, noise_level: int, shifted: bool, measure: str) -> NoiseDemoRow:
        for r in self.rows:
            if (r.noise_level, r.shifted, r.measure) == (noise_level, shifted, measure):
                return r
        raise KeyError((noise_level, shifted, measure))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["noise_level", "shifted", "measure", "mean", "std", "trials"])
        for r in self.rows:
            writer.writerow(
                [
                    r.noise_level,
                    "true" if r.shifted else "false",
                    r.measure,
                    repr(r.mean),
                    repr(r.std),
                    self.trials,
                ]
            )
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [
            f"noise robustness demo  (seed={self.seed}, trials={self.trials})",
            f"{'level':>5} {'sigma':>6} {'shift':>6}   "
            + "  ".join(f"{name:>12}" for name, _ in _MEASURES),
        ]
        levels = sorted({r.noise_level for r in self.rows})
        for level in levels:
            for shifted in (False, True):
                cells = []
                sigma = 0.0
                for name, _ in _MEASURES:
                    r = self.row(level, shifted, name)
                    sigma = r.sigma
                    cells.append(f"{r.mean:12.4f}")
                shift = f"+{NOISE_SHIFT}" if shifted else "0"
                lines.append(
                    f"{level:>5} {sigma:>6.2f} {shift:>6}   " + "  ".join(cells)
                )
        return "\n".join(lines) + "\n"


def _noise_rng(seed: int, stream: int) -> np.random.Generator:
    # counter-based stream: one Philox key per (seed, stream) pair, so
    # results do not depend on evaluation order
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def demo_noise(
    seed: int,
    trials: int,
    stds: tuple[float, ...] = NOISE_STDS,
    epsilon: float = DEFAULT_EPSILON,
) -> NoiseDemoTable:
    """Measure psi degradation of a fixed random 7x7 patch under
    additive Gaussian noise of growing strength, alone and combined
    with a constant +0.5 luminance shift.

    The base patch is drawn uniformly from [0, 1] using the seed; each
    (level, trial) pair draws its own noise from an independent
    counter-derived stream, and the shifted variant reuses the same
    noise realization.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base = _noise_rng(seed, 2**64 - 1).random((7, 7))
    table = NoiseDemoTable(seed=seed, trials=trials)
    for level, sigma in enumerate(stds, start=1):
        sums: dict[tuple[bool, str], list[float]] = {
            (shifted, name): [] for shifted in (False, True) for name, _ in _MEASURES
        }
        for trial in range(trials):
            rng = _noise_rng(seed, (level << 32) | trial)
            noisy = base + rng.normal(0.0, sigma, size=(7, 7))
            for shifted in (False, True):
                other = noisy + NOISE_SHIFT if shifted else noisy
                lum, con, struct = components(base, other, epsilon)
                for name, alpha in _MEASURES:
                    value = abs(lum) ** alpha * con * abs(struct)
                    sums[(shifted, name)].append(value)
        for (shifted, name), values in sums.items():
            arr = np.asarray(values)
            std = float(arr.std(ddof=1)) if trials > 1 else 0.0
            table.rows.append(
                NoiseDemoRow(
                    noise_level=level,
                    sigma=sigma,
                    shifted=shifted,
                    measure=name,
                    mean=float(arr.mean()),
                    std=std,
                )
            )
    return table
