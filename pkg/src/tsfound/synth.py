"""Synthetic corpus generation: Gaussian-process sampling and mixup.

Two augmentation families feed the pre-training corpus:

* ``gp_synth`` draws one sample path from a Gaussian process whose covariance
  is assembled from a small kernel algebra (RBF, periodic, linear, white
  noise, and sum/product composites up to depth 3);
* ``ts_mixup`` forms convex combinations of up to three individually
  standard-scaled series.

``make_corpus`` composes both into a reproducible corpus: every series is a
pure function of (root seed, index), so generation order and worker count
never change the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .series import TimeSeries, standard_scale
from .util import parallel_map, substream

_LEAF_KINDS = ("rbf", "periodic", "linear", "white")
_COMPOSITE_KINDS = ("sum", "product")
MAX_COMPOSITE_DEPTH = 3


@dataclass(frozen=True)
class Kernel:
    """One node of a covariance expression.

    Leaves use ``length_scale`` / ``period`` / ``amplitude`` (period only for
    the periodic kind); ``sum`` and ``product`` nodes combine children.
    """

    kind: str
    length_scale: float = 8.0
    period: float = 24.0
    amplitude: float = 1.0
    children: tuple["Kernel", ...] = ()

    def __post_init__(self):
        if self.kind in _LEAF_KINDS:
            if self.children:
                raise ValueError(f"{self.kind} kernel takes no children")
            if self.length_scale <= 0 or self.period <= 0:
                raise ValueError("length scale and period must be strictly positive")
        elif self.kind in _COMPOSITE_KINDS:
            if not self.children:
                raise ValueError(f"{self.kind} kernel needs children")
            if self.depth() > MAX_COMPOSITE_DEPTH:
                raise ValueError(f"composite depth {self.depth()} exceeds {MAX_COMPOSITE_DEPTH}")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def depth(self) -> int:
        if not self.children:
            return 1
        return 1 + max(c.depth() for c in self.children)

    def matrix(self, t: np.ndarray) -> np.ndarray:
        """Covariance over grid positions `t` (index units)."""
        if self.kind == "rbf":
            d = t[:, None] - t[None, :]
            return self.amplitude ** 2 * np.exp(-0.5 * (d / self.length_scale) ** 2)
        if self.kind == "periodic":
            d = t[:, None] - t[None, :]
            s = np.sin(math.pi * d / self.period)
            return self.amplitude ** 2 * np.exp(-2.0 * (s / self.length_scale) ** 2)
        if self.kind == "linear":
            x = (t - t.mean()) / self.length_scale
            return self.amplitude ** 2 * np.outer(x, x)
        if self.kind == "white":
            return self.amplitude ** 2 * np.eye(len(t))
        if self.kind == "sum":
            out = self.children[0].matrix(t)
            for c in self.children[1:]:
                out = out + c.matrix(t)
            return out
        out = self.children[0].matrix(t)
        for c in self.children[1:]:
            out = out * c.matrix(t)
        return out

    def leaf_kinds(self) -> list[str]:
        if not self.children:
            return [self.kind]
        return [k for c in self.children for k in c.leaf_kinds()]


@dataclass(frozen=True)
class GpKernelSpec:
    """A kernel expression plus the grid length and sampling seed."""

    kernel: Kernel
    length: int
    seed: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("length must be a positive integer")


def gp_synth(spec: GpKernelSpec, series_id: str | None = None, freq: str = "H") -> TimeSeries:
    """Draw one GP sample path; deterministic in the spec (seed included).

    The covariance gets 1e-8 jitter on the diagonal before factorization;
    on failure the jitter grows tenfold up to 1e-4.
    """
    t = np.arange(spec.length, dtype=np.float64)
    cov = spec.kernel.matrix(t)
    jitter = 1e-8
    chol = None
    while jitter <= 1e-4:
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(spec.length))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
    if chol is None:
        raise np.linalg.LinAlgError(
            f"covariance not positive definite even with jitter 1e-4 (kernel {spec.kernel.kind})")
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal(spec.length)
    values = chol @ z
    return TimeSeries(id=series_id or f"gp-{spec.seed}", freq=freq, values=values)


def ts_mixup(series_list: list[TimeSeries], weights: list[float], target_len: int,
             series_id: str | None = None) -> TimeSeries:
    """Convex combination of 1-3 standard-scaled series, aligned to `target_len`.

    Each input is z-scored on its own full-series statistics, truncated to its
    most recent `target_len` points, and left-padded with zeros (the scaled
    mean) when shorter.
    """
    if not 1 <= len(series_list) <= 3:
        raise ValueError("mixup takes between 1 and 3 series")
    if len(weights) != len(series_list):
        raise ValueError("one weight per series required")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be nonnegative")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 (got {sum(weights)!r})")
    out = np.zeros(target_len, dtype=np.float64)
    for ts, w in zip(series_list, weights):
        scaled, _, _ = standard_scale(ts.values, np.ones(len(ts)))
        scaled = scaled[-target_len:]
        aligned = np.zeros(target_len, dtype=np.float64)
        aligned[target_len - len(scaled):] = scaled
        out += w * aligned
    return TimeSeries(id=series_id or "mixup", freq=series_list[0].freq, values=out)


# -- random kernel composites -------------------------------------------------

#: seasonal cycle lengths the sampler draws from (filtered to fit the grid)
PERIOD_BANK = (4, 6, 7, 12, 24, 30, 48, 52, 96, 168)


def random_kernel(rng: np.random.Generator, length: int) -> Kernel:
    """Sum of 1-3 product groups of random leaves (composite depth <= 3)."""
    def leaf() -> Kernel:
        kind = rng.choice(("rbf", "periodic", "periodic", "linear"))
        if kind == "rbf":
            ls = float(np.exp(rng.uniform(np.log(2.0), np.log(length / 4))))
            return Kernel("rbf", length_scale=ls)
        if kind == "periodic":
            periods = [p for p in PERIOD_BANK if p <= length / 2] or [max(2, length // 4)]
            period = float(rng.choice(periods))
            ls = float(np.exp(rng.uniform(np.log(0.7), np.log(2.0))))
            return Kernel("periodic", length_scale=ls, period=period)
        slope = float(np.exp(rng.uniform(np.log(0.1), np.log(1.0))))
        return Kernel("linear", length_scale=length / 4, amplitude=slope)

    groups = []
    for _ in range(int(rng.integers(1, 4))):
        n_leaves = int(rng.integers(1, 3))
        members = [leaf() for _ in range(n_leaves)]
        groups.append(members[0] if n_leaves == 1 else Kernel("product", children=tuple(members)))
    noise = Kernel("white", amplitude=float(np.exp(rng.uniform(np.log(0.05), np.log(0.3)))))
    groups.append(noise)
    return Kernel("sum", children=tuple(groups))


@dataclass
class CorpusSpec:
    """Knobs for ``make_corpus``; all randomness flows from (seed, index)."""

    n_series: int = 1000
    length: int = 768
    mixup_rate: float = 0.3
    freq: str = "H"


def _one_series(args: tuple[CorpusSpec, int, int]) -> tuple[TimeSeries, list[str], int]:
    spec, seed, index = args
    rng = substream(seed, "corpus", index)
    use_mixup = spec.mixup_rate > 0 and rng.random() < spec.mixup_rate
    n_components = int(rng.integers(2, 4)) if use_mixup else 1
    parts, kinds = [], []
    for _ in range(n_components):
        kernel = random_kernel(rng, spec.length)
        kinds.extend(kernel.leaf_kinds())
        sub_seed = int(rng.integers(0, 2 ** 31))
        parts.append(gp_synth(GpKernelSpec(kernel, spec.length, sub_seed)))
    if n_components == 1:
        ts = parts[0]
    else:
        weights = rng.dirichlet(np.ones(n_components)).tolist()
        ts = ts_mixup(parts, weights, spec.length)
    ts.id = f"synth-{index:06d}"
    ts.freq = spec.freq
    return ts, kinds, n_components


def make_corpus(spec: CorpusSpec, seed: int) -> tuple[list[TimeSeries], dict]:
    """Generate the corpus plus a manifest (counts, seed, kernel histogram)."""
    if spec.n_series < 1:
        raise ValueError("n_series must be positive")
    results = parallel_map(_one_series, [(spec, seed, i) for i in range(spec.n_series)])
    series = [ts for ts, _, _ in results]
    histogram: dict[str, int] = {}
    n_mixed = sum(1 for _, _, n in results if n > 1)
    for _, kinds, _ in results:
        for k in kinds:
            histogram[k] = histogram.get(k, 0) + 1
    manifest = {
        "n_series": spec.n_series,
        "length": spec.length,
        "mixup_rate": spec.mixup_rate,
        "n_mixup_series": n_mixed,
        "seed": seed,
        "kernel_histogram": dict(sorted(histogram.items())),
    }
    return series, manifest


def make_seasonal_set(n_series: int, seed: int, length: int = 640,
                      periods: tuple[int, ...] = (24, 48),
                      noise: float = 0.15, freq: str = "H") -> list[TimeSeries]:
    """Held-out seasonal series: periodic GP + slow drift + observation noise.

    Useful as a small zero-shot benchmark where a seasonal-naive baseline is
    strong but beatable.
    """
    out = []
    for i in range(n_series):
        rng = substream(seed, "seasonal-eval", i)
        period = int(rng.choice(periods))
        kernel = Kernel("sum", children=(
            Kernel("periodic", length_scale=1.2, period=period),
            Kernel("rbf", length_scale=length / 3, amplitude=0.5),
            Kernel("white", amplitude=noise),
        ))
        ts = gp_synth(GpKernelSpec(kernel, length, int(rng.integers(0, 2 ** 31))),
                      series_id=f"seasonal-{i:03d}", freq=freq)
        out.append(ts)
    return out
