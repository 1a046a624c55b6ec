"""Paired statistical tests, effect sizes, correlation and regression.

The test statistics, rank handling, exact Wilcoxon enumeration and the
bootstrap are implemented here so the zero-difference policy, tie
corrections and resampling scheme are pinned exactly; only the Student-t
CDF comes from scipy (the normal CDF uses math.erfc). Conventions:

* Wilcoxon discards zero differences, ranks |d| with average ranks for
  ties, reports W = min(positive-rank sum, negative-rank sum), and uses
  exact enumeration for n <= 25, a tie- and continuity-corrected normal
  approximation above.
* Bootstrap confidence intervals are percentile intervals over B
  resampled means from a dedicated seeded generator.
* Identical paired samples produce the degenerate null report rather
  than a crash when requested through ``paired_comparison``; the raw
  tests raise ZeroVarianceError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import stdtr

from . import rng
from .scoring import ScoreTable

_Array = Sequence[float] | np.ndarray


class StatsError(ValueError):
    pass


class ZeroVarianceError(StatsError):
    pass


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _t_two_sided_p(t: float, df: int) -> float:
    return 2.0 * float(stdtr(df, -abs(t)))


def _as_1d(x: _Array, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise StatsError(f"{name} must be 1-D")
    return arr


def rankdata(values: _Array) -> np.ndarray:
    """Ranks starting at 1, with average ranks assigned to ties."""
    arr = _as_1d(values, "values")
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.shape[0], dtype=np.float64)
    i = 0
    while i < arr.shape[0]:
        j = i
        while j + 1 < arr.shape[0] and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


# ---------------------------------------------------------------------------
# paired tests

def paired_t(x: _Array, y: _Array) -> tuple[float, float]:
    """Paired Student t: t = mean(d) / (sd(d)/sqrt(n)), two-sided p with
    n - 1 degrees of freedom. Raises ZeroVarianceError when every
    difference is identical (including x == y)."""
    x, y = _as_1d(x, "x"), _as_1d(y, "y")
    if x.shape != y.shape:
        raise StatsError("paired samples must have equal length")
    n = x.shape[0]
    if n < 2:
        raise StatsError("need n >= 2 pairs")
    d = x - y
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise ZeroVarianceError(f"all paired differences identical (mean diff {float(d.mean())})")
    t = float(d.mean()) / (sd / math.sqrt(n))
    return t, _t_two_sided_p(t, n - 1)


def _wilcoxon_exact_cdf_le(rank2: np.ndarray, w2: int) -> float:
    """P(W+ <= w2) with ranks doubled to integers, by subset-sum counting."""
    total = int(rank2.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in rank2:
        r = int(r)
        counts[r:] += counts[:total + 1 - r]
    return float(counts[:w2 + 1].sum() / counts.sum())


def wilcoxon_signed_rank(x: _Array, y: _Array, mode: str = "auto") -> tuple[float, float]:
    """Wilcoxon signed-rank test on paired samples.

    Zero differences are discarded. W is the smaller of the positive and
    negative rank sums; the p-value is exact for n <= 25 and a normal
    approximation with tie correction and continuity correction above.
    ``mode`` forces "exact" or "approx" (used to validate their agreement).
    """
    if mode not in ("auto", "exact", "approx"):
        raise StatsError(f"unknown mode {mode!r}")
    x, y = _as_1d(x, "x"), _as_1d(y, "y")
    if x.shape != y.shape:
        raise StatsError("paired samples must have equal length")
    d = x - y
    d = d[d != 0.0]
    n = d.shape[0]
    if n == 0:
        raise ZeroVarianceError("all paired differences are zero")
    ranks = rankdata(np.abs(d))
    w_pos = float(ranks[d > 0].sum())
    w_neg = float(ranks[d < 0].sum())
    w = min(w_pos, w_neg)
    if mode == "exact" or (mode == "auto" and n <= 25):
        rank2 = np.rint(2.0 * ranks).astype(np.int64)
        p = min(1.0, 2.0 * _wilcoxon_exact_cdf_le(rank2, int(round(2.0 * w))))
        return w, p
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var -= float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts)) / 48.0
    if var <= 0:
        raise ZeroVarianceError("zero variance in signed ranks")
    z = (w - mu + 0.5) / math.sqrt(var)
    return w, min(1.0, 2.0 * _norm_cdf(z))


def cohens_d(x: _Array, y: _Array) -> float:
    """Standardized mean difference with the pooled standard deviation
    sqrt(((n_x-1) s_x^2 + (n_y-1) s_y^2) / (n_x + n_y - 2))."""
    x, y = _as_1d(x, "x"), _as_1d(y, "y")
    nx, ny = x.shape[0], y.shape[0]
    if nx < 2 or ny < 2:
        raise StatsError("need n >= 2 in each sample")
    pooled_var = ((nx - 1) * x.var(ddof=1) + (ny - 1) * y.var(ddof=1)) / (nx + ny - 2)
    if pooled_var == 0.0:
        raise ZeroVarianceError("zero pooled variance")
    return float((x.mean() - y.mean()) / math.sqrt(pooled_var))


def effect_size_label(d: float) -> str:
    magnitude = abs(d)
    if magnitude < 0.2:
        return "small"
    if magnitude < 0.5:
        return "small-medium"
    if magnitude < 0.8:
        return "medium"
    return "large"


def bootstrap_ci(diffs: _Array, level: float = 0.95, b: int = 10000,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of ``diffs``."""
    d = _as_1d(diffs, "diffs")
    n = d.shape[0]
    if n < 2:
        raise StatsError("need n >= 2")
    if not 0.0 < level < 1.0:
        raise StatsError("level must be in (0, 1)")
    if b < 1000:
        raise StatsError("need B >= 1000 resamples")
    gen = rng.generator(seed, "bootstrap")
    means = np.empty(b, dtype=np.float64)
    chunk = max(1, min(b, 4_000_000 // max(n, 1)))
    done = 0
    while done < b:
        m = min(chunk, b - done)
        idx = gen.integers(0, n, size=(m, n))
        means[done:done + m] = d[idx].mean(axis=1)
        done += m
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(means, [tail, 100.0 - tail])
    return float(low), float(high)


# ---------------------------------------------------------------------------
# association

def pearson(x: _Array, y: _Array) -> float:
    x, y = _as_1d(x, "x"), _as_1d(y, "y")
    if x.shape != y.shape or x.shape[0] < 2:
        raise StatsError("need two equal-length samples with n >= 2")
    sx, sy = x.std(), y.std()
    if sx == 0.0 or sy == 0.0:
        raise ZeroVarianceError("constant input to correlation")
    r = float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))
    return max(-1.0, min(1.0, r))


def spearman(x: _Array, y: _Array) -> tuple[float, float]:
    """Pearson correlation of average-tied ranks, p via the t approximation
    with n - 2 degrees of freedom."""
    x, y = _as_1d(x, "x"), _as_1d(y, "y")
    if x.shape != y.shape:
        raise StatsError("samples must have equal length")
    n = x.shape[0]
    if n < 3:
        raise StatsError("need n >= 3")
    rx, ry = rankdata(x), rankdata(y)
    if np.array_equal(rx, ry):
        return 1.0, 0.0
    if np.array_equal(rx, (n + 1.0) - ry):
        return -1.0, 0.0
    r = pearson(rx, ry)
    if abs(r) >= 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, _t_two_sided_p(t, n - 2)


@dataclass
class RegressionFit:
    slope: float
    intercept: float
    pearson_r: float
    r_squared: float
    p_value: float

    def to_json_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "pearson_r": self.pearson_r,
            "r_squared": self.r_squared,
            "p_value": self.p_value,
        }


def ols_simple(x: _Array, y: _Array) -> RegressionFit:
    """Least-squares line y = slope * x + intercept with Pearson r,
    R^2 = r^2, and a two-sided p-value for the slope."""
    x, y = _as_1d(x, "x"), _as_1d(y, "y")
    if x.shape != y.shape:
        raise StatsError("samples must have equal length")
    n = x.shape[0]
    if n < 3:
        raise StatsError("need n >= 3")
    if float(x.std()) == 0.0:
        raise ZeroVarianceError("constant regressor")
    xc, yc = x - x.mean(), y - y.mean()
    sxx = float(np.dot(xc, xc))
    sxy = float(np.dot(xc, yc))
    syy = float(np.dot(yc, yc))
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    if syy == 0.0:
        # constant response: flat line fits exactly, no association
        return RegressionFit(slope=0.0, intercept=float(y.mean()), pearson_r=0.0,
                             r_squared=0.0, p_value=1.0)
    r = max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))
    sse = syy - slope * sxy
    if sse <= 0.0:
        return RegressionFit(slope, intercept, r, r * r, 0.0)
    se = math.sqrt(sse / (n - 2) / sxx)
    t = slope / se
    return RegressionFit(slope, intercept, r, r * r, _t_two_sided_p(t, n - 2))


# ---------------------------------------------------------------------------
# report bundles

@dataclass
class StatTestReport:
    """Paired-comparison summary: mean difference with bootstrap CI,
    paired t, Wilcoxon, and Cohen's d."""

    mean_diff: float
    ci_low: float
    ci_high: float
    t_stat: float
    p_t: float
    wilcoxon_w: float
    p_w: float
    cohens_d: float
    n: int

    def to_json_dict(self) -> dict:
        return {
            "mean_diff": self.mean_diff,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "t_stat": self.t_stat,
            "p_t": self.p_t,
            "wilcoxon_w": self.wilcoxon_w,
            "p_w": self.p_w,
            "cohens_d": self.cohens_d,
            "effect_size": effect_size_label(self.cohens_d),
            "n": self.n,
        }


def paired_comparison(x: _Array, y: _Array, seed: int = 0, b: int = 10000,
                      level: float = 0.95) -> StatTestReport:
    """Full paired comparison of x against y (positive diff favors x).

    Identical samples yield the degenerate null report (zero difference,
    p-values 1) instead of raising, since pipelines may legitimately tie.
    """
    x, y = _as_1d(x, "x"), _as_1d(y, "y")
    if x.shape != y.shape:
        raise StatsError("paired samples must have equal length")
    n = x.shape[0]
    if n < 2:
        raise StatsError("need n >= 2 pairs")
    d = x - y
    mean_diff = float(d.mean())
    if np.all(d == d[0]):
        if d[0] == 0.0:
            return StatTestReport(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, n)
        # constant non-zero shift: bootstrap degenerates to a point
        try:
            eff = cohens_d(x, y)
        except ZeroVarianceError:
            eff = 0.0
        return StatTestReport(mean_diff, mean_diff, mean_diff, math.inf,
                              0.0, 0.0, min(1.0, 2.0 * 0.5 ** n), eff, n)
    ci_low, ci_high = bootstrap_ci(d, level=level, b=b, seed=seed)
    t, p_t = paired_t(x, y)
    w, p_w = wilcoxon_signed_rank(x, y)
    try:
        eff = cohens_d(x, y)
    except ZeroVarianceError:
        eff = 0.0
    return StatTestReport(mean_diff, ci_low, ci_high, t, p_t, w, p_w, eff, n)


@dataclass
class ScoreSeparationReport:
    """Score statistics partitioned by relevance, plus rank correlation
    and histogram overlap (shared mass over 50 equal-width bins spanning
    the pooled range). Histogram fields feed plot emission."""

    mean_rel: float
    sd_rel: float
    mean_irr: float
    sd_irr: float
    mean_diff: float
    cohens_d: float
    spearman_r: float
    overlap_fraction: float
    n_rel: int
    n_irr: int
    bin_edges: list[float]
    rel_hist: list[float]
    irr_hist: list[float]

    def to_json_dict(self) -> dict:
        return {
            "mean_rel": self.mean_rel,
            "sd_rel": self.sd_rel,
            "mean_irr": self.mean_irr,
            "sd_irr": self.sd_irr,
            "mean_diff": self.mean_diff,
            "cohens_d": self.cohens_d,
            "spearman_r": self.spearman_r,
            "overlap_fraction": self.overlap_fraction,
            "n_rel": self.n_rel,
            "n_irr": self.n_irr,
            "bin_edges": self.bin_edges,
            "rel_hist": self.rel_hist,
            "irr_hist": self.irr_hist,
        }


_OVERLAP_BINS = 50


def score_separation(scores: ScoreTable | Callable[[str, str], float],
                     pools: Mapping[str, "object"],
                     gt: Mapping[str, frozenset[str] | set[str]]) -> ScoreSeparationReport:
    """Partition pooled candidate scores into relevant vs irrelevant and
    summarize their separation. Raises StatsError if either partition is
    empty. Degenerate partitions (single point, zero variance) report
    d = 0 and spearman 0 rather than failing."""
    rel: list[float] = []
    irr: list[float] = []
    lookup = scores.get if isinstance(scores, ScoreTable) else scores
    for user_id, pool in pools.items():
        gt_items = set(gt.get(user_id, ()))
        for item_id in pool.item_ids:
            value = float(lookup(user_id, item_id))
            (rel if item_id in gt_items else irr).append(value)
    if not rel or not irr:
        raise StatsError("both relevant and irrelevant partitions must be non-empty")
    rel_arr, irr_arr = np.array(rel), np.array(irr)
    mean_rel, mean_irr = float(rel_arr.mean()), float(irr_arr.mean())
    sd_rel = float(rel_arr.std(ddof=1)) if rel_arr.size > 1 else 0.0
    sd_irr = float(irr_arr.std(ddof=1)) if irr_arr.size > 1 else 0.0
    try:
        d = cohens_d(rel_arr, irr_arr)
    except (StatsError, ZeroVarianceError):
        d = 0.0
    pooled = np.concatenate([rel_arr, irr_arr])
    labels = np.concatenate([np.ones(rel_arr.size), np.zeros(irr_arr.size)])
    try:
        sp, _ = spearman(pooled, labels)
    except (StatsError, ZeroVarianceError):
        sp = 0.0
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi > lo:
        edges = np.linspace(lo, hi, _OVERLAP_BINS + 1)
        rel_hist = np.histogram(rel_arr, bins=edges)[0] / rel_arr.size
        irr_hist = np.histogram(irr_arr, bins=edges)[0] / irr_arr.size
        overlap = float(np.minimum(rel_hist, irr_hist).sum())
    else:
        edges = np.array([lo, hi])
        rel_hist = np.array([1.0])
        irr_hist = np.array([1.0])
        overlap = 1.0
    return ScoreSeparationReport(
        mean_rel=mean_rel, sd_rel=sd_rel, mean_irr=mean_irr, sd_irr=sd_irr,
        mean_diff=mean_rel - mean_irr, cohens_d=d, spearman_r=sp,
        overlap_fraction=overlap, n_rel=rel_arr.size, n_irr=irr_arr.size,
        bin_edges=[float(e) for e in edges],
        rel_hist=[float(v) for v in rel_hist],
        irr_hist=[float(v) for v in irr_hist],
    )
