"""Statistical primitives: Wilcoxon signed-rank test, ROC-AUC, F1 and threshold sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingleClass

EXACT_MAX_N = 25
THRESHOLD_GRID = np.round(np.arange(1, 20) * 0.05, 2)


def average_ranks(values) -> np.ndarray:
    """1-based ranks of ``values``; tied entries share the mean of their ranks."""
    values = np.asarray(values, dtype=float)
    n = values.size
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(n, dtype=float)
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], n]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + e + 1) / 2.0
    return ranks


@dataclass(frozen=True)
class WilcoxonResult:
    n_effective: int
    w_plus: float
    w_minus: float
    p_two_sided: float
    mode: str
    degenerate: bool = False

    @property
    def significant(self) -> bool:
        return self.p_two_sided < 0.05


def signed_rank_null_counts(ranks) -> tuple[np.ndarray, int]:
    """Null distribution of W+ for the given (possibly tied) ranks.

    Ranks are doubled so half-integer average ranks become integers. Returns
    ``counts`` where ``counts[s]`` is the number of the ``2**n`` sign patterns
    whose doubled positive rank sum equals ``s``, and the doubled total.
    """
    doubled = np.rint(2 * np.asarray(ranks, dtype=float)).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    reach = 0
    for r in doubled:
        # each rank either joins W+ or not
        counts[r:reach + r + 1] += counts[:reach + 1].copy()
        reach += r
    return counts, total


def wilcoxon_signed_rank(differences, exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped before ranking. Up to ``exact_max_n``
    non-zero differences the p-value comes from the exact null distribution
    (equivalent to enumerating every sign assignment); above that a normal
    approximation with tie-corrected variance and 0.5 continuity correction.
    """
    d = np.asarray(differences, dtype=float).ravel()
    if d.size == 0:
        raise ValueError("no differences supplied")
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0, 0.0, 0.0, 1.0, "exact", degenerate=True)

    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())

    if n <= exact_max_n:
        counts, total = signed_rank_null_counts(ranks)
        k = int(round(2 * w_plus))
        n_patterns = 2.0 ** n
        lower = counts[: k + 1].sum() / n_patterns
        upper = counts[k:].sum() / n_patterns
        p = min(1.0, 2.0 * min(lower, upper))
        return WilcoxonResult(n, w_plus, w_minus, p, "exact")

    mean = n * (n + 1) / 4.0
    _, tie_sizes = np.unique(ranks, return_counts=True)
    tie_term = float(((tie_sizes ** 3) - tie_sizes).sum()) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    z = (abs(w_plus - mean) - 0.5) / math.sqrt(var)
    p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return WilcoxonResult(n, w_plus, w_minus, p, "normal_approx")


def _checked(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).astype(int).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores, labels


def roc_auc(scores, labels) -> float:
    """Rank-based (Mann-Whitney) ROC-AUC; tied pairs count one half."""
    scores, labels = _checked(scores, labels)
    n_pos = int((labels == 1).sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC-AUC needs both classes")
    ranks = average_ranks(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def precision_recall_f1(scores, labels, threshold: float) -> tuple[float, float, float]:
    """Precision, recall and F1 of the decision ``score > threshold``."""
    scores, labels = _checked(scores, labels)
    pred = scores > threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def threshold_sweep(scores, labels, grid=THRESHOLD_GRID) -> tuple[float, float]:
    """Smallest grid threshold attaining the maximal F1."""
    best_tau, best_f1 = float(grid[0]), -1.0
    for tau in grid:
        f1 = precision_recall_f1(scores, labels, float(tau))[2]
        if f1 > best_f1:
            best_tau, best_f1 = float(tau), f1
    return best_tau, best_f1
