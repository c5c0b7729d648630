"""Numeric and alignment metrics.

Rating/decision metrics are computed in exact rational arithmetic so corpus
summaries are reproducible to the last digit.  Alignment metrics (correlation
between automatic and human scores) are float-valued and lean on numpy/scipy
for the rank and correlation plumbing.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .model import (
    Decision,
    OVERALL_MAX,
    OVERALL_MIN,
    rational_to_json,
    to_rational,
)

# ---------------------------------------------------------------------------
# Exact metrics on ratings and decisions
# ---------------------------------------------------------------------------


def _paired(pred: Sequence, true: Sequence) -> int:
    if len(pred) != len(true):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(true)}")
    if len(pred) == 0:
        raise ValueError("empty input")
    return len(pred)


def mse(pred: Sequence[Fraction], true: Sequence[Fraction]) -> Fraction:
    n = _paired(pred, true)
    total = sum(((to_rational(p) - to_rational(t)) ** 2 for p, t in zip(pred, true)), Fraction(0))
    return total / n


def mae(pred: Sequence[Fraction], true: Sequence[Fraction]) -> Fraction:
    n = _paired(pred, true)
    total = sum((abs(to_rational(p) - to_rational(t)) for p, t in zip(pred, true)), Fraction(0))
    return total / n


def accuracy(pred: Sequence[Decision], true: Sequence[Decision]) -> Fraction:
    n = _paired(pred, true)
    return Fraction(sum(1 for p, t in zip(pred, true) if p == t), n)


def f1_accept(pred: Sequence[Decision], true: Sequence[Decision]) -> Fraction:
    """F1 with accept as the positive class: 2TP / (2TP + FP + FN).

    Defined as 0 when the denominator is 0 (no accepts predicted or present).
    """
    _paired(pred, true)
    tp = sum(1 for p, t in zip(pred, true) if p is Decision.ACCEPT and t is Decision.ACCEPT)
    fp = sum(1 for p, t in zip(pred, true) if p is Decision.ACCEPT and t is not Decision.ACCEPT)
    fn = sum(1 for p, t in zip(pred, true) if p is not Decision.ACCEPT and t is Decision.ACCEPT)
    denom = 2 * tp + fp + fn
    if denom == 0:
        return Fraction(0)
    return Fraction(2 * tp, denom)


@dataclass(frozen=True)
class NumericMetricReport:
    mse: Fraction
    mae: Fraction
    acc: Fraction
    f1: Fraction
    count: int

    def to_dict(self) -> dict:
        return {
            "mse": rational_to_json(self.mse),
            "mae": rational_to_json(self.mae),
            "acc": rational_to_json(self.acc),
            "f1": rational_to_json(self.f1),
            "count": self.count,
        }

    def to_float_dict(self) -> dict:
        return {
            "mse": float(self.mse),
            "mae": float(self.mae),
            "acc": float(self.acc),
            "f1": float(self.f1),
            "count": self.count,
        }


def numeric_metrics(
    pred_ratings: Sequence[Fraction],
    true_ratings: Sequence[Fraction],
    pred_decisions: Sequence[Decision],
    true_decisions: Sequence[Decision],
) -> NumericMetricReport:
    n = _paired(pred_ratings, true_ratings)
    if len(pred_decisions) != n or len(true_decisions) != n:
        raise ValueError("rating and decision vectors must be the same length")
    return NumericMetricReport(
        mse=mse(pred_ratings, true_ratings),
        mae=mae(pred_ratings, true_ratings),
        acc=accuracy(pred_decisions, true_decisions),
        f1=f1_accept(pred_decisions, true_decisions),
        count=n,
    )


# ---------------------------------------------------------------------------
# Alignment between automatic and human overall scores
# ---------------------------------------------------------------------------

SCORE_SPAN = float(OVERALL_MAX - OVERALL_MIN)  # width of the overall-score scale


def normalized_mae(auto: Sequence[float], human: Sequence[float]) -> float:
    """MAE after mapping both score vectors from [-2, 14] onto [0, 1]; equals
    the raw MAE divided by the 16-point span."""
    n = _paired(auto, human)
    a = np.asarray(auto, dtype=float)
    h = np.asarray(human, dtype=float)
    return float(np.abs(a - h).sum() / (n * SCORE_SPAN))


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Pearson correlation on the raw values; None when undefined (fewer than
    two points, or a constant vector)."""
    n = _paired(x, y)
    if n < 2:
        return None
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        return None
    a = a - a.mean()
    b = b - b.mean()
    return float((a @ b) / np.sqrt((a @ a) * (b @ b)))


def spearman(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Spearman correlation = Pearson correlation of average ranks."""
    n = _paired(x, y)
    if n < 2:
        return None
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def pairwise_error(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Fraction of unordered pairs (i, j) whose relative order disagrees
    between the two vectors.  A pair tied in both vectors agrees; a pair tied
    in exactly one of them counts as a disagreement.  None when there are no
    pairs."""
    n = _paired(x, y)
    if n < 2:
        return None
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    i, j = np.triu_indices(n, k=1)
    sign_a = np.sign(a[i] - a[j])
    sign_b = np.sign(b[i] - b[j])
    return float(np.count_nonzero(sign_a != sign_b) / i.size)


@dataclass(frozen=True)
class AlignmentReport:
    mae_normalized: float
    pearson: float | None
    spearman: float | None
    pairwise_error: float | None
    count: int
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "mae_normalized": self.mae_normalized,
            "pearson": self.pearson,
            "spearman": self.spearman,
            "pairwise_error": self.pairwise_error,
            "count": self.count,
            "notes": list(self.notes),
        }


def alignment_metrics(auto: Sequence[float], human: Sequence[float]) -> AlignmentReport:
    """Compare automatic overall scores against human-derived ones.

    Degenerate inputs never raise: undefined statistics come back as None
    with a reason in ``notes``.
    """
    n = _paired(auto, human)
    notes = []
    r = pearson(auto, human)
    rho = spearman(auto, human)
    pw = pairwise_error(auto, human)
    if n < 2:
        notes.append("fewer than two points; correlations undefined")
    else:
        if np.ptp(np.asarray(auto, dtype=float)) == 0.0:
            notes.append("automatic scores are constant; correlations undefined")
        if np.ptp(np.asarray(human, dtype=float)) == 0.0:
            notes.append("human scores are constant; correlations undefined")
    return AlignmentReport(
        mae_normalized=normalized_mae(auto, human),
        pearson=r,
        spearman=rho,
        pairwise_error=pw,
        count=n,
        notes=tuple(notes),
    )
