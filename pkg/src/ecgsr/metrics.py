"""Classification scores, predictive power recovery, and the summary statistics
used to compare cross-validation conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import betainc

from .signal_data import N_CLASSES, CaLabel

ALPHA = 0.05


@dataclass(frozen=True)
class ConfusionCounts:
    tp: tuple
    fp: tuple
    tn: tuple
    fn: tuple

    @property
    def n(self):
        return self.tp[0] + self.fp[0] + self.tn[0] + self.fn[0]

    def to_dict(self):
        return {"tp": list(self.tp), "fp": list(self.fp), "tn": list(self.tn), "fn": list(self.fn)}


def confusion(preds, truths, n_classes=N_CLASSES):
    """One-vs-rest counts for each class from single-label predictions."""
    p = np.asarray([int(v) for v in preds], dtype=int)
    t = np.asarray([int(v) for v in truths], dtype=int)
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions vs {t.size} labels")
    if p.size == 0:
        raise ValueError("need at least one prediction")
    tp, fp, tn, fn = [], [], [], []
    for j in range(n_classes):
        pj, tj = p == j, t == j
        tp.append(int(np.sum(pj & tj)))
        fp.append(int(np.sum(pj & ~tj)))
        tn.append(int(np.sum(~pj & ~tj)))
        fn.append(int(np.sum(~pj & tj)))
    return ConfusionCounts(tuple(tp), tuple(fp), tuple(tn), tuple(fn))


@dataclass(frozen=True)
class F1Report:
    precision: tuple
    recall: tuple
    f1: tuple
    overall: float
    average: str = "macro"

    def to_dict(self):
        names = [c.token for c in CaLabel]
        return {
            "average": self.average,
            "overall": self.overall,
            "per_class": {
                n: {"precision": p, "recall": r, "f1": f}
                for n, p, r, f in zip(names, self.precision, self.recall, self.f1)
            },
        }

    @classmethod
    def from_dict(cls, d):
        per = [d["per_class"][c.token] for c in CaLabel]
        return cls(
            tuple(x["precision"] for x in per),
            tuple(x["recall"] for x in per),
            tuple(x["f1"] for x in per),
            d["overall"],
            d.get("average", "macro"),
        )


def _exact(num, den):
    return Fraction(num, den) if den else Fraction(0)


def f1_report(counts, average="macro"):
    """Per-class precision/recall/F1 (0/0 taken as 0) and an overall score.

    ``average="macro"`` is the unweighted mean of the per-class F1 values;
    ``"micro"`` pools the counts over classes first. Ratios are formed from
    integer counts and rounded once, so every value is the nearest double
    to the exact rational result.
    """
    if average not in ("macro", "micro"):
        raise ValueError(f"unknown average {average!r}")
    prec, rec, f1 = [], [], []
    for tp, fp, fn in zip(counts.tp, counts.fp, counts.fn):
        prec.append(_exact(tp, tp + fp))
        rec.append(_exact(tp, tp + fn))
        # 2PR/(P+R) reduces to 2TP/(2TP+FP+FN)
        f1.append(_exact(2 * tp, 2 * tp + fp + fn))
    if average == "macro":
        overall = sum(f1) / len(f1)
    else:
        tp, fp, fn = sum(counts.tp), sum(counts.fp), sum(counts.fn)
        overall = _exact(2 * tp, 2 * tp + fp + fn)
    as_float = lambda xs: tuple(float(x) for x in xs)  # noqa: E731
    return F1Report(as_float(prec), as_float(rec), as_float(f1), float(overall), average)


def evaluate_predictions(preds, truths, average="macro"):
    return f1_report(confusion(preds, truths), average)


def median(values):
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("median of an empty list")
    mid = len(vals) // 2
    return vals[mid] if len(vals) % 2 else (vals[mid - 1] + vals[mid]) / 2.0


# ----------------------------------------------------------------------- PPR

@dataclass(frozen=True)
class PprResult:
    value: float | None
    undefined: bool
    anomalous: bool

    def to_dict(self):
        return {"value": self.value, "undefined": self.undefined, "anomalous": self.anomalous}


def ppr(fh, fl, fr, eps=1e-9):
    """Share of the high-rate F1 gap recovered: ``(fr - fl) / (fh - fl)``.

    Undefined when ``|fh - fl| < eps``; negative values are returned as they
    are and marked anomalous.
    """
    for name, v in (("FH", fh), ("FL", fl), ("FR", fr)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} is not an F1 value in [0, 1]")
    if eps <= 0:
        raise ValueError("eps must be positive")
    gap = fh - fl
    if abs(gap) < eps:
        return PprResult(None, True, False)
    value = (fr - fl) / gap
    return PprResult(value, False, value < 0)


# ------------------------------------------------------------------- t-test

@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    significant: bool
    degenerate: bool = False

    def to_dict(self):
        t = self.t if math.isfinite(self.t) else ("inf" if self.t > 0 else "-inf")
        return {"t": t, "df": self.df, "p": self.p, "significant": self.significant, "degenerate": self.degenerate}


def t_sf_two_sided(t, df):
    """Two-sided tail ``P(|T| >= |t|)`` of Student's t via the regularized incomplete beta."""
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def paired_t_test(a, b, alpha=ALPHA):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = a - b
    df = n - 1
    if np.all(d == 0):
        return TTestResult(0.0, df, 1.0, False)
    sd = float(np.std(d, ddof=1))
    m = float(np.mean(d))
    if sd == 0.0:
        # spread can underflow for tiny differences; no mean shift then means no evidence
        if m == 0.0:
            return TTestResult(0.0, df, 1.0, False, degenerate=True)
        return TTestResult(math.copysign(math.inf, m), df, 0.0, True, degenerate=True)
    t = m / (sd / math.sqrt(n))
    p = t_sf_two_sided(t, df)
    return TTestResult(t, df, p, p < alpha)


# --------------------------------------------------------------- boxplot

@dataclass(frozen=True)
class BoxplotStats:
    q1: float
    median: float
    q3: float
    iqr: float
    lower_fence: float
    upper_fence: float
    outliers: tuple = field(default=())

    def to_dict(self):
        return {
            "q1": self.q1, "median": self.median, "q3": self.q3, "iqr": self.iqr,
            "lower_fence": self.lower_fence, "upper_fence": self.upper_fence,
            "outliers": list(self.outliers),
        }


def quantile(sorted_vals, p):
    """Linear interpolation at position ``p * (n - 1)``."""
    pos = p * (len(sorted_vals) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(sorted_vals) - 1)
    return sorted_vals[lo] + (pos - lo) * (sorted_vals[hi] - sorted_vals[lo])


def boxplot_stats(values):
    vals = sorted(float(v) for v in values)
    if len(vals) < 2:
        raise ValueError("boxplot statistics need at least two values")
    q1, q2, q3 = (quantile(vals, p) for p in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return BoxplotStats(q1, q2, q3, iqr, lo, hi, tuple(v for v in vals if v < lo or v > hi))
