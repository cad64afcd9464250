"""Aggregation of scan counts across dimensions and power-law fitting."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AllZeroCounts, InsufficientData
from .ensemble import quantile_levels, quarter_circle_pdf
from .monodromy import KIND_COALESCENCE, KIND_RANK_LOSS


class CountRow(NamedTuple):
    """Event totals of one scan: dimension, realization index, counts."""

    n: int
    realization: int
    coalescence: int
    rank_loss: int
    inconclusive: int


def count_series_from_reports(reports):
    """Count rows from scan reports, one per (dimension, realization).

    Coalescence and rank-loss events found at any refinement depth count
    directly.  Composite boxes that refinement failed to decode carry at
    least one undecoded event each, so they are pooled with the
    inconclusive boxes rather than guessed into a kind.
    """
    rows = []
    for rep in reports:
        coal = sum(1 for e in rep.events if e.kind == KIND_COALESCENCE)
        rank = sum(1 for e in rep.events if e.kind == KIND_RANK_LOSS)
        undecoded = sum(1 for e in rep.events if e.kind not in (KIND_COALESCENCE, KIND_RANK_LOSS))
        rows.append(
            CountRow(
                n=rep.n,
                realization=int(rep.meta.get("realization", 0)),
                coalescence=coal,
                rank_loss=rank,
                inconclusive=undecoded,
            )
        )
    rows.sort(key=lambda r: (r.n, r.realization))
    return rows


@dataclass(frozen=True)
class FitResult:
    """Power law count = c * n^q from a log-log least squares fit."""

    c: float
    q: float
    residual: float  # RMS of log residuals
    point_count: int
    excluded: int = 0  # zero-count rows left out of the fit

    def to_dict(self):
        return {
            "c": self.c,
            "q": self.q,
            "residual": self.residual,
            "pointCount": self.point_count,
            "excluded": self.excluded,
        }


def fit_power_law(series):
    """Ordinary least squares on (log n, log count).

    ``series`` is an iterable of (n, count) pairs.  Zero-count rows
    cannot enter a log fit; they are excluded and reported in the result.
    Requires at least two distinct dimensions among the kept rows.
    """
    data = [(int(n), float(count)) for n, count in series]
    if not data:
        raise InsufficientData("empty series")
    kept = [(n, c) for n, c in data if c > 0.0]
    excluded = len(data) - len(kept)
    if not kept:
        raise AllZeroCounts(f"all {len(data)} rows have zero counts")
    ns = np.array([n for n, _ in kept], dtype=float)
    cs = np.array([c for _, c in kept])
    if np.unique(ns).size < 2:
        raise InsufficientData("need counts from at least two distinct dimensions")
    x = np.log(ns)
    y = np.log(cs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return FitResult(
        c=float(np.exp(intercept)),
        q=float(slope),
        residual=float(np.sqrt(np.mean(resid**2))),
        point_count=len(kept),
        excluded=excluded,
    )


@dataclass(frozen=True)
class AsymptoticCounts:
    """Degeneracy-count model rho(s_k)^p evaluated on the quantile levels.

    ``per_pair[k-1]`` is the expected number of coalescences of the pair
    (sigma_k, sigma_k+1), up to the model constant (reported with c = 1);
    ``rank_loss`` is the density at sigma = 0 raised to p, the analogous
    rank-loss rate; ``total`` sums per_pair.  As n grows, total scales
    like n^(p/2 + 1) and the per-pair and rank-loss rates like n^(p/2).
    """

    per_pair: np.ndarray
    rank_loss: float
    total: float


def expected_count_asymptotics(n, p):
    """Evaluate the count model at dimension n with density exponent p."""
    levels = quantile_levels(n)
    per_pair = np.array([quarter_circle_pdf(n, levels[k]) ** p for k in range(1, n)])
    return AsymptoticCounts(
        per_pair=per_pair,
        rank_loss=float(quarter_circle_pdf(n, 0.0) ** p),
        total=float(per_pair.sum()),
    )
