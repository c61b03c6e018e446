"""Instrumentation over collected step traces and finished generations:
rank correlation, threshold sweeps, drift candidates, entropy summaries.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InconsistencyError

if TYPE_CHECKING:
    from .decoding import StepRecord
    from .threshold import StepTrace


def midranks(values) -> np.ndarray:
    """1-based ranks with ties sharing their average position."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float | None:
    """Spearman rank correlation: Pearson on midranks.

    Returns None when either input is constant (the correlation is
    undefined there, and reporting it as absent beats inventing a value).
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("inputs must be 1-d vectors of equal length")
    if xa.size < 2:
        raise ValueError("need at least two observations")
    rx = midranks(xa)
    ry = midranks(ya)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0.0:
        return None
    return float((dx * dy).sum() / denom)


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    pct_above: float
    avg_rank_above: float | None
    avg_rank_below: float | None


def sweep(traces: Sequence["StepTrace"], thresholds,
          max_rank_filter: int = 20) -> list[SweepPoint]:
    """Fraction-above and mean ground-truth rank on each side of a threshold.

    `pct_above` counts every trace. The two rank averages only see traces
    whose ground-truth rank is at most `max_rank_filter`, keeping a handful
    of deep-tail ranks from dominating the means; a side with no eligible
    traces reports its average as absent.
    """
    if not traces:
        raise ValueError("traces must be non-empty")
    ent = np.array([t.entropy for t in traces], dtype=np.float64)
    rank = np.array([t.gt_rank for t in traces], dtype=np.float64)
    eligible = rank <= max_rank_filter
    points = []
    for thr in thresholds:
        above = ent > thr
        ra = rank[above & eligible]
        rb = rank[~above & eligible]
        points.append(SweepPoint(
            threshold=float(thr),
            pct_above=float(above.mean()),
            avg_rank_above=float(ra.mean()) if ra.size else None,
            avg_rank_below=float(rb.mean()) if rb.size else None))
    return points


def write_sweep_csv(points: Sequence[SweepPoint], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "pct_above",
                         "avg_rank_above", "avg_rank_below"])
        for p in points:
            writer.writerow([
                repr(p.threshold), repr(p.pct_above),
                "" if p.avg_rank_above is None else repr(p.avg_rank_above),
                "" if p.avg_rank_below is None else repr(p.avg_rank_below)])


@dataclass(frozen=True)
class DriftCandidate:
    """First point where a generation left its reference solution."""

    index: int
    generated_token: int
    reference_token: int
    gt_rank_at_divergence: int
    entropy_at_divergence: float


def drift_candidates(generated, reference,
                     step_log: Sequence["StepRecord"]) -> DriftCandidate | None:
    """Locate and annotate the first token-level divergence.

    Returns None when one sequence is a prefix of the other (identical runs
    included): no divergence, nothing to rescue. The step log must describe
    the generated sequence; disagreement is an inconsistency, not a result.
    """
    gen = tuple(int(t) for t in generated)
    ref = tuple(int(t) for t in reference)
    idx = None
    for i in range(min(len(gen), len(ref))):
        if gen[i] != ref[i]:
            idx = i
            break
    if idx is None:
        return None
    if idx >= len(step_log):
        raise InconsistencyError(
            f"divergence at step {idx} but step log has {len(step_log)} entries")
    rec = step_log[idx]
    if rec.chosen != gen[idx]:
        raise InconsistencyError(
            f"step log chose token {rec.chosen} at step {idx} but the "
            f"generated sequence has {gen[idx]}")
    if not rec.ranked:
        raise InconsistencyError(
            f"step log carries no ranking at divergence step {idx}")
    rank = None
    for pos, (tok, _) in enumerate(rec.ranked):
        if tok == ref[idx]:
            rank = pos + 1
            break
    if rank is None:
        rank = len(rec.ranked) + 1  # truncated remote ranking: floor
    return DriftCandidate(index=idx, generated_token=gen[idx],
                          reference_token=ref[idx],
                          gt_rank_at_divergence=rank,
                          entropy_at_divergence=rec.entropy)


@dataclass(frozen=True)
class GroupStats:
    count: int
    mean: float
    median: float
    q1: float
    q3: float


def _stats(values) -> GroupStats:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("group must be non-empty")
    q1, med, q3 = np.percentile(v, [25.0, 50.0, 75.0])  # linear interpolation
    return GroupStats(count=int(v.size), mean=float(v.mean()),
                      median=float(med), q1=float(q1), q3=float(q3))


def entropy_summary(group_a, group_b) -> tuple[GroupStats, GroupStats]:
    """Location statistics for two groups of entropy values."""
    return _stats(group_a), _stats(group_b)
