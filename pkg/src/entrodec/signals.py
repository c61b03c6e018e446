"""Per-step uncertainty signals over next-token distributions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .lm import ProbStep

# Queries tolerate a bit more drift than mock construction does.
SUM_TOLERANCE = 1e-6


def _validated(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probs must be a non-empty 1-d vector")
    if np.any(p < 0.0):
        raise ValueError("probs must be non-negative")
    if abs(float(p.sum()) - 1.0) > SUM_TOLERANCE:
        raise ValueError(
            f"probs must sum to 1 within {SUM_TOLERANCE}, got {float(p.sum())!r}")
    return p


def entropy(probs) -> float:
    """Shannon entropy of a distribution, in nats.

    Zero-probability entries contribute nothing (0 log 0 = 0 by convention);
    they are masked rather than clamped so no epsilon leaks into the value.
    """
    p = _validated(probs)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def prob_diff(probs) -> float:
    """Top-1 minus top-2 probability; a single-entry vocabulary yields 1.0."""
    p = _validated(probs)
    if p.size == 1:
        return float(p[0])
    top2 = np.partition(p, -2)[-2:]
    return float(top2[1] - top2[0])


@dataclass(frozen=True)
class UncertaintySignal:
    """A named uncertainty measurement for one decoding step."""

    kind: str  # "entropy" | "prob-diff"
    value: float


def measure(step: "ProbStep", kind: str = "entropy") -> UncertaintySignal:
    """Measure a signal on a step. Entropy is the default pause signal."""
    if kind == "entropy":
        return UncertaintySignal("entropy", step.entropy)
    if kind == "prob-diff":
        if step.probs is None:
            raise ValueError("prob-diff needs a dense distribution")
        return UncertaintySignal("prob-diff", prob_diff(step.probs))
    raise ValueError(f"unknown signal kind {kind!r}")


def top_candidates(step: "ProbStep", count: int) -> tuple[tuple[int, float], ...]:
    """First min(count, nonzero support) of the ranked (token, logprob) list.

    Zero-probability tokens never qualify, so the result can be shorter than
    `count` on a peaked distribution.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    out = []
    for token, logprob in step.ranked:
        if logprob == float("-inf"):
            break  # ranked puts the zero-probability tail last
        out.append((token, logprob))
        if len(out) == count:
            break
    return tuple(out)


def rank_of(step: "ProbStep", token: int) -> int:
    """1-based rank of a token in the step's ordering.

    On a dense step this is total. On a sparse remote step a token missing
    from the truncated list gets len(ranked) + 1, a conservative floor.
    """
    if not 0 <= token < step.vocab_size:
        raise ValueError(
            f"token {token} outside vocabulary of size {step.vocab_size}")
    for i, (t, _) in enumerate(step.ranked):
        if t == token:
            return i + 1
    return len(step.ranked) + 1
