"""Decoding strategies: greedy, sampling, beam, two-temperature, and the
entropy-gated pause-then-rerank decoder.

All decoders share one driver loop and return a `GenerationResult` whose step
log carries enough per-step detail (entropy, ranked list, pause trajectories)
to audit a run after the fact without touching the model again.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ContextLimitError
from .lm import LanguageModel, ProbStep, Session
from .signals import top_candidates

NEVER_PAUSE = math.inf
ALWAYS_PAUSE = -math.inf


def parse_tau(value) -> float:
    """Map a config value to a pause threshold.

    "never-pause" / "always-pause" are the serializable spellings of the
    +inf / -inf sentinels; anything else must parse as a float.
    """
    if isinstance(value, str):
        if value == "never-pause":
            return NEVER_PAUSE
        if value == "always-pause":
            return ALWAYS_PAUSE
        return float(value)
    return float(value)


def format_tau(tau: float) -> float | str:
    """Inverse of `parse_tau` for writing strict JSON."""
    if tau == NEVER_PAUSE:
        return "never-pause"
    if tau == ALWAYS_PAUSE:
        return "always-pause"
    return float(tau)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_POLICY_KINDS = ("greedy", "temperature", "top_k", "top_p")
_STRATEGIES = ("adaptive", "base", "beam", "line-temp")


@dataclass(frozen=True)
class BasePolicy:
    """Token selection rule applied at non-paused steps.

    kind "greedy" ignores the other fields. "temperature" rescales the
    distribution by 1/T before sampling; "top_k" and "top_p" additionally
    filter it (k most probable tokens, or the smallest probability-sorted
    prefix reaching mass p) and renormalize.
    """

    kind: str = "greedy"
    temperature: float = 1.0
    k: int | None = None
    p: float | None = None

    def __post_init__(self):
        if self.kind not in _POLICY_KINDS:
            raise ValueError(f"unknown base policy kind {self.kind!r}")
        if self.kind != "greedy" and not self.temperature > 0.0:
            raise ValueError("temperature must be positive")
        if self.kind == "top_k" and (self.k is None or self.k < 1):
            raise ValueError("top_k policy needs k >= 1")
        if self.kind == "top_p" and not (self.p is not None and 0.0 < self.p <= 1.0):
            raise ValueError("top_p policy needs 0 < p <= 1")


@dataclass(frozen=True)
class DecodeConfig:
    """Everything a decoding run needs besides the model and the prompt.

    Attributes:
        strategy: "adaptive" (entropy-gated pause-then-rerank), "base"
            (the base policy at every step), "beam", or "line-temp".
        base_policy: Selection rule at non-paused steps.
        tau: Pause threshold in nats; a step pauses iff entropy > tau.
            +inf ("never-pause") and -inf ("always-pause") are sentinels.
            None defers to a learned threshold model at call time.
        candidates: Pool size B reranked at a pause.
        lookahead: Greedy rollout length L per candidate.
        max_len: Hard cap on generated tokens, EOS included.
        seed: Seed for the sampling stream; deterministic across runs.
        beam_width: Beam size for the "beam" strategy.
        high_temp / low_temp: Line-start and in-line temperatures for the
            "line-temp" strategy.
    """

    strategy: str = "adaptive"
    base_policy: BasePolicy = field(default_factory=BasePolicy)
    tau: float | None = None
    candidates: int = 3
    lookahead: int = 5
    max_len: int = 1024
    seed: int = 0
    beam_width: int = 3
    high_temp: float = 0.5
    low_temp: float = 0.05

    def __post_init__(self):
        if self.strategy not in _STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.candidates < 1:
            raise ValueError("candidates must be at least 1")
        if self.lookahead < 0:
            raise ValueError("lookahead must be non-negative")
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")
        if self.beam_width < 1:
            raise ValueError("beam_width must be at least 1")

    def to_json_dict(self) -> dict:
        d = {
            "strategy": self.strategy,
            "base_policy": {"kind": self.base_policy.kind,
                            "temperature": self.base_policy.temperature,
                            "k": self.base_policy.k,
                            "p": self.base_policy.p},
            "tau": None if self.tau is None else format_tau(self.tau),
            "candidates": self.candidates,
            "lookahead": self.lookahead,
            "max_len": self.max_len,
            "seed": self.seed,
            "beam_width": self.beam_width,
            "high_temp": self.high_temp,
            "low_temp": self.low_temp,
        }
        return d


# ---------------------------------------------------------------------------
# Result types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """One candidate's greedy lookahead rollout at a pause.

    The continuation is advisory: scoring looked at it, emission did not.
    `score` is the mean log-probability over the candidate plus however many
    continuation tokens were actually scored (EOS ends the rollout early and
    still counts).
    """

    token: int
    token_logprob: float
    continuation: tuple[int, ...]
    continuation_logprobs: tuple[float, ...]
    score: float

    @property
    def cont_len(self) -> int:
        return len(self.continuation)


@dataclass(frozen=True)
class StepRecord:
    """One emitted token with the evidence behind it."""

    index: int
    entropy: float
    paused: bool
    chosen: int
    ranked: tuple[tuple[int, float], ...]
    trajectories: tuple[Trajectory, ...] | None = None


@dataclass(frozen=True)
class GenerationResult:
    tokens: tuple[int, ...]
    step_log: tuple[StepRecord, ...]
    finished_reason: str  # "eos" | "max_len"

    @property
    def pause_rate(self) -> float:
        if not self.step_log:
            return 0.0
        return sum(1 for r in self.step_log if r.paused) / len(self.step_log)

    def step_log_lines(self) -> list[dict]:
        """Step log as JSON-ready dicts, one per emitted token."""
        lines = []
        for rec in self.step_log:
            line: dict = {"idx": rec.index, "entropy": rec.entropy,
                          "paused": rec.paused, "chosen": rec.chosen}
            if rec.trajectories is not None:
                line["candidates"] = [
                    {"token": t.token, "logprob": t.token_logprob,
                     "score": t.score, "cont_len": t.cont_len}
                    for t in rec.trajectories]
            lines.append(line)
        return lines


def write_step_log(result: GenerationResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in result.step_log_lines():
            fh.write(json.dumps(line) + "\n")


# ---------------------------------------------------------------------------
# Base policy selection
# ---------------------------------------------------------------------------

def _ranked_probs(step: ProbStep) -> tuple[np.ndarray, np.ndarray]:
    """Tokens and probabilities in ranked order.

    Dense steps read the stored vector; sparse steps renormalize the
    exponentiated top-M logprobs, which is the best view the wire gives us.
    """
    tokens = np.array([t for t, _ in step.ranked], dtype=np.int64)
    if step.probs is not None:
        probs = step.probs[tokens]
    else:
        logps = np.array([lp for _, lp in step.ranked], dtype=np.float64)
        probs = np.exp(logps - logps.max())
        probs /= probs.sum()
    return tokens, probs


def _sample_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    # Inverse-CDF draw; one uniform per emitted token keeps seed reduction
    # arguments (same stream, same distribution -> same token) exact.
    cum = np.cumsum(weights)
    u = rng.random() * cum[-1]
    return min(int(np.searchsorted(cum, u, side="right")), weights.size - 1)


def _select_base(step: ProbStep, policy: BasePolicy,
                 rng: np.random.Generator) -> int:
    if policy.kind == "greedy":
        return step.ranked[0][0]
    tokens, probs = _ranked_probs(step)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    scaled = logp / policy.temperature
    scaled -= scaled.max()
    weights = np.exp(scaled)
    weights /= weights.sum()
    if policy.kind == "top_k":
        keep = min(policy.k, weights.size)
    elif policy.kind == "top_p":
        if policy.p >= 1.0:
            keep = weights.size
        else:
            cum = np.cumsum(weights)
            # The epsilon keeps binary rounding (0.5 + 0.3 < 0.8) from
            # pulling one extra token into the nucleus.
            keep = int(np.searchsorted(cum, policy.p - 1e-12, side="left")) + 1
            keep = min(keep, weights.size)
    else:
        keep = weights.size
    idx = _sample_index(weights[:keep], rng)
    return int(tokens[idx])


def _temp_policy(t: float) -> BasePolicy:
    return BasePolicy(kind="temperature", temperature=t)


# ---------------------------------------------------------------------------
# Lookahead scoring
# ---------------------------------------------------------------------------

def lookahead_score(model: LanguageModel, session: Session, token: int,
                    token_logprob: float, steps: int) -> Trajectory:
    """Score a candidate by a short greedy rollout.

    Args:
        model: Backend the rollout queries.
        session: Session positioned just before the candidate; it is branched,
            never mutated, so the caller can keep using it.
        token: Candidate token under evaluation.
        token_logprob: Its log-probability at the current step.
        steps: Maximum rollout length L. Zero means score = token_logprob.

    Returns:
        A `Trajectory` whose score is the mean log-probability over the
        candidate and the rollout tokens actually scored. The rollout stops
        at EOS (that step still counts) or at the backend context limit.
    """
    cont: list[int] = []
    cont_lps: list[float] = []
    if token != model.eos_token and steps > 0:
        cursor = session.append(token)
        for _ in range(steps):
            try:
                step = cursor.step()
            except ContextLimitError:
                break
            nxt, lp = step.ranked[0]
            cont.append(nxt)
            cont_lps.append(lp)
            if nxt == model.eos_token:
                break
            try:
                cursor = cursor.append(nxt)
            except ContextLimitError:
                break
    score = (token_logprob + sum(cont_lps)) / (1 + len(cont))
    return Trajectory(token=token, token_logprob=token_logprob,
                      continuation=tuple(cont),
                      continuation_logprobs=tuple(cont_lps), score=score)


# ---------------------------------------------------------------------------
# Linear decoders (one emitted token per step)
# ---------------------------------------------------------------------------

def _drive(model: LanguageModel, prompt, max_len: int, choose) -> GenerationResult:
    """Shared loop: step, choose, record, append, until EOS or max_len.

    `choose(idx, step, session, emitted)` returns (token, paused,
    trajectories) and must not advance the session itself.
    """
    session = model.session(prompt)
    tokens: list[int] = []
    records: list[StepRecord] = []
    reason = "max_len"
    for idx in range(max_len):
        step = session.step()
        token, paused, trajs = choose(idx, step, session, tokens)
        records.append(StepRecord(index=idx, entropy=step.entropy,
                                  paused=paused, chosen=token,
                                  ranked=step.ranked, trajectories=trajs))
        tokens.append(token)
        if token == model.eos_token:
            reason = "eos"
            break
        session = session.append(token)
    return GenerationResult(tuple(tokens), tuple(records), reason)


def decode_greedy(model: LanguageModel, prompt,
                  max_len: int = 1024) -> GenerationResult:
    """Argmax decoding; ties go to the lower token id via the ranked order."""

    def choose(idx, step, session, emitted):
        return step.ranked[0][0], False, None

    return _drive(model, prompt, max_len, choose)


def decode_sampling(model: LanguageModel, prompt,
                    config: DecodeConfig) -> GenerationResult:
    """Base policy at every step: greedy, temperature, top-k, or top-p."""
    rng = np.random.default_rng(config.seed)

    def choose(idx, step, session, emitted):
        return _select_base(step, config.base_policy, rng), False, None

    return _drive(model, prompt, config.max_len, choose)


def decode_line_temperature(model: LanguageModel, prompt, config: DecodeConfig,
                            line_start: Callable[[int], bool] | None = None
                            ) -> GenerationResult:
    """Two-temperature sampling keyed on line position.

    Steps at a line start (step 0, or the previous emitted token satisfies
    `line_start`) sample at `config.high_temp`; everything else samples at
    `config.low_temp`. Without a predicate only step 0 counts as a line
    start, which is all the pre-tokenized desk mocks need.
    """
    rng = np.random.default_rng(config.seed)

    def choose(idx, step, session, emitted):
        at_start = idx == 0 or (line_start is not None and line_start(emitted[-1]))
        temp = config.high_temp if at_start else config.low_temp
        return _select_base(step, _temp_policy(temp), rng), False, None

    return _drive(model, prompt, config.max_len, choose)


def decode_adaptive(model: LanguageModel, prompt,
                    config: DecodeConfig) -> GenerationResult:
    """Entropy-gated pause-then-rerank decoding.

    Each step measures the entropy of the next-token distribution. At or
    below `config.tau` the base policy picks the token. Strictly above it the
    step pauses: the top `config.candidates` tokens are each scored by a
    greedy rollout of `config.lookahead` steps (`lookahead_score`), and the
    best-scoring candidate token is emitted. Only that one token is
    committed; the rollout itself is advisory. Score ties resolve to the
    candidate with higher immediate probability, then the lower token id,
    which is exactly the ranked candidate order.

    Raises:
        ValueError: If `config.tau` is None; resolve a learned threshold
            into the config before calling.
    """
    if config.tau is None:
        raise ValueError("decode_adaptive needs a resolved tau "
                         "(float or a never-pause/always-pause sentinel)")
    tau = config.tau
    rng = np.random.default_rng(config.seed)

    def choose(idx, step, session, emitted):
        if step.entropy > tau:
            pool = top_candidates(step, config.candidates)
            trajs = tuple(
                lookahead_score(model, session, tok, lp, config.lookahead)
                for tok, lp in pool)
            best = trajs[0]
            for t in trajs[1:]:
                if t.score > best.score:  # strict keeps ranked-order tie-break
                    best = t
            return best.token, True, trajs
        return _select_base(step, config.base_policy, rng), False, None

    return _drive(model, prompt, config.max_len, choose)


# ---------------------------------------------------------------------------
# Beam search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Hyp:
    tokens: tuple[int, ...]
    logprobs: tuple[float, ...]
    entropies: tuple[float, ...]
    rankings: tuple[tuple[tuple[int, float], ...], ...]
    score: float
    session: Session | None  # None once finished


def decode_beam(model: LanguageModel, prompt, beam_width: int,
                max_len: int = 1024) -> GenerationResult:
    """Length-synchronous beam search over cumulative log-probability.

    Every step expands each live hypothesis over its top `beam_width`
    candidates, keeps the global top `beam_width` expansions, and retires
    EOS-ended ones to a finished pool. The result is the best finished
    hypothesis, or the best live one if nothing finished by `max_len`.
    Score ties resolve to the lexicographically smaller token sequence.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be at least 1")
    root = model.session(prompt)
    live: list[_Hyp] = [_Hyp((), (), (), (), 0.0, root)]
    finished: list[_Hyp] = []
    for _ in range(max_len):
        if not live:
            break
        expansions: list[tuple[float, tuple[int, ...], _Hyp, int, float, ProbStep]] = []
        for hyp in live:
            step = hyp.session.step()
            for tok, lp in top_candidates(step, beam_width):
                expansions.append((hyp.score + lp, hyp.tokens + (tok,),
                                   hyp, tok, lp, step))
        expansions.sort(key=lambda e: (-e[0], e[1]))
        live = []
        for score, toks, parent, tok, lp, step in expansions[:beam_width]:
            child = _Hyp(toks, parent.logprobs + (lp,),
                         parent.entropies + (step.entropy,),
                         parent.rankings + (step.ranked,), score, None)
            if tok == model.eos_token:
                finished.append(child)
            else:
                live.append(replace(child, session=parent.session.append(tok)))
    pool = finished if finished else live
    best = min(pool, key=lambda h: (-h.score, h.tokens))
    reason = "eos" if finished else "max_len"
    records = tuple(
        StepRecord(index=i, entropy=e, paused=False, chosen=t, ranked=r)
        for i, (t, e, r) in enumerate(
            zip(best.tokens, best.entropies, best.rankings)))
    return GenerationResult(best.tokens, records, reason)


# ---------------------------------------------------------------------------
# Strategy dispatch
# ---------------------------------------------------------------------------

def generate(model: LanguageModel, prompt, config: DecodeConfig,
             line_start: Callable[[int], bool] | None = None) -> GenerationResult:
    """Run the decoder selected by `config.strategy`."""
    if config.strategy == "adaptive":
        return decode_adaptive(model, prompt, config)
    if config.strategy == "base":
        return decode_sampling(model, prompt, config)
    if config.strategy == "beam":
        return decode_beam(model, prompt, config.beam_width, config.max_len)
    if config.strategy == "line-temp":
        return decode_line_temperature(model, prompt, config, line_start)
    raise ValueError(f"unknown strategy {config.strategy!r}")


def with_tau(config: DecodeConfig, tau: float) -> DecodeConfig:
    return replace(config, tau=tau)
