"""Model backend abstraction: probability steps, sessions, and table mocks.

Everything downstream (decoding, threshold learning, the eval harness) talks
to a language model through the surface in this module: open a session on a
token prefix, ask for the next-token distribution, append a token, repeat.
Backends are deterministic by contract, so identical prefixes must yield
identical distributions; that is what makes exhaustive test oracles possible.
"""

from __future__ import annotations

import abc
import json
from dataclasses import dataclass

import numpy as np

from .errors import ContextLimitError
from .signals import entropy

# Mock definition vectors must be normalized to this tolerance at build time.
MOCK_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ProbStep:
    """One next-token distribution, dense or sparse.

    Attributes:
        vocab_size: Size of the token id space the distribution lives in.
        entropy: Shannon entropy of the full distribution, in nats. For
            sparse steps this is the backend-reported value, passed through.
        ranked: (token, logprob) pairs sorted by probability descending, ties
            broken toward the lower token id. Dense steps rank the whole
            vocabulary (zero-probability tokens trail with logprob -inf);
            sparse steps carry only the backend's top-M slice.
        probs: Dense probability vector, or None for a sparse remote step.
    """

    vocab_size: int
    entropy: float
    ranked: tuple[tuple[int, float], ...]
    probs: np.ndarray | None = None

    @classmethod
    def from_probs(cls, probs) -> "ProbStep":
        """Build a dense step from a probability vector.

        The vector is validated (non-negative, mass 1 within the signal
        tolerance) and quietly renormalized so downstream cumulative sums hit
        1.0 exactly.
        """
        p = np.asarray(probs, dtype=np.float64)
        h = entropy(p)  # also validates shape, sign, and mass
        p = p / p.sum()
        order = np.lexsort((np.arange(p.size), -p))
        with np.errstate(divide="ignore"):
            logp = np.log(p)
        ranked = tuple((int(i), float(logp[i])) for i in order)
        return cls(vocab_size=int(p.size), entropy=h, ranked=ranked, probs=p)

    @classmethod
    def sparse(cls, vocab_size: int, entropy: float, top) -> "ProbStep":
        """Build a sparse step from a backend-reported entropy and top list.

        `top` is an iterable of (token, logprob); it is re-sorted locally so
        the tie-break contract holds regardless of backend ordering.
        """
        ranked = tuple(sorted(((int(t), float(lp)) for t, lp in top),
                              key=lambda e: (-e[1], e[0])))
        return cls(vocab_size=int(vocab_size), entropy=float(entropy),
                   ranked=ranked, probs=None)


@dataclass(frozen=True)
class Session:
    """An immutable cursor over a token prefix on some model.

    `append` returns a new session and leaves the receiver untouched, so a
    caller can branch (lookahead rollouts do) without copying state back.
    """

    model: "LanguageModel"
    prefix: tuple[int, ...]

    def step(self) -> ProbStep:
        """Next-token distribution conditioned on the current prefix."""
        return self.model.distribution(self.prefix)

    def append(self, token: int) -> "Session":
        self.model.check_token(token)
        limit = self.model.context_limit
        if limit is not None and len(self.prefix) + 1 > limit:
            raise ContextLimitError(
                f"prefix of length {len(self.prefix) + 1} exceeds context "
                f"limit {limit}")
        return Session(self.model, self.prefix + (token,))


class LanguageModel(abc.ABC):
    """Deterministic next-token distribution source."""

    vocab_size: int
    eos_token: int
    context_limit: int | None = None

    def check_token(self, token: int) -> None:
        if not isinstance(token, (int, np.integer)) or isinstance(token, bool):
            raise ValueError(f"token must be an integer, got {token!r}")
        if not 0 <= token < self.vocab_size:
            raise ValueError(
                f"token {token} outside vocabulary of size {self.vocab_size}")

    def session(self, prefix) -> Session:
        """Open a session on a prefix, validating every token id."""
        pfx = tuple(int(t) for t in prefix)
        for t in pfx:
            self.check_token(t)
        if self.context_limit is not None and len(pfx) > self.context_limit:
            raise ContextLimitError(
                f"prompt of length {len(pfx)} exceeds context limit "
                f"{self.context_limit}")
        return Session(self, pfx)

    @abc.abstractmethod
    def distribution(self, prefix: tuple[int, ...]) -> ProbStep:
        """Next-token distribution for a prefix. Must be deterministic."""


def _check_vector(vec, vocab_size: int, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (vocab_size,):
        raise ValueError(f"{what} must have length {vocab_size}, got {v.shape}")
    if np.any(v < 0.0):
        raise ValueError(f"{what} has negative entries")
    if abs(float(v.sum()) - 1.0) > MOCK_SUM_TOL:
        raise ValueError(
            f"{what} must sum to 1 within {MOCK_SUM_TOL}, got {float(v.sum())!r}")
    return v


class TableMockModel(LanguageModel):
    """Rule-table mock backend for desk-scale experiments and tests.

    Rules map a token-suffix pattern to a full next-token distribution. At
    query time the longest suffix matching the end of the prefix wins; equal
    lengths resolve to the earliest inserted rule. Prefixes matching no rule
    fall back to the default vector.
    """

    def __init__(self, vocab_size: int, eos_token: int, rules, default,
                 context_limit: int | None = None):
        if vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        self.vocab_size = int(vocab_size)
        if not 0 <= eos_token < vocab_size:
            raise ValueError(f"eos_token {eos_token} outside vocabulary")
        self.eos_token = int(eos_token)
        self.context_limit = context_limit
        self._default = _check_vector(default, self.vocab_size, "default vector")
        self._rules: list[tuple[tuple[int, ...], np.ndarray]] = []
        for i, (suffix, probs) in enumerate(rules):
            sfx = tuple(int(t) for t in suffix)
            for t in sfx:
                if not 0 <= t < vocab_size:
                    raise ValueError(f"rule {i}: token {t} outside vocabulary")
            self._rules.append(
                (sfx, _check_vector(probs, self.vocab_size, f"rule {i} probs")))

    def distribution(self, prefix: tuple[int, ...]) -> ProbStep:
        best: np.ndarray | None = None
        best_len = -1
        for suffix, probs in self._rules:
            n = len(suffix)
            if n <= len(prefix) and tuple(prefix[len(prefix) - n:]) == suffix:
                if n > best_len:  # strict: insertion order wins length ties
                    best, best_len = probs, n
        return ProbStep.from_probs(self._default if best is None else best)

    def to_json_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "eos_token": self.eos_token,
            "rules": [{"suffix": list(s), "probs": [float(x) for x in p]}
                      for s, p in self._rules],
            "default": [float(x) for x in self._default],
        }


def make_table_mock(rules, default, *, eos_token: int,
                    context_limit: int | None = None) -> TableMockModel:
    """Build a table mock; vocabulary size is the default vector's length."""
    default = np.asarray(default, dtype=np.float64)
    return TableMockModel(vocab_size=default.size, eos_token=eos_token,
                          rules=rules, default=default,
                          context_limit=context_limit)


def mock_from_json(data: dict) -> TableMockModel:
    """Build a table mock from its JSON definition dict."""
    try:
        vocab_size = int(data["vocab_size"])
        eos_token = int(data["eos_token"])
        rules = [(r["suffix"], r["probs"]) for r in data.get("rules", [])]
        default = data["default"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed mock model definition: {exc}") from exc
    return TableMockModel(vocab_size, eos_token, rules, default,
                          context_limit=data.get("context_limit"))


def load_mock_file(path) -> TableMockModel:
    with open(path, "r", encoding="utf-8") as fh:
        return mock_from_json(json.load(fh))
