import numpy as np
import pytest

from entrodec import make_table_mock


def one_hot(size: int, index: int) -> list[float]:
    v = [0.0] * size
    v[index] = 1.0
    return v


@pytest.fixture
def chain_mock():
    """Mock that deterministically emits a fixed token chain after a prompt.

    Rules key on the full prefix so the chain cannot alias itself.
    """

    def build(prompt, chain, vocab_size, eos_token, context_limit=None):
        rules = []
        prefix = tuple(prompt)
        for tok in chain:
            rules.append((prefix, one_hot(vocab_size, tok)))
            prefix = prefix + (tok,)
        return make_table_mock(rules, one_hot(vocab_size, eos_token),
                               eos_token=eos_token,
                               context_limit=context_limit)

    return build


def random_mock(rng: np.random.Generator, vocab_size: int, eos_token: int,
                n_rules: int, max_suffix: int = 2):
    """Random rule table with exactly normalized distributions."""

    def vector():
        v = rng.random(vocab_size) + 0.05
        return v / v.sum()

    rules = []
    for _ in range(n_rules):
        length = int(rng.integers(1, max_suffix + 1))
        suffix = [int(t) for t in rng.integers(0, vocab_size, size=length)]
        rules.append((suffix, vector()))
    return make_table_mock(rules, vector(), eos_token=eos_token)
