from __future__ import annotations

import numpy as np
import pytest
from fastapi.testclient import TestClient

from entrodec_bridge import TorchCausalBackend, create_app, make_tiny_checkpoint


class StubBackend:
    """Scripted backend for exercising server validation paths.

    Vocab 4, uniform distribution regardless of prefix.  ``encode``
    returns a fixed id list, or None when constructed tokenizer-free.
    """

    def __init__(self, with_tokenizer: bool = True) -> None:
        self.model_id = "stub"
        self.vocab_size = 4
        self.eos_token = 3
        self.context_limit = 6
        self._with_tokenizer = with_tokenizer

    def full_logprobs(self, tokens) -> np.ndarray:
        return np.full(self.vocab_size, -np.log(self.vocab_size), dtype=np.float64)

    def encode(self, text: str) -> list[int] | None:
        if not self._with_tokenizer:
            return None
        return [1, 2]


@pytest.fixture(scope="session")
def tiny_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "tiny"
    make_tiny_checkpoint(path, seed=0)
    return path


@pytest.fixture(scope="session")
def backend(tiny_dir):
    return TorchCausalBackend(tiny_dir)


@pytest.fixture(scope="session")
def client(backend):
    with TestClient(create_app(backend)) as c:
        yield c


@pytest.fixture()
def stub_client():
    with TestClient(create_app(StubBackend())) as c:
        yield c
