"""FastAPI app exposing the step protocol.

    GET  /v1/meta -> {model_id, vocab_size, eos_token, context_limit}
    POST /v1/step {tokens | text, top_m} ->
         {entropy, top: [{token, logprob}, ...], eos_token, vocab_size}

Entropy is computed server-side over the full distribution and shipped as
a scalar; the top list carries only min(top_m, vocab) entries. A decoder's
pause decision therefore never depends on how much of the tail crossed the
wire. The server is stateless: every request carries the whole prefix.

Structured errors use HTTP 4xx with a {"detail": {"type": ...}} body; the
type "context_limit" marks prefixes longer than the served window.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .backend import StepBackend

DEFAULT_TOP_M = 64


class StepRequest(BaseModel):
    tokens: list[int] | None = None
    text: str | None = None
    top_m: int = DEFAULT_TOP_M


def _bad(kind: str, msg: str, **extra) -> HTTPException:
    return HTTPException(status_code=400,
                         detail={"type": kind, "msg": msg, **extra})


def full_entropy(logprobs: np.ndarray) -> float:
    """Shannon entropy in nats from a full log-distribution."""
    lp = np.asarray(logprobs, dtype=np.float64)
    p = np.exp(lp)
    mask = p > 0.0
    return float(-(p[mask] * lp[mask]).sum())


def top_slice(logprobs: np.ndarray, top_m: int) -> list[dict]:
    """The top-m entries sorted by logprob descending, token id ascending."""
    lp = np.asarray(logprobs, dtype=np.float64)
    order = np.lexsort((np.arange(lp.size), -lp))[:min(top_m, lp.size)]
    return [{"token": int(t), "logprob": float(lp[t])} for t in order]


def create_app(backend: StepBackend) -> FastAPI:
    app = FastAPI(title="entrodec-bridge")
    app.state.backend = backend

    @app.get("/v1/meta")
    def meta() -> dict:
        return {"model_id": backend.model_id,
                "vocab_size": backend.vocab_size,
                "eos_token": backend.eos_token,
                "context_limit": backend.context_limit}

    @app.post("/v1/step")
    def step(request: StepRequest) -> dict:
        if request.top_m < 1:
            raise _bad("bad_request", "top_m must be at least 1")
        if (request.tokens is None) == (request.text is None):
            raise _bad("bad_request",
                       "exactly one of 'tokens' and 'text' is required")
        if request.text is not None:
            tokens = backend.encode(request.text)
            if tokens is None:
                raise _bad("no_tokenizer",
                           "this checkpoint serves no tokenizer; send tokens")
        else:
            tokens = list(request.tokens)
        if not tokens:
            raise _bad("bad_request", "prefix must contain at least one token")
        for t in tokens:
            if not 0 <= t < backend.vocab_size:
                raise _bad("bad_request",
                           f"token {t} outside vocabulary of size "
                           f"{backend.vocab_size}")
        if len(tokens) > backend.context_limit:
            raise _bad("context_limit",
                       f"prefix of {len(tokens)} tokens exceeds the context "
                       f"window", limit=backend.context_limit)
        logprobs = backend.full_logprobs(tokens)
        return {"entropy": full_entropy(logprobs),
                "top": top_slice(logprobs, request.top_m),
                "eos_token": backend.eos_token,
                "vocab_size": backend.vocab_size}

    return app
