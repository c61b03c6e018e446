"""HTTP client backend speaking the sidecar step protocol.

The sidecar exposes two endpoints:

    GET  /v1/meta -> {model_id, vocab_size, eos_token, context_limit}
    POST /v1/step {tokens: [...], top_m: int}
                  -> {entropy, top: [{token, logprob}, ...],
                      eos_token, vocab_size}

The server computes entropy over its full distribution before truncating to
top-M; this client passes that value through untouched so the pause decision
never depends on how much of the tail crossed the wire. Context overflows
come back as a 4xx whose body carries type "context_limit" and map to
`ContextLimitError`; every other failure maps to `BackendError`.
"""

from __future__ import annotations

import requests

from .errors import BackendError, ContextLimitError
from .lm import LanguageModel, ProbStep

DEFAULT_TOP_M = 64
BRIDGE_URL_ENV = "ENTRODEC_BRIDGE_URL"


def _error_type(response) -> str | None:
    try:
        detail = response.json().get("detail")
    except ValueError:
        return None
    if isinstance(detail, dict):
        return detail.get("type")
    return None


class RemoteModel(LanguageModel):
    """Language model served over the step protocol."""

    def __init__(self, base_url: str, top_m: int = DEFAULT_TOP_M,
                 timeout: float = 30.0, http: requests.Session | None = None):
        if top_m < 1:
            raise ValueError("top_m must be at least 1")
        self._base = base_url.rstrip("/")
        self._top_m = top_m
        self._timeout = timeout
        self._http = http or requests.Session()
        meta = self.fetch_meta()
        try:
            self.model_id = str(meta["model_id"])
            self.vocab_size = int(meta["vocab_size"])
            self.eos_token = int(meta["eos_token"])
            limit = meta.get("context_limit")
            self.context_limit = None if limit is None else int(limit)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed meta response: {exc}") from exc

    def fetch_meta(self) -> dict:
        try:
            resp = self._http.get(f"{self._base}/v1/meta",
                                  timeout=self._timeout)
        except requests.RequestException as exc:
            raise BackendError(f"meta request failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(
                f"meta request returned HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError("meta response is not JSON") from exc

    def distribution(self, prefix: tuple[int, ...]) -> ProbStep:
        payload = {"tokens": [int(t) for t in prefix], "top_m": self._top_m}
        try:
            resp = self._http.post(f"{self._base}/v1/step", json=payload,
                                   timeout=self._timeout)
        except requests.RequestException as exc:
            raise BackendError(f"step request failed: {exc}") from exc
        if 400 <= resp.status_code < 500:
            if _error_type(resp) == "context_limit":
                raise ContextLimitError(
                    f"server rejected prefix of length {len(prefix)}")
            raise BackendError(
                f"step request rejected: HTTP {resp.status_code} {resp.text!r}")
        if resp.status_code != 200:
            raise BackendError(f"step request returned HTTP {resp.status_code}")
        try:
            body = resp.json()
            top = [(e["token"], e["logprob"]) for e in body["top"]]
            return ProbStep.sparse(vocab_size=int(body["vocab_size"]),
                                   entropy=float(body["entropy"]), top=top)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed step response: {exc}") from exc
