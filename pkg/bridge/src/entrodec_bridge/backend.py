"""Model backends: anything that can score one more token.

A backend owns the checkpoint and answers two questions: the full
next-token log-distribution for a prefix, and (when a tokenizer is
available) the token ids for a text prompt. All policy logic lives in the
client; the backend is a pure scoring function.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol, Sequence

import numpy as np


class StepBackend(Protocol):
    model_id: str
    vocab_size: int
    eos_token: int
    context_limit: int

    def full_logprobs(self, tokens: Sequence[int]) -> np.ndarray:
        """Log-probabilities over the whole vocabulary, float64, 1-d."""
        ...

    def encode(self, text: str) -> list[int] | None:
        """Token ids for a text prompt, or None if no tokenizer is served."""
        ...


class TorchCausalBackend:
    """Any local `transformers` causal LM checkpoint on CPU or GPU."""

    def __init__(self, model_path: str | Path, device: str = "cpu"):
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self._torch = torch
        self._device = device
        self.model = AutoModelForCausalLM.from_pretrained(
            str(model_path)).to(device).eval()
        cfg = self.model.config
        self.model_id = Path(str(model_path)).name or str(model_path)
        self.vocab_size = int(cfg.vocab_size)
        if cfg.eos_token_id is None:
            raise ValueError("checkpoint config declares no eos_token_id")
        self.eos_token = int(cfg.eos_token_id)
        limit = getattr(cfg, "max_position_embeddings", None) \
            or getattr(cfg, "n_positions", None)
        if limit is None:
            raise ValueError("checkpoint config declares no context length")
        self.context_limit = int(limit)
        try:
            tokenizer = AutoTokenizer.from_pretrained(str(model_path))
        except (OSError, ValueError):
            tokenizer = None
        # A model-only directory can still yield a shell tokenizer with an
        # empty vocab; treat that as no tokenizer rather than encoding
        # every prompt to nothing.
        if tokenizer is not None and getattr(tokenizer, "vocab_size", 0) == 0:
            tokenizer = None
        self.tokenizer = tokenizer

    def full_logprobs(self, tokens: Sequence[int]) -> np.ndarray:
        torch = self._torch
        ids = torch.tensor([list(tokens)], dtype=torch.long,
                           device=self._device)
        with torch.no_grad():
            logits = self.model(input_ids=ids).logits[0, -1, :]
            # float64 before the softmax: entropy sums stay stable.
            logprobs = torch.log_softmax(logits.to(torch.float64), dim=-1)
        return logprobs.cpu().numpy()

    def encode(self, text: str) -> list[int] | None:
        if self.tokenizer is None:
            return None
        return [int(t) for t in
                self.tokenizer(text, add_special_tokens=False)["input_ids"]]
