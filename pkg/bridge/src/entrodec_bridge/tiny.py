"""Offline generator for a tiny smoke-test checkpoint.

Builds a randomly initialized GPT-2-architecture model small enough for
CPU unit tests (default: 160-token vocabulary, 64-position window, two
32-wide layers) and saves it in standard `transformers` format. No
network access, no tokenizer: the checkpoint speaks token ids only.
"""

from __future__ import annotations

from pathlib import Path


def make_tiny_checkpoint(path: str | Path, vocab_size: int = 160,
                         n_positions: int = 64, n_embd: int = 32,
                         n_layer: int = 2, n_head: int = 2,
                         seed: int = 0) -> Path:
    import torch
    from transformers import GPT2Config, GPT2LMHeadModel

    if vocab_size < 2:
        raise ValueError("vocab_size must be at least 2")
    if n_embd % n_head != 0:
        raise ValueError("n_embd must be divisible by n_head")
    torch.manual_seed(seed)
    config = GPT2Config(vocab_size=vocab_size, n_positions=n_positions,
                        n_embd=n_embd, n_layer=n_layer, n_head=n_head,
                        bos_token_id=0, eos_token_id=vocab_size - 1)
    model = GPT2LMHeadModel(config)
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out)
    return out
