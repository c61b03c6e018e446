"""HTTP sidecar serving a causal LM's next-token distribution.

The server computes full-distribution entropy per step and ships it with
a truncated top-M candidate list, so a decoding client can make
uncertainty decisions without pulling the whole vocabulary per token.
"""

from .backend import StepBackend, TorchCausalBackend
from .server import DEFAULT_TOP_M, create_app, full_entropy, top_slice
from .tiny import make_tiny_checkpoint

__version__ = "0.1.0"
