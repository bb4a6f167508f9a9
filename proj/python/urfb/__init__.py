"""Training with asymmetric Hebbian feedback: python surface over the C++ core.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports its operations under friendlier names.
"""

from ._core import (
    __version__,
    checkpoint_alignment,
    hinge_delta,
    hinge_loss,
    lindyn_replicate,
    load_checkpoint,
    output_circuit_effective,
    rate_monotonicity,
    resolve_config,
    rng_uniforms,
    scalar_run,
    shutdown_gate,
    softmax_xent_delta,
    softmax_xent_loss,
    toy_blobs,
    train,
)

__all__ = [
    "__version__",
    "checkpoint_alignment",
    "hinge_delta",
    "hinge_loss",
    "lindyn_replicate",
    "load_checkpoint",
    "output_circuit_effective",
    "rate_monotonicity",
    "resolve_config",
    "rng_uniforms",
    "scalar_run",
    "shutdown_gate",
    "softmax_xent_delta",
    "softmax_xent_loss",
    "toy_blobs",
    "train",
]
