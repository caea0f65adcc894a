"""Noisy quantum circuit emulation with locally purified matrix-product density operators.

The purified state is stored as an MPS whose sites carry a physical and an ancilla
leg. Compression works by rotating the ancilla basis of neighbouring sites so as to
disentangle the purification (iterative purification disentanglement, IPD) and
then truncating small singular values on both bond types.
"""

from .channels import KrausChannel, cnot, cz, depolarizing, rotation_gate, swap
from .compression import CompressionConfig, ipd_compress, lc_compress
from .mpdo import MpdoState, product_state

__version__ = "0.1.0"

__all__ = [
    "CompressionConfig",
    "KrausChannel",
    "MpdoState",
    "cnot",
    "cz",
    "depolarizing",
    "ipd_compress",
    "lc_compress",
    "product_state",
    "rotation_gate",
    "swap",
    "__version__",
]
