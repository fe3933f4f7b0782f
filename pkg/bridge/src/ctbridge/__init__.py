"""Reference adapter for the ctbench exchange-bundle protocol.

One invocation serves one request directory and writes one response
directory. The adapter is intentionally trivial - reconstruction is the
identity and generation is a seeded Gaussian matched to the request
payload's per-row moments - so it doubles as a conformance fixture for
wiring real generator processes into the benchmark engine.

Only the Python standard library is used: the protocol is plain JSON plus
raw little-endian float64, and any ecosystem (PyTorch models, Rust
binaries, ...) can implement it the same way.
"""

__version__ = "0.1.0"

from .adapter import (
    BadManifest,
    BridgeError,
    Bundle,
    MissingPayload,
    read_bundle,
    serve_request,
    write_bundle,
)

__all__ = [
    "BadManifest",
    "BridgeError",
    "Bundle",
    "MissingPayload",
    "read_bundle",
    "serve_request",
    "write_bundle",
    "__version__",
]
