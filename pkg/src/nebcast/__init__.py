"""Kademlia-style broadcast simulator with scored neighbor evaluation.

The package splits into the protocol itself (identity, routing, protocol)
and the machinery needed to measure it (netsim, metrics, experiments).
Everything is deterministic: the only randomness comes from seeded
``random.Random`` streams handed in by the caller.
"""

from .errors import ConfigurationError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "__version__"]
