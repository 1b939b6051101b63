"""A data-availability-first ledger toolkit.

Namespaced Merkle trees, a 2D Reed-Solomon data square with sampling and
fraud proofs, a deterministic network simulator and client-side apps.
"""

__version__ = "0.1.0"
