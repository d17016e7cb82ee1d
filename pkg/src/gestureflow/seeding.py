"""Deterministic seed derivation.

All randomness flows from one global seed through named sub-streams; latent
draws at sampling time are keyed by (seed, chain, frame) so parallel and
sequential execution produce identical results.
"""

import hashlib

import numpy as np


def substream_seed(seed, name):
    """Stable 63-bit seed for a named sub-stream of a global seed."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def counter_rng(*keys):
    """Fresh generator keyed by an integer tuple; order-independent by construction."""
    return np.random.default_rng(list(keys))
