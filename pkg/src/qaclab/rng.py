"""Named counter-based random streams.

Every random quantity in an experiment is drawn from a stream addressed by a
*path* of tokens under a root seed:

    experiment seed
      -> ("instance", L, index)            instance couplings
      -> ("noise", L, index, eta)          one noise draw per (instance, eta)
      -> ("gauge", L, index, eta, g)       gauge vectors
      -> ("solver", ...)                   solver read streams

Streams are Philox (counter-based) generators keyed by a SHA-256 digest of the
root seed and the token path, so results never depend on scheduling or on the
order in which streams are created.  Floats used as tokens are canonicalised
through repr() so that 0.05 read from a config file and 0.05 written in a test
address the same stream.
"""

from __future__ import annotations

import hashlib

import numpy as np

_TOKEN_SEP = b"\x1f"


def _encode_token(tok) -> bytes:
    if isinstance(tok, bool):
        return b"b" + (b"1" if tok else b"0")
    if isinstance(tok, (int, np.integer)):
        return b"i" + str(int(tok)).encode()
    if isinstance(tok, (float, np.floating)):
        return b"f" + repr(float(tok)).encode()
    if isinstance(tok, str):
        return b"s" + tok.encode()
    if isinstance(tok, bytes):
        return b"y" + tok
    raise TypeError(f"unhashable stream token type: {type(tok)!r}")


def child_seed(root: int, *path) -> int:
    """Derive a 64-bit child seed from a root seed and a token path."""
    h = hashlib.sha256()
    h.update(str(int(root)).encode())
    for tok in path:
        h.update(_TOKEN_SEP)
        h.update(_encode_token(tok))
    return int.from_bytes(h.digest()[:8], "little")


def stream(root: int, *path) -> np.random.Generator:
    """Philox generator for the stream addressed by ``path`` under ``root``."""
    return np.random.Generator(np.random.Philox(key=child_seed(root, *path)))
