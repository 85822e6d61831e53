"""Deterministic randomness: site-addressed hashing and counter-based streams.

Site assignments are pure functions of (seed, coordinates) so that
overlapping windows agree and scans can grow without re-sampling.
Sequential randomness uses Philox streams keyed by (master seed, subkeys),
so worker decompositions stay reproducible.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _finalize(h):
    # splitmix64 avalanche; uint64 arithmetic wraps mod 2^64 by design
    h = h ^ (h >> np.uint64(30))
    h = h * _MIX1
    h = h ^ (h >> np.uint64(27))
    h = h * _MIX2
    h = h ^ (h >> np.uint64(31))
    return h


def hash_ints(*values) -> int:
    """Collapse a tuple of integers into one 64-bit hash."""
    with np.errstate(over="ignore"):
        h = _finalize(np.uint64(0x5851F42D4C957F2D))
        for i, v in enumerate(values):
            c = np.int64(int(v) & _MASK64).view(np.uint64)
            h = _finalize(h ^ _finalize(c + _GAMMA * np.uint64(i + 1)))
    return int(h)


def site_uniform(seed: int, coords) -> np.ndarray:
    """Uniform [0,1) variate per lattice site, shape coords.shape[:-1].

    coords has the site coordinates along its last axis.  The value at a
    site depends only on (seed, site), never on the enclosing window.
    """
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim == 1:
        coords = coords[None, :]
    with np.errstate(over="ignore"):
        h = np.full(coords.shape[:-1], np.uint64(int(seed) & _MASK64), dtype=np.uint64)
        h = _finalize(h + _GAMMA)
        for i in range(coords.shape[-1]):
            c = np.ascontiguousarray(coords[..., i]).view(np.uint64)
            h = _finalize(h ^ _finalize(c + _GAMMA * np.uint64(i + 2)))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def stream(master_seed: int, *subkeys) -> np.random.Generator:
    """Philox generator for (master seed, subkeys); independent across keys."""
    key = np.array(
        [np.uint64(int(master_seed) & _MASK64), np.uint64(hash_ints(*subkeys) if subkeys else 0)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
