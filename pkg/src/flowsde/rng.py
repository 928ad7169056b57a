"""Counter-based normal draws (Philox4x32-10, vectorised in numpy).

Every draw is a pure function of ``(seed, sample, step, draw)``, so rollouts
give identical bits no matter how samples are chunked or scheduled.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def philox4x32(counters: np.ndarray, key: tuple[int, int], rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function.

    ``counters`` is an ``(n, 4)`` array of 32-bit words; returns the ``(n, 4)``
    uint32 output block for each row.
    """
    c = np.asarray(counters, dtype=np.uint64) & _MASK32
    c0, c1, c2, c3 = (c[:, i].copy() for i in range(4))
    k0 = np.uint64(key[0] & 0xFFFFFFFF)
    k1 = np.uint64(key[1] & 0xFFFFFFFF)
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ k0,
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ k1,
            p0 & _MASK32,
        )
    return np.stack([c0, c1, c2, c3], axis=1).astype(np.uint32)


class CounterRNG:
    """Stateless stream of standard normals keyed by a 64-bit seed."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = seed
        self._key = (seed & 0xFFFFFFFF, seed >> 32)

    def _blocks(self, sample_idx: np.ndarray, step: int, draw: int, n_blocks: int) -> np.ndarray:
        if not 0 <= step < 2**32:
            raise ValueError("step index out of range")
        if not 0 <= draw < 2**15 or n_blocks > 2**16:
            raise ValueError("draw index or dimension out of range")
        idx = np.asarray(sample_idx, dtype=np.uint64)
        n = idx.shape[0]
        ctr = np.empty((n, n_blocks, 4), dtype=np.uint64)
        ctr[:, :, 0] = (idx & _MASK32)[:, None]
        ctr[:, :, 1] = (idx >> _SHIFT32)[:, None]
        ctr[:, :, 2] = step
        ctr[:, :, 3] = (draw << 16) + np.arange(n_blocks, dtype=np.uint64)[None, :]
        out = philox4x32(ctr.reshape(-1, 4), self._key)
        return out.reshape(n, n_blocks, 4).astype(np.uint64)

    def uniform(self, sample_idx, step: int, dim: int, draw: int = 0) -> np.ndarray:
        """Uniforms on [0, 1) with 53 random bits, shape ``(n, dim)``."""
        n_blocks = (dim + 1) // 2
        b = self._blocks(sample_idx, step, draw, n_blocks)
        words = np.stack([(b[..., 0] << _SHIFT32) | b[..., 1], (b[..., 2] << _SHIFT32) | b[..., 3]], axis=-1)
        u = (words >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(u.shape[0], -1)[:, :dim]

    def normal(self, sample_idx, step: int, dim: int, draw: int = 0) -> np.ndarray:
        """Standard normals of shape ``(n, dim)`` via Box-Muller."""
        n_blocks = (dim + 1) // 2
        u = self.uniform(sample_idx, step, 2 * n_blocks, draw).reshape(-1, n_blocks, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[..., 0]))
        angle = 2.0 * np.pi * u[..., 1]
        g = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)
        return g.reshape(g.shape[0], -1)[:, :dim]
