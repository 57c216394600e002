"""Keyed, counter-based edge sampler for the dynamic G(., p) arrival model.

Every ordered pair (u, v) is hashed together with the seed through the
splitmix64 finalizer; the edge u -> v exists iff the 64-bit hash falls below
``p * 2**64``.  Queries are pure functions of (seed, p, u, v), so the graph can
be materialized lazily, eagerly, or not at all without changing any outcome.
"""

from __future__ import annotations

import numpy as np

_M32 = 0xFFFFFFFF
_M64 = 0xFFFFFFFFFFFFFFFF
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_GOLDEN = 0x9E3779B97F4A7C15


class InvalidPairError(ValueError):
    pass


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _C1) & _M64
    z = ((z ^ (z >> 27)) * _C2) & _M64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z *= np.uint64(_C1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_C2)
    z ^= z >> np.uint64(31)
    return z


def _as_key(ids) -> np.ndarray:
    # negative ids (extra altruistic donors) wrap to the top of the 32-bit range
    return (np.asarray(ids, dtype=np.int64) & _M32).astype(np.uint64)


class EdgeOracle:
    """Deterministic edge sampler: ``edge_exists(u, v)`` is fixed by (seed, p, u, v)."""

    def __init__(self, seed: int, p: float) -> None:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"edge probability must lie in [0, 1], got {p}")
        self.seed = int(seed) & _M64
        self.p = float(p)
        self._seed_key = _mix((self.seed + _GOLDEN) & _M64)
        if p >= 1.0:
            self._threshold = None
        else:
            self._threshold = min(int(p * 2.0**64), _M64)

    def __repr__(self) -> str:
        return f"EdgeOracle(seed={self.seed}, p={self.p})"

    def _hash(self, u: int, v: int) -> int:
        x = (((u & _M32) << 32) | (v & _M32)) ^ self._seed_key
        return _mix((_mix(x) + _GOLDEN) & _M64)

    def edge_exists(self, u: int, v: int) -> bool:
        if u == v:
            raise InvalidPairError(f"no self-edges: u = v = {u}")
        if self._threshold is None:
            return True
        return self._hash(u, v) < self._threshold

    def edges(self, us, vs) -> np.ndarray:
        """Vectorized ``edge_exists`` over broadcast id arrays.

        Pairs with u == v are reported as absent instead of raising, so callers
        may pass overlapping id sets.
        """
        u = np.asarray(us, dtype=np.int64)
        v = np.asarray(vs, dtype=np.int64)
        if self._threshold is None:
            out = np.ones(np.broadcast_shapes(u.shape, v.shape), dtype=bool)
        elif self._threshold == 0:
            return np.zeros(np.broadcast_shapes(u.shape, v.shape), dtype=bool)
        else:
            x = (_as_key(u) << np.uint64(32)) | _as_key(v)
            x ^= np.uint64(self._seed_key)
            h = _mix_array(x)
            h += np.uint64(_GOLDEN)
            out = _mix_array(h) < np.uint64(self._threshold)
        return out & (u != v)

    def out_edges(self, u: int, vs) -> np.ndarray:
        """Boolean mask of u -> v over the array ``vs``."""
        return self.edges(u, vs)

    def in_edges(self, us, v: int) -> np.ndarray:
        """Boolean mask of u -> v over the array ``us``."""
        return self.edges(us, v)

    def both_ways(self, u: int, vs) -> tuple[np.ndarray, np.ndarray]:
        """``(out_edges(u, vs), in_edges(vs, u))`` from a single hashing pass."""
        vs = np.asarray(vs, dtype=np.int64)
        k = len(vs)
        same = np.full(k, u, dtype=np.int64)
        hit = self.edges(np.concatenate([same, vs]), np.concatenate([vs, same]))
        return hit[:k], hit[k:]


class EagerEdgeOracle(EdgeOracle):
    """Materializes the whole edge matrix on ids ``lo..hi`` up front.

    Only useful for small horizons: it exists to show that eager and lazy
    materialization are indistinguishable to the simulator.
    """

    def __init__(self, seed: int, p: float, lo: int, hi: int) -> None:
        super().__init__(seed, p)
        self.lo, self.hi = lo, hi
        ids = np.arange(lo, hi + 1)
        self._matrix = super().edges(ids[:, None], ids[None, :])

    def edge_exists(self, u: int, v: int) -> bool:
        if u == v:
            raise InvalidPairError(f"no self-edges: u = v = {u}")
        return bool(self._matrix[u - self.lo, v - self.lo])

    def edges(self, us, vs) -> np.ndarray:
        u = np.asarray(us, dtype=np.int64) - self.lo
        v = np.asarray(vs, dtype=np.int64) - self.lo
        return self._matrix[u, v]
