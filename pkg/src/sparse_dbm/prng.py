"""Per-node xoshiro256++ streams, seeded through splitmix64.

Every node owns an independent 256-bit state derived from
``(master_seed, node_id)``, so the value a node draws depends only on how
many draws that node has made, never on which thread ran it or when.
"""
import numpy as np
from numba import njit, uint64

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> tuple[int, int]:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def stream_state(master_seed: int, node_id: int) -> np.ndarray:
    """The 4-word xoshiro state of one node's stream."""
    _, x = _splitmix64(int(master_seed) & _MASK64)
    x = (x ^ (int(node_id) * 0xD1B54A32D192ED03)) & _MASK64
    out = []
    for _ in range(4):
        x, z = _splitmix64(x)
        out.append(z)
    if not any(out):
        out[0] = 1
    return np.array(out, dtype=np.uint64)


def node_streams(master_seed: int, n: int) -> np.ndarray:
    """States for nodes ``0..n-1`` as a ``(n, 4)`` uint64 array."""
    return _node_streams(np.uint64(int(master_seed) & _MASK64), n)


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@njit(cache=True)
def _node_streams(seed, n):
    golden = uint64(0x9E3779B97F4A7C15)
    base = _mix(seed + golden)
    out = np.empty((n, 4), dtype=np.uint64)
    for i in range(n):
        x = base ^ (uint64(i) * uint64(0xD1B54A32D192ED03))
        nz = uint64(0)
        for k in range(4):
            x = x + golden
            out[i, k] = _mix(x)
            nz |= out[i, k]
        if nz == uint64(0):
            out[i, 0] = uint64(1)
    return out


@njit(inline="always")
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@njit(inline="always")
def next_u64(s, i):
    """Advance stream ``i`` of state matrix ``s`` and return the raw output."""
    s0 = s[i, 0]
    s1 = s[i, 1]
    s2 = s[i, 2]
    s3 = s[i, 3]
    result = _rotl(s0 + s3, 23) + s0
    t = s1 << uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[i, 0] = s0
    s[i, 1] = s1
    s[i, 2] = s2
    s[i, 3] = s3
    return result


@njit(inline="always")
def next_symmetric(s, i):
    """Uniform draw on [-1, 1) with 53-bit resolution."""
    return (next_u64(s, i) >> uint64(11)) * (2.0 / 9007199254740992.0) - 1.0


@njit(cache=True)
def draw_symmetric(s, i, count):
    out = np.empty(count)
    for k in range(count):
        out[k] = next_symmetric(s, i)
    return out


@njit(cache=True)
def draw_u64(s, i, count):
    out = np.empty(count, dtype=np.uint64)
    for k in range(count):
        out[k] = next_u64(s, i)
    return out
