"""Counter-based Gaussian streams.

Every normal variate is a pure function of ``(seed, stream, step, mode,
path)``: the tuple is packed into the counter and key of a Philox4x32-10
block cipher, so no generator state is ever shared between paths and the
draws do not depend on how paths are scheduled across workers.

Counter layout: ``c0 = step``, ``c1 = mode // 2``, ``c2 = path & 0xffffffff``,
``c3 = (stream << 16) | (path >> 32)``.  Key: the two 32-bit halves of the
master seed.  Each block yields two 53-bit uniforms and, via Box-Muller, the
normals for modes ``2j`` and ``2j + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_M32 = np.uint64(0xFFFFFFFF)
_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint64(0x9E3779B9)
_PHILOX_W1 = np.uint64(0xBB67AE85)
_SHIFT32 = np.uint64(32)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0

MAX_STREAM = 0xFFFF
MAX_PATH = (1 << 48) - 1


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds on uint64-held 32-bit words."""
    for r in range(10):
        if r > 0:
            k0 = (k0 + _PHILOX_W0) & _M32
            k1 = (k1 + _PHILOX_W1) & _M32
        p0 = _PHILOX_M0 * c0
        p1 = _PHILOX_M1 * c2
        hi0 = p0 >> _SHIFT32
        lo0 = p0 & _M32
        hi1 = p1 >> _SHIFT32
        lo1 = p1 & _M32
        c0, c1, c2, c3 = (hi1 ^ c1 ^ k0) & _M32, lo1, (hi0 ^ c3 ^ k1) & _M32, lo0
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def normal_pair(seed, stream, step, block, path):
    """Two independent N(0, 1) draws for (step, modes 2*block and 2*block+1)."""
    s = np.uint64(seed)
    p = np.uint64(path)
    c0 = np.uint64(step) & _M32
    c1 = np.uint64(block) & _M32
    c2 = p & _M32
    c3 = ((np.uint64(stream) << np.uint64(16)) | (p >> _SHIFT32)) & _M32
    w0, w1, w2, w3 = philox4x32(c0, c1, c2, c3, s & _M32, s >> _SHIFT32)
    u1 = ((w0 >> np.uint64(5)) * np.uint64(67108864) + (w1 >> np.uint64(6))) * _INV_2_53
    u2 = ((w2 >> np.uint64(5)) * np.uint64(67108864) + (w3 >> np.uint64(6))) * _INV_2_53
    r = np.sqrt(-2.0 * np.log(1.0 - u1))
    return r * np.cos(_TWO_PI * u2), r * np.sin(_TWO_PI * u2)


@njit(cache=True, nogil=True)
def fill_normals(out, seed, stream, step, path):
    n = out.shape[0]
    for b in range((n + 1) // 2):
        z0, z1 = normal_pair(seed, stream, step, b, path)
        out[2 * b] = z0
        if 2 * b + 1 < n:
            out[2 * b + 1] = z1


@njit(cache=True, nogil=True)
def _normals_block(seed, stream, steps, paths, n_modes):
    out = np.empty((steps.shape[0], paths.shape[0], n_modes))
    for i in range(steps.shape[0]):
        for j in range(paths.shape[0]):
            fill_normals(out[i, j], seed, stream, steps[i], paths[j])
    return out


def _check_ids(seed: int, stream: int) -> None:
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    if not 0 <= stream <= MAX_STREAM:
        raise ValueError(f"stream tag must be in [0, {MAX_STREAM}], got {stream}")


def normals(seed: int, stream: int, steps, paths, n_modes: int) -> np.ndarray:
    """Standard normals of shape ``(len(steps), len(paths), n_modes)``."""
    _check_ids(seed, stream)
    steps = np.atleast_1d(np.asarray(steps, dtype=np.int64))
    paths = np.atleast_1d(np.asarray(paths, dtype=np.int64))
    if paths.size and (paths.min() < 0 or paths.max() > MAX_PATH):
        raise ValueError("path index out of range")
    return _normals_block(np.uint64(seed), np.uint64(stream), steps, paths, int(n_modes))


@dataclass(frozen=True)
class RngStream:
    """Identity of one noise stream: master seed, purpose tag and path index."""

    seed: int
    stream: int = 0
    path_index: int = 0

    def __post_init__(self):
        _check_ids(self.seed, self.stream)

    def normals(self, step: int, n_modes: int) -> np.ndarray:
        return normals(self.seed, self.stream, [step], [self.path_index], n_modes)[0, 0]


def derive_stream(name: str) -> int:
    """Stable 16-bit stream tag for a named purpose (e.g. a check name)."""
    import zlib

    return zlib.crc32(name.encode()) & MAX_STREAM
