"""Counter-based random streams.

Every draw is a pure function of ``(seed, path, step, slot)``: the Philox4x32-10
block cipher is applied to the counter ``(step, slot, path_lo, path_hi)`` under
the key derived from the master seed.  Paths therefore own independent
substreams, and any subset of paths can be advanced in any order or on any
worker without changing a single bit of the output.
"""

from __future__ import annotations

import numba
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 on broadcastable uint32-valued arrays.

    Args:
        counter: sequence of four arrays (or ints), the 128-bit counter words.
        key: pair of ints, the 64-bit key words.
        rounds: number of rounds (10 is the standard, crush-resistant choice).

    Returns:
        Tuple of four ``uint64`` arrays holding 32-bit output words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = (hi1 ^ c1 ^ np.uint64(k0), lo1, hi0 ^ c3 ^ np.uint64(k1), lo0)
    return c0, c1, c2, c3


def seed_key(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


@numba.njit(cache=True)
def _philox_pair(k0, k1, path, step, slot, out, p):
    m0 = np.uint64(0xD2511F53)
    m1 = np.uint64(0xCD9E8D57)
    mask = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    c0 = np.uint64(step) & mask
    c1 = np.uint64(slot) & mask
    c2 = np.uint64(path) & mask
    c3 = np.uint64(path) >> s32
    a = np.uint64(k0)
    b = np.uint64(k1)
    for r in range(10):
        if r:
            a = (a + np.uint64(0x9E3779B9)) & mask
            b = (b + np.uint64(0xBB67AE85)) & mask
        p0 = m0 * c0
        p1 = m1 * c2
        n0 = (p1 >> s32) ^ c1 ^ a
        n2 = (p0 >> s32) ^ c3 ^ b
        c1 = p1 & mask
        c3 = p0 & mask
        c0 = n0
        c2 = n2
    out[p, 0] = ((c0 >> np.uint64(5)) * 67108864.0 + (c1 >> np.uint64(6)) + 0.5) * (1.0 / 9007199254740992.0)
    out[p, 1] = ((c2 >> np.uint64(5)) * 67108864.0 + (c3 >> np.uint64(6)) + 0.5) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _uniform_pair_kernel(k0, k1, paths, step, slot):
    n = paths.shape[0]
    out = np.empty((n, 2))
    for p in range(n):
        _philox_pair(k0, k1, paths[p], step, slot, out, p)
    return out


@numba.njit(cache=True)
def _uniform_pair_slots_kernel(k0, k1, paths, step, slots):
    n = paths.shape[0]
    out = np.empty((n, 2))
    for p in range(n):
        _philox_pair(k0, k1, paths[p], step, slots[p], out, p)
    return out


def uniform_pair(seed: int, paths, step: int, slot: int) -> np.ndarray:
    """Two uniforms in the open interval (0, 1) per path.

    Compiled fast path of :func:`uniform_pair_reference`; both produce
    identical bits.
    """
    k0, k1 = seed_key(seed)
    paths = np.ascontiguousarray(paths, dtype=np.int64)
    return _uniform_pair_kernel(k0, k1, paths, int(step), int(slot))


def uniform_pair_slots(seed: int, paths, step: int, slots) -> np.ndarray:
    """Like :func:`uniform_pair` with one slot per path (slots below ``2**32``)."""
    k0, k1 = seed_key(seed)
    paths = np.ascontiguousarray(paths, dtype=np.int64)
    slots = np.ascontiguousarray(slots, dtype=np.int64)
    return _uniform_pair_slots_kernel(k0, k1, paths, int(step), slots)


def normals_slots(seed: int, paths, step: int, slots, k: int) -> np.ndarray:
    """``k`` standard normals per path from slots ``slots .. slots + ceil(k/2) - 1``."""
    blocks = []
    for b in range((k + 1) // 2):
        u = uniform_pair_slots(seed, paths, step, np.asarray(slots) + b)
        rad = np.sqrt(-2.0 * np.log(u[:, 0]))
        ang = _TWO_PI * u[:, 1]
        blocks.append(np.column_stack((rad * np.cos(ang), rad * np.sin(ang))))
    return np.concatenate(blocks, axis=1)[:, :k] if blocks else np.empty((len(paths), 0))


def uniform_pair_reference(seed: int, paths, step: int, slot: int) -> np.ndarray:
    """Two uniforms in the open interval (0, 1) per path.

    Args:
        seed: master seed.
        paths: integer array of path indices.
        step: time-step index shared by all paths.
        slot: draw-group index inside the step.

    Returns:
        Array of shape ``(len(paths), 2)``.
    """
    paths = np.asarray(paths, dtype=np.uint64)
    w0, w1, w2, w3 = philox4x32(
        (np.uint64(step), np.uint64(slot), paths & _MASK32, paths >> _SHIFT32),
        seed_key(seed),
    )
    out = np.empty((paths.shape[0], 2))
    out[:, 0] = ((w0 >> np.uint64(5)) * 67108864.0 + (w1 >> np.uint64(6)) + 0.5) * _INV_2_53
    out[:, 1] = ((w2 >> np.uint64(5)) * 67108864.0 + (w3 >> np.uint64(6)) + 0.5) * _INV_2_53
    return out


def normal_pair(seed: int, paths, step: int, slot: int) -> np.ndarray:
    """Two independent standard normals per path (Box-Muller on one block)."""
    u = uniform_pair(seed, paths, step, slot)
    rad = np.sqrt(-2.0 * np.log(u[:, 0]))
    ang = _TWO_PI * u[:, 1]
    return np.column_stack((rad * np.cos(ang), rad * np.sin(ang)))


def normals(seed: int, paths, step: int, slot: int, k: int) -> np.ndarray:
    """``k`` standard normals per path, using slots ``slot .. slot + ceil(k/2) - 1``."""
    blocks = [normal_pair(seed, paths, step, slot + b) for b in range((k + 1) // 2)]
    return np.concatenate(blocks, axis=1)[:, :k] if blocks else np.empty((len(paths), 0))


class Draws:
    """Random draws of a set of paths at one time step.

    Slots index independent draw groups inside the step; a slot yields two
    uniforms (or two normals) per path.
    """

    __slots__ = ("seed", "paths", "step")

    def __init__(self, seed: int, paths, step: int):
        self.seed = seed
        self.paths = np.asarray(paths, dtype=np.int64)
        self.step = step

    def __len__(self) -> int:
        return self.paths.shape[0]

    def uniforms(self, slot: int) -> np.ndarray:
        return uniform_pair(self.seed, self.paths, self.step, slot)

    def normals(self, slot: int, k: int) -> np.ndarray:
        return normals(self.seed, self.paths, self.step, slot, k)

    def subset(self, sel) -> "Draws":
        return Draws(self.seed, self.paths[sel], self.step)
