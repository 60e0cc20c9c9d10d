"""Five-colour sceneries: finite windows, lazy i.i.d. sources, equivalence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COLORS = (1, 2, 3, 4, 5)
NUM_COLORS = 5

# cells per block of the lazy generator; changing it changes every scenery
_BLOCK = 4096


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=np.int8)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scenery:
    """A coloured integer window ``[origin_offset, origin_offset + len)``."""

    origin_offset: int
    colors: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.colors)
        if arr.ndim != 1:
            raise ValueError("colors must be one-dimensional")
        if arr.size and (arr.min() < 1 or arr.max() > NUM_COLORS):
            raise ValueError("colors must lie in {1,...,5}")
        object.__setattr__(self, "colors", arr)
        object.__setattr__(self, "origin_offset", int(self.origin_offset))

    def __len__(self) -> int:
        return int(self.colors.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scenery):
            return NotImplemented
        return (self.origin_offset == other.origin_offset
                and np.array_equal(self.colors, other.colors))

    def __hash__(self) -> int:
        return hash((self.origin_offset, self.colors.tobytes()))

    @property
    def lo(self) -> int:
        return self.origin_offset

    @property
    def hi(self) -> int:
        """Last stored index (inclusive)."""
        return self.origin_offset + len(self) - 1

    def covers(self, a: int, b: int) -> bool:
        return self.lo <= a and b <= self.hi

    def __call__(self, z: int) -> int:
        if not self.lo <= z <= self.hi:
            raise IndexError(f"cell {z} outside stored window [{self.lo}, {self.hi}]")
        return int(self.colors[z - self.origin_offset])

    def colors_at(self, positions) -> np.ndarray:
        pos = np.asarray(positions, dtype=np.int64)
        if pos.size and (pos.min() < self.lo or pos.max() > self.hi):
            raise IndexError("positions outside stored window")
        return self.colors[pos - self.origin_offset]

    def window(self, a: int, b: int) -> "Pattern":
        return window(self, a, b)

    def restrict(self, a: int, b: int) -> "Scenery":
        """Sub-window ``[a, b]`` keeping absolute coordinates."""
        if a > b or not self.covers(a, b):
            raise IndexError(f"[{a}, {b}] not inside [{self.lo}, {self.hi}]")
        return Scenery(a, self.colors[a - self.lo:b - self.lo + 1])

    def reflected(self) -> "Scenery":
        """The mirror image z -> -z, so ``reflected()(z) == self(-z)``."""
        return Scenery(-self.hi, self.colors[::-1])

    def with_cell(self, z: int, color: int) -> "Scenery":
        """Copy with cell ``z`` set, extending the window by one cell if adjacent."""
        if self.lo <= z <= self.hi:
            arr = self.colors.copy()
            arr[z - self.lo] = color
            return Scenery(self.lo, arr)
        if z == self.hi + 1:
            return Scenery(self.lo, np.append(self.colors, color))
        if z == self.lo - 1:
            return Scenery(z, np.insert(self.colors, 0, color))
        raise IndexError(f"cell {z} neither inside nor adjacent to the window")

    # plain-text record: origin offset, whitespace, a line of digits
    def to_line(self) -> str:
        return f"{self.origin_offset} " + "".join(str(int(c)) for c in self.colors)

    @classmethod
    def from_line(cls, line: str) -> "Scenery":
        offset, digits = line.split()
        if not digits.isdigit():
            raise ValueError(f"malformed scenery digits: {digits!r}")
        return cls(int(offset), [int(ch) for ch in digits])


@dataclass(frozen=True, eq=False)
class Pattern:
    colors: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.colors)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("a pattern must be a nonempty sequence")
        if arr.min() < 1 or arr.max() > NUM_COLORS:
            raise ValueError("pattern colours must lie in {1,...,5}")
        object.__setattr__(self, "colors", arr)

    def __len__(self) -> int:
        return int(self.colors.size)

    def __eq__(self, other) -> bool:
        if isinstance(other, Pattern):
            return np.array_equal(self.colors, other.colors)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.colors.tobytes())

    def __str__(self) -> str:
        return "".join(str(int(c)) for c in self.colors)

    def tobytes(self) -> bytes:
        return self.colors.astype(np.uint8).tobytes()


def window(s: Scenery, a: int, b: int) -> Pattern:
    if a > b:
        raise ValueError(f"empty window [{a}, {b}]")
    if not s.covers(a, b):
        raise IndexError(f"[{a}, {b}] not inside [{s.lo}, {s.hi}]")
    return Pattern(s.colors[a - s.lo:b - s.lo + 1])


def equivalent(s1, s2) -> bool:
    """True iff the two colour strings agree up to shift and reflection.

    Finite windows of equal length: a shift can only be the identity, so this
    reduces to equality with ``s2`` or its reversal.
    """
    a = _as_colors(s1)
    b = _as_colors(s2)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return bool(np.array_equal(a, b) or np.array_equal(a, b[::-1]))


def _as_colors(s) -> np.ndarray:
    if isinstance(s, (Scenery, Pattern)):
        return s.colors
    return np.asarray(s, dtype=np.int8)


def _zigzag(k: int) -> int:
    return 2 * k if k >= 0 else -2 * k - 1


@dataclass(frozen=True)
class IIDScenery:
    """Bi-infinite uniform i.i.d. scenery, generated lazily in keyed blocks.

    Cell ``z`` lives in block ``z // 4096`` whose colours come from a PCG64
    stream seeded by ``(seed, block)``; so any window can be materialised in
    any order and extending a window never changes cells already seen.
    """

    seed: int
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def _block(self, k: int) -> np.ndarray:
        blk = self._cache.get(k)
        if blk is None:
            ss = np.random.SeedSequence([int(self.seed) & (2**64 - 1), _zigzag(k)])
            blk = np.random.Generator(np.random.PCG64(ss)).integers(
                1, NUM_COLORS + 1, size=_BLOCK, dtype=np.int8)
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[k] = blk
        return blk

    def window(self, a: int, b: int) -> Scenery:
        """Materialise ``[a, b]`` as a finite :class:`Scenery`."""
        if a > b:
            raise ValueError(f"empty window [{a}, {b}]")
        k0, k1 = a // _BLOCK, b // _BLOCK
        cells = np.concatenate([self._block(k) for k in range(k0, k1 + 1)])
        start = a - k0 * _BLOCK
        return Scenery(a, cells[start:start + (b - a + 1)])

    def __call__(self, z: int) -> int:
        return int(self._block(z // _BLOCK)[z % _BLOCK])


def generate_iid(length: int, seed: int, origin_offset: int = 0) -> Scenery:
    if length < 1:
        raise ValueError("length must be positive")
    return IIDScenery(seed).window(origin_offset, origin_offset + length - 1)
