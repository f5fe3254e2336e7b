"""Location/scale grids on which the local homogeneity tests are run.

A grid point ``(l, r)`` stands for the segment ``[l - r, l + r)`` of a series
indexed ``1..n``; the test at that point compares the means of ``[l - r, l)``
and ``[l, l + r)``.  Three families are provided:

* the dyadic grid (scales ``1, 2, 4, ...``, half-step location lattice),
* the a-adic grid (scales ``floor(a**-k)``),
* the complete grid (every admissible ``(l, r)`` pair).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .errors import InvalidInputError, OutOfRangeError

__all__ = [
    "GridPoint",
    "Grid",
    "build_dyadic_grid",
    "build_adic_grid",
    "build_complete_grid",
    "build_grid",
    "check_app",
    "is_valid_point",
]


def is_valid_point(n: int, l: int, r: int) -> bool:
    """Return True when the segment ``[l - r, l + r)`` lies inside ``[1, n]``."""
    return r >= 1 and l - r >= 1 and l + r - 1 <= n


@dataclass(frozen=True, order=True)
class GridPoint:
    """A (location, scale) pair."""

    l: int
    r: int

    def validate(self, n: int) -> "GridPoint":
        if not is_valid_point(n, self.l, self.r):
            raise OutOfRangeError(
                f"grid point (l={self.l}, r={self.r}) does not fit in a series of length {n}"
            )
        return self

    def __iter__(self):
        yield self.l
        yield self.r

    @property
    def interval(self) -> tuple[int, int]:
        """Closed detection interval ``[l - r + 1, l + r - 1]``."""
        return self.l - self.r + 1, self.l + self.r - 1


def _frozen(arr) -> np.ndarray:
    out = np.asarray(arr, dtype=np.int64).copy()
    out.setflags(write=False)
    return out


class Grid:
    """Immutable collection of scales ``R`` and per-scale locations ``D_r``.

    Scales with no admissible location are dropped, so every scale in
    :attr:`scales` has a non-empty location array.
    """

    __slots__ = ("n", "kind", "scales", "_locations")

    def __init__(self, n: int, kind: str, locations: Mapping[int, "np.ndarray | list[int]"]):
        if n < 2:
            raise InvalidInputError(f"series length must be >= 2, got {n}")
        locs = {}
        for r in sorted(locations):
            arr = np.unique(np.asarray(locations[r], dtype=np.int64))
            if arr.size == 0:
                continue
            r = int(r)
            if r < 1 or arr[0] - r < 1 or arr[-1] + r - 1 > n:
                raise OutOfRangeError(f"scale {r} has locations outside [1, {n}]")
            locs[r] = _frozen(arr)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "scales", tuple(locs))
        object.__setattr__(self, "_locations", locs)

    def __setattr__(self, name, value):
        raise AttributeError("Grid is immutable")

    def locations(self, r: int) -> np.ndarray:
        """Sorted locations ``D_r`` (read-only array)."""
        try:
            return self._locations[r]
        except KeyError:
            raise InvalidInputError(f"scale {r} is not in the grid") from None

    def __len__(self) -> int:
        return sum(a.size for a in self._locations.values())

    def __iter__(self) -> Iterator[GridPoint]:
        for r in self.scales:
            for l in self._locations[r]:
                yield GridPoint(int(l), r)

    def __contains__(self, point) -> bool:
        l, r = point
        arr = self._locations.get(r)
        if arr is None:
            return False
        i = np.searchsorted(arr, l)
        return bool(i < arr.size and arr[i] == l)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.n == other.n
            and self.scales == other.scales
            and all(np.array_equal(self._locations[r], other._locations[r]) for r in self.scales)
        )

    def __repr__(self) -> str:
        return f"Grid(n={self.n}, kind={self.kind!r}, scales={list(self.scales)}, size={len(self)})"

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kind": self.kind,
            "scales": list(self.scales),
            "locations": {str(r): self._locations[r].tolist() for r in self.scales},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping) -> "Grid":
        locs = {int(r): v for r, v in data["locations"].items()}
        grid = cls(int(data["n"]), str(data["kind"]), locs)
        if list(grid.scales) != [int(r) for r in data["scales"]]:
            raise InvalidInputError("grid scales do not match the location map")
        return grid

    @classmethod
    def from_json(cls, text: str) -> "Grid":
        return cls.from_dict(json.loads(text))


def _check_n(n: int) -> None:
    if int(n) != n or n < 2:
        raise InvalidInputError(f"series length must be an integer >= 2, got {n!r}")


def _lattice(n: int, r: int, step: int) -> np.ndarray:
    # Upper end of the half-step lattice always reaches n - r, so clip there.
    return np.arange(r + 1, n - r + 1, step, dtype=np.int64)


def build_dyadic_grid(n: int) -> Grid:
    """Dyadic grid: ``R = {1, 2, ..., 2**(floor(log2 n) - 1)}``, ``D_1 = [2, n]``.

    For ``r >= 2`` the locations are ``r + 1, 3r/2 + 1, 2r + 1, ...`` clipped to
    ``[r + 1, n - r]``.
    """
    _check_n(n)
    top = n.bit_length() - 2  # floor(log2 n) - 1
    locs: dict[int, np.ndarray] = {1: np.arange(2, n + 1, dtype=np.int64)}
    for e in range(1, top + 1):
        r = 1 << e
        locs[r] = _lattice(n, r, r // 2)
    return Grid(n, "dyadic", locs)


def _adic_scales(n: int, a: float) -> list[int]:
    scales = []
    k = 0
    inv = 1.0 / a
    while True:
        # Guard against 1/3**-2 = 8.999999... style rounding.
        r = int(math.floor(inv**k * (1.0 + 1e-12)))
        if r > n / 2:
            break
        if not scales or r != scales[-1]:
            scales.append(r)
        k += 1
    return scales


def build_adic_grid(n: int, a: float) -> Grid:
    """a-adic grid: scales ``floor(a**-k) <= n/2`` (deduplicated).

    Locations follow the dyadic lattice with step ``max(1, floor(r/2))``; for
    ``r = 1`` the locations are ``[2, n]`` as in the dyadic grid.
    """
    _check_n(n)
    if not 0.0 < a < 1.0:
        raise InvalidInputError(f"adic ratio must lie in (0, 1), got {a}")
    locs: dict[int, np.ndarray] = {}
    for r in _adic_scales(n, a):
        if r == 1:
            locs[1] = np.arange(2, n + 1, dtype=np.int64)
        else:
            locs[r] = _lattice(n, r, max(1, r // 2))
    return Grid(n, f"adic:{a:g}", locs)


def build_complete_grid(n: int) -> Grid:
    """Complete grid ``J_n``: every ``r <= n/2`` with ``l in [r + 1, n - r]``."""
    _check_n(n)
    locs = {r: np.arange(r + 1, n - r + 1, dtype=np.int64) for r in range(1, n // 2 + 1)}
    return Grid(n, "complete", locs)


def build_grid(n: int, kind: str) -> Grid:
    """Build a grid from a textual kind: ``dyadic``, ``complete`` or ``adic:<a>``."""
    if kind == "dyadic":
        return build_dyadic_grid(n)
    if kind == "complete":
        return build_complete_grid(n)
    if kind.startswith("adic:"):
        try:
            a = float(kind.split(":", 1)[1])
        except ValueError:
            raise InvalidInputError(f"bad adic ratio in grid kind {kind!r}") from None
        return build_adic_grid(n, a)
    raise InvalidInputError(f"unknown grid kind {kind!r}")


def check_app(grid: Grid) -> bool:
    """Approximation property: every ``l in [r+1, n-r]`` is within ``r - 1`` of ``D_r``."""
    n = grid.n
    for r in grid.scales:
        targets = np.arange(r + 1, n - r + 1, dtype=np.int64)
        if targets.size == 0:
            continue
        locs = grid.locations(r)
        idx = np.searchsorted(locs, targets)
        right = locs[np.minimum(idx, locs.size - 1)]
        left = locs[np.maximum(idx - 1, 0)]
        dist = np.minimum(np.abs(right - targets), np.abs(targets - left))
        if np.any(dist > r - 1):
            return False
    return True
