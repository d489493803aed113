"""
Grid bitmask approximation of measurable subsets of the phase space.

A GridSet is a read-only boolean mask over uniform cells [origin + i h,
origin + (i + 1) h). Measures treat the union of set cells as the set, so
masses of arbitrary intervals use fractional boundary cells.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .map_model import Interval


@dataclass(frozen=True)
class Grid:
    """Uniform partition of [origin, origin + n h]."""

    origin: float
    h: float
    n: int

    @classmethod
    def over(cls, interval: Interval, h: float) -> "Grid":
        n = max(1, int(math.ceil(interval.length / h - 1e-9)))
        return cls(interval.lo, h, n)

    @classmethod
    def dyadic(cls, interval: Interval, exponent: int) -> "Grid":
        """Grid with cell width 2**-exponent * λ(interval)."""
        return cls(interval.lo, interval.length * 2.0 ** (-exponent), 1 << exponent)

    @property
    def end(self) -> float:
        return self.origin + self.n * self.h

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.h * np.arange(self.n + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.origin + self.h * (np.arange(self.n) + 0.5)

    def cell_of(self, x) -> np.ndarray:
        idx = np.floor((np.asarray(x, dtype=float) - self.origin) / self.h).astype(np.int64)
        return np.clip(idx, 0, self.n - 1)

    def cell_bounds(self, i: int) -> Interval:
        return Interval(self.origin + i * self.h, self.origin + (i + 1) * self.h)

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.origin, self.h / factor, self.n * factor)

    def coarsen(self, factor: int = 2) -> "Grid":
        return Grid(self.origin, self.h * factor, -(-self.n // factor))


class GridSet:
    """Immutable cell set on a Grid."""

    def __init__(self, grid: Grid, mask: np.ndarray):
        mask = np.array(mask, dtype=bool, copy=True).reshape(-1)
        if mask.size != grid.n:
            raise ValueError(f"mask has {mask.size} cells, grid has {grid.n}")
        mask.setflags(write=False)
        self.grid = grid
        self.mask = mask

    # Construction

    @classmethod
    def empty(cls, grid: Grid) -> "GridSet":
        return cls(grid, np.zeros(grid.n, dtype=bool))

    @classmethod
    def full(cls, grid: Grid, domain: Optional[Sequence[Interval]] = None) -> "GridSet":
        if domain is None:
            return cls(grid, np.ones(grid.n, dtype=bool))
        return cls.from_intervals(grid, domain)

    @classmethod
    def from_points(cls, grid: Grid, points: Iterable[float]) -> "GridSet":
        mask = np.zeros(grid.n, dtype=bool)
        pts = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=float)
        if pts.size:
            mask[grid.cell_of(pts.ravel())] = True
        return cls(grid, mask)

    @classmethod
    def from_intervals(cls, grid: Grid, intervals: Iterable[Interval]) -> "GridSet":
        """Cells meeting any of the intervals (closed-cell convention)."""
        diff = np.zeros(grid.n + 1, dtype=np.int64)
        for iv in intervals:
            if iv.hi < grid.origin or iv.lo > grid.end:
                continue
            lo = int(grid.cell_of(iv.lo))
            hi = int(grid.cell_of(iv.hi))
            # an interval ending exactly on an edge does not claim the next cell
            if hi > lo and iv.hi == grid.origin + hi * grid.h:
                hi -= 1
            diff[lo] += 1
            diff[hi + 1] -= 1
        return cls(grid, np.cumsum(diff[:-1]) > 0)

    @classmethod
    def from_counts(cls, grid: Grid, counts: np.ndarray, threshold: int) -> "GridSet":
        return cls(grid, np.asarray(counts) >= threshold)

    @classmethod
    def from_rle(cls, data: Dict[str, Any]) -> "GridSet":
        grid = Grid(float(data["origin"]), float(data["h"]), int(data["n"]))
        mask = np.zeros(grid.n, dtype=bool)
        for start, length in data["runs"]:
            mask[int(start) : int(start) + int(length)] = True
        return cls(grid, mask)

    # Basic measurements

    @property
    def h(self) -> float:
        return self.grid.h

    @cached_property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def measure(self) -> float:
        return self.count * self.grid.h

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    @cached_property
    def _prefix(self) -> np.ndarray:
        prefix = np.zeros(self.grid.n + 1, dtype=np.int64)
        np.cumsum(self.mask, out=prefix[1:])
        return prefix

    def cumulative(self, x) -> np.ndarray:
        """λ(X ∩ [origin, x]) for an array of coordinates."""
        g = self.grid
        arr = np.clip(np.asarray(x, dtype=float), g.origin, g.end)
        offset = (arr - g.origin) / g.h
        k = np.clip(np.floor(offset).astype(np.int64), 0, g.n - 1)
        frac = np.clip(offset - k, 0.0, 1.0)
        return g.h * (self._prefix[k] + self.mask[k] * frac)

    def mass(self, interval: Interval) -> float:
        """λ(X ∩ I) with fractional boundary cells."""
        return float(self.cumulative(interval.hi) - self.cumulative(interval.lo))

    def mass_between(self, lo, hi) -> np.ndarray:
        return self.cumulative(hi) - self.cumulative(lo)

    def contains_point(self, x: float) -> bool:
        if x < self.grid.origin or x > self.grid.end:
            return False
        return bool(self.mask[int(self.grid.cell_of(x))])

    def distance_to(self, x: float) -> float:
        """Distance from x to the nearest set cell (0 inside)."""
        if self.is_empty:
            return math.inf
        idx = np.flatnonzero(self.mask)
        lo = self.grid.origin + idx * self.grid.h
        hi = lo + self.grid.h
        gaps = np.maximum(np.maximum(lo - x, x - hi), 0.0)
        return float(gaps.min())

    # Set algebra

    def _same_grid(self, other: "GridSet") -> None:
        if self.grid != other.grid:
            raise ValueError(f"grid mismatch: {self.grid} vs {other.grid}")

    def union(self, other: "GridSet") -> "GridSet":
        self._same_grid(other)
        return GridSet(self.grid, self.mask | other.mask)

    def intersection(self, other: "GridSet") -> "GridSet":
        self._same_grid(other)
        return GridSet(self.grid, self.mask & other.mask)

    def difference(self, other: "GridSet") -> "GridSet":
        self._same_grid(other)
        return GridSet(self.grid, self.mask & ~other.mask)

    def complement(self, domain: Optional[Sequence[Interval]] = None) -> "GridSet":
        base = GridSet.full(self.grid, domain)
        return base.difference(self)

    __or__ = union
    __and__ = intersection
    __sub__ = difference

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, GridSet)
            and self.grid == other.grid
            and bool(np.array_equal(self.mask, other.mask))
        )

    def __hash__(self) -> int:
        return hash((self.grid, self.mask.tobytes()))

    def __repr__(self) -> str:
        return f"GridSet(cells={self.count}/{self.grid.n}, h={self.grid.h:.3g}, measure={self.measure:.6g})"

    def jaccard(self, other: "GridSet") -> float:
        self._same_grid(other)
        union = int((self.mask | other.mask).sum())
        if union == 0:
            return 1.0
        return int((self.mask & other.mask).sum()) / union

    def symmetric_difference_measure(self, other: "GridSet") -> float:
        self._same_grid(other)
        return int((self.mask ^ other.mask).sum()) * self.grid.h

    # Resolution changes

    def refine(self, factor: int = 2) -> "GridSet":
        return GridSet(self.grid.refine(factor), np.repeat(self.mask, factor))

    def coarsen(self, factor: int = 2) -> "GridSet":
        grid = self.grid.coarsen(factor)
        padded = np.zeros(grid.n * factor, dtype=bool)
        padded[: self.grid.n] = self.mask
        return GridSet(grid, padded.reshape(grid.n, factor).any(axis=1))

    def regrid(self, grid: Grid) -> "GridSet":
        """Cells of ``grid`` overlapping any set cell (outer approximation)."""
        idx = np.flatnonzero(self.mask)
        if idx.size == 0:
            return GridSet.empty(grid)
        lo = self.grid.origin + idx * self.grid.h
        hi = lo + self.grid.h
        a = grid.cell_of(lo)
        b = grid.cell_of(np.nextafter(hi, -np.inf))
        diff = np.zeros(grid.n + 1, dtype=np.int64)
        np.add.at(diff, a, 1)
        np.add.at(diff, b + 1, -1)
        return GridSet(grid, np.cumsum(diff[:-1]) > 0)

    # Structure

    def runs(self) -> List[Tuple[int, int]]:
        """(start cell, length) of maximal runs of set cells."""
        padded = np.concatenate(([False], self.mask, [False])).astype(np.int8)
        changes = np.diff(padded)
        starts = np.flatnonzero(changes == 1)
        ends = np.flatnonzero(changes == -1)
        return [(int(s), int(e - s)) for s, e in zip(starts, ends)]

    def run_intervals(self, merge_gap: int = 0) -> List[Interval]:
        """Runs as coordinate intervals, merging runs separated by at most ``merge_gap`` cells."""
        merged: List[List[int]] = []
        for start, length in self.runs():
            if merged and start - (merged[-1][0] + merged[-1][1]) <= merge_gap:
                merged[-1][1] = start + length - merged[-1][0]
            else:
                merged.append([start, length])
        g = self.grid
        return [Interval(g.origin + s * g.h, g.origin + (s + n) * g.h) for s, n in merged]

    def to_rle(self) -> Dict[str, Any]:
        return {
            "origin": self.grid.origin,
            "h": self.grid.h,
            "n": self.grid.n,
            "runs": [[s, n] for s, n in self.runs()],
        }

    def digest(self) -> str:
        """Stable hash of grid and mask."""
        sha = hashlib.sha1()
        sha.update(repr((self.grid.origin, self.grid.h, self.grid.n)).encode())
        sha.update(np.packbits(self.mask).tobytes())
        return sha.hexdigest()

    def cell_centers(self) -> np.ndarray:
        return self.grid.centers[self.mask]

    def reflect(self, mirror: Callable[[np.ndarray], np.ndarray]) -> "GridSet":
        """Image of the set under a pointwise involution, sampled at cell centres."""
        centers = self.grid.centers
        images = mirror(centers)
        inside = np.isfinite(images) & (images >= self.grid.origin) & (images <= self.grid.end)
        mask = np.zeros(self.grid.n, dtype=bool)
        src = self.grid.cell_of(images[inside])
        mask[inside] = self.mask[src]
        return GridSet(self.grid, mask)

    def density_points(self, radius_cells: int = 64, level: float = 0.999) -> "GridSet":
        """Cells where the set occupies at least ``level`` of the surrounding ball."""
        n = self.grid.n
        idx = np.arange(n)
        lo = np.clip(idx - radius_cells, 0, n)
        hi = np.clip(idx + radius_cells + 1, 0, n)
        counts = self._prefix[hi] - self._prefix[lo]
        return GridSet(self.grid, self.mask & (counts >= level * (hi - lo)))

    def density_at(self, x: float, radius_cells: int = 64) -> float:
        g = self.grid
        ball = Interval(max(g.origin, x - radius_cells * g.h), min(g.end, x + radius_cells * g.h))
        if ball.length <= 0:
            return 0.0
        return self.mass(ball) / ball.length
