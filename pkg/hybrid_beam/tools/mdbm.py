"""
Cell bisection for the zeros of a complex function of two real parameters.

A rectangular box is covered by a grid; a cell is a candidate when both the
real and the imaginary part change sign over its four corners. Candidates
are split into four sub-cells for a fixed number of levels, reusing every
corner value already computed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Cell:
    """Candidate cell ``[x0, x1] x [y0, y1]`` with its corner values."""

    x0: float
    x1: float
    y0: float
    y1: float
    corners: tuple[complex, complex, complex, complex]

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)

    @property
    def scale(self) -> float:
        """Median corner magnitude, the local size of the function."""
        return float(np.median(np.abs(self.corners)))


def _changes_sign(values: np.ndarray) -> bool:
    return bool(values.min() <= 0.0 <= values.max())


def is_candidate(corners) -> bool:
    """True when both Re and Im change sign over the corner values."""
    z = np.asarray(corners, dtype=complex)
    if not np.all(np.isfinite(z)):
        return False
    return _changes_sign(z.real) and _changes_sign(z.imag)


class CellBisection:
    """Recursive 2x2 refinement of sign-change cells.

    Corner values are cached on an integer lattice at the finest level, so
    refining never evaluates a point twice.

    Args:
        func: complex function of ``(x, y)``; may return NaN for points it
            cannot evaluate, which removes the cells touching them.
        x_range, y_range: box limits.
        nx, ny: cells per axis of the initial grid (at least 4).
        levels: refinement levels applied to the candidates.
    """

    def __init__(
        self,
        func: Callable[[float, float], complex],
        x_range: tuple[float, float],
        y_range: tuple[float, float],
        nx: int,
        ny: int,
        levels: int = 3,
    ):
        if nx < 4 or ny < 4:
            raise ValueError("resolution must be at least 4 cells per axis")
        self.func = func
        self.x_range = x_range
        self.y_range = y_range
        self.nx = nx
        self.ny = ny
        self.levels = levels
        self._unit = 2**levels
        self._cache: dict[tuple[int, int], complex] = {}
        self.evaluations = 0

    def _coord(self, i: int, j: int) -> tuple[float, float]:
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        fx = i / (self.nx * self._unit)
        fy = j / (self.ny * self._unit)
        return x0 + (x1 - x0) * fx, y0 + (y1 - y0) * fy

    def value(self, i: int, j: int) -> complex:
        key = (i, j)
        if key not in self._cache:
            x, y = self._coord(i, j)
            self._cache[key] = complex(self.func(x, y))
            self.evaluations += 1
        return self._cache[key]

    def _cell(self, i0: int, j0: int, size: int) -> Cell:
        corners = (
            self.value(i0, j0),
            self.value(i0 + size, j0),
            self.value(i0, j0 + size),
            self.value(i0 + size, j0 + size),
        )
        x0, y0 = self._coord(i0, j0)
        x1, y1 = self._coord(i0 + size, j0 + size)
        return Cell(x0, x1, y0, y1, corners)

    def run(self) -> list[Cell]:
        """Candidate cells at the finest refinement level."""
        size = self._unit
        active = []
        for a in range(self.nx):
            for b in range(self.ny):
                cell = self._cell(a * size, b * size, size)
                if is_candidate(cell.corners):
                    active.append((a * size, b * size))
        for _ in range(self.levels):
            size //= 2
            refined = []
            for i0, j0 in active:
                for di in (0, size):
                    for dj in (0, size):
                        cell = self._cell(i0 + di, j0 + dj, size)
                        if is_candidate(cell.corners):
                            refined.append((i0 + di, j0 + dj))
            active = refined
        return [self._cell(i0, j0, size) for i0, j0 in sorted(active)]
