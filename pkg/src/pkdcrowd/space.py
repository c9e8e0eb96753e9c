"""Axis-aligned boxes over the skill space.

Tree subspaces are half-open ``[lo, hi)`` on every dimension, except that a
face lying on the domain maximum is closed so that the leaves cover the
whole closed domain.  Task metadata are closed ``[lo, hi]`` intervals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Subspace:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    # per-dimension flag: upper face is closed (lies on the domain max)
    hi_closed: tuple[bool, ...]

    @classmethod
    def full(cls, n_dims: int, lo: float = 0.0, hi: float = 1.0) -> "Subspace":
        return cls((lo,) * n_dims, (hi,) * n_dims, (True,) * n_dims)

    @property
    def n_dims(self) -> int:
        return len(self.lo)

    def width(self, dim: int) -> float:
        return self.hi[dim] - self.lo[dim]

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def split(self, dim: int, value: float) -> tuple["Subspace", "Subspace"]:
        value = min(max(value, self.lo[dim]), self.hi[dim])
        left_hi = list(self.hi)
        left_hi[dim] = value
        left_closed = list(self.hi_closed)
        left_closed[dim] = False
        right_lo = list(self.lo)
        right_lo[dim] = value
        left = Subspace(self.lo, tuple(left_hi), tuple(left_closed))
        right = Subspace(tuple(right_lo), self.hi, self.hi_closed)
        return left, right

    def contains(self, points) -> np.ndarray:
        """Membership mask for an ``(N, n)`` array (or one point)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        closed = np.asarray(self.hi_closed)
        below = np.where(closed, pts <= hi, pts < hi)
        return np.all((pts >= lo) & below, axis=1)

    def intersects_closed_box(self, lo, hi) -> bool:
        """True when some point lies both here and in the closed box ``[lo, hi]``."""
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        mlo, mhi = np.asarray(self.lo), np.asarray(self.hi)
        closed = np.asarray(self.hi_closed)
        upper_ok = np.where(closed, lo <= mhi, lo < mhi)
        return bool(np.all(upper_ok & (hi >= mlo) & (lo <= hi)))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "hi_closed": list(self.hi_closed)}

    @classmethod
    def from_dict(cls, d: dict) -> "Subspace":
        return cls(tuple(d["lo"]), tuple(d["hi"]), tuple(bool(x) for x in d["hi_closed"]))


def stack_subspaces(boxes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(lo, hi, hi_closed)`` arrays of shape ``(B, n)``."""
    lo = np.array([b.lo for b in boxes], dtype=float)
    hi = np.array([b.hi for b in boxes], dtype=float)
    closed = np.array([b.hi_closed for b in boxes], dtype=bool)
    return lo, hi, closed


def intersect_mask(box_lo, box_hi, box_closed, task_lo, task_hi) -> np.ndarray:
    """``(B, K)`` mask: box ``b`` shares at least one point with closed task ``k``."""
    blo, bhi, bcl = box_lo[:, None, :], box_hi[:, None, :], box_closed[:, None, :]
    tlo, thi = task_lo[None, :, :], task_hi[None, :, :]
    upper_ok = np.where(bcl, tlo <= bhi, tlo < bhi)
    return np.all(upper_ok & (thi >= blo), axis=2)


def overlap_volume(box_lo, box_hi, task_lo, task_hi) -> np.ndarray:
    """``(B, K)`` Lebesgue volume of box/task intersections."""
    lo = np.maximum(box_lo[:, None, :], task_lo[None, :, :])
    hi = np.minimum(box_hi[:, None, :], task_hi[None, :, :])
    return np.prod(np.clip(hi - lo, 0.0, None), axis=2)
