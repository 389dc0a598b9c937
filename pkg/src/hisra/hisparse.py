"""Hierarchically sparse projection of a family of vectors sharing one support.

Vectors are arrays of shape (t, r, s): t slots, r blocks of length s. The
best (k_u, k_s) approximation is found by optimal substructures: best k_s
entries per block first, then the k_u heaviest blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from typing import NamedTuple

import numpy as np

__all__ = [
    "HiSupport",
    "BlockScores",
    "block_scores",
    "select_blocks",
    "hi_project",
    "exhaustive_project",
    "projection_error",
    "as_family",
]

EXHAUSTIVE_MAX_ENTRIES = 16


def as_family(v) -> np.ndarray:
    """Coerce (r, s) or (t, r, s) input to a (t, r, s) complex array."""
    v = np.asarray(v)
    if v.ndim == 2:
        v = v[None]
    if v.ndim != 3:
        raise ValueError(f"expected shape (r, s) or (t, r, s), got {v.shape}")
    return v


@dataclass(frozen=True)
class HiSupport:
    """Active blocks and, for each, its in-block index set (both sorted)."""

    r: int
    s: int
    blocks: tuple[int, ...] = ()
    omegas: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if len(self.blocks) != len(self.omegas):
            raise ValueError("one in-block set per active block required")
        if any(not 0 <= k < self.r for k in self.blocks):
            raise ValueError("block index out of range")
        if any(not 0 <= l < self.s for om in self.omegas for l in om):
            raise ValueError("in-block index out of range")

    @classmethod
    def from_mask(cls, mask) -> "HiSupport":
        mask = np.asarray(mask, dtype=bool)
        blocks = tuple(int(k) for k in np.flatnonzero(mask.any(axis=1)))
        return cls(mask.shape[0], mask.shape[1], blocks,
                   tuple(tuple(int(l) for l in np.flatnonzero(mask[k])) for k in blocks))

    def mask(self) -> np.ndarray:
        out = np.zeros((self.r, self.s), dtype=bool)
        for k, om in zip(self.blocks, self.omegas):
            out[k, list(om)] = True
        return out

    def flat(self) -> np.ndarray:
        """Flattened coordinates k*s + l of Omega, ascending."""
        return np.flatnonzero(self.mask().reshape(-1))

    def omega(self, k: int) -> tuple[int, ...]:
        return self.omegas[self.blocks.index(k)] if k in self.blocks else ()

    def __len__(self):
        return sum(len(om) for om in self.omegas)


class BlockScores(NamedTuple):
    omega: np.ndarray  # (r, k_s) chosen in-block indices, best first
    score: np.ndarray  # (r,) captured energy per block
    energy: np.ndarray  # (r, s) cross-slot entry energies


def block_scores(v_family, k_s: int) -> BlockScores:
    """Per block, the k_s entries of largest cross-slot energy and their energy sum.

    Ties go to the lower in-block index.
    """
    v = as_family(v_family)
    if not 1 <= k_s <= v.shape[2]:
        raise ValueError(f"k_s must lie in [1, {v.shape[2]}]")
    energy = np.sum(np.abs(v) ** 2, axis=0)
    omega = np.argsort(-energy, axis=1, kind="stable")[:, :k_s]
    score = np.take_along_axis(energy, omega, axis=1).sum(axis=1)
    return BlockScores(omega, score, energy)


def select_blocks(scores, k_u: int, threshold: float = 0.0) -> np.ndarray:
    """Up to k_u block indices with the largest scores strictly above ``threshold``.

    Returned in decreasing score order; ties go to the lower block index.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores, kind="stable")
    order = order[scores[order] > threshold]
    return order[: max(int(k_u), 0)]


def hi_project(v_family, k_u: int, k_s: int, threshold: float = 0.0) -> HiSupport:
    v = as_family(v_family)
    bs = block_scores(v, k_s)
    chosen = sorted(int(k) for k in select_blocks(bs.score, k_u, threshold))
    omegas = tuple(tuple(sorted(int(l) for l in bs.omega[k])) for k in chosen)
    return HiSupport(v.shape[1], v.shape[2], tuple(chosen), omegas)


def projection_error(v_family, support: HiSupport) -> float:
    """sum_i ||v^i - v^i restricted to Omega||^2."""
    v = as_family(v_family)
    residual = np.where(support.mask()[None], 0, v)
    return float(np.sum(np.abs(residual) ** 2))


def exhaustive_project(v_family, k_u: int, k_s: int) -> HiSupport:
    """Best support by enumerating every admissible (k_u, k_s) support. Test oracle."""
    v = as_family(v_family)
    _, r, s = v.shape
    if r * s > EXHAUSTIVE_MAX_ENTRIES:
        raise ValueError(f"instance too large for exhaustive search (r*s = {r * s})")
    in_block = [()] + [om for size in range(1, min(k_s, s) + 1) for om in combinations(range(s), size)]
    best, best_err = None, np.inf
    for choice in product(in_block, repeat=r):
        if sum(1 for om in choice if om) > k_u:
            continue
        blocks = tuple(k for k, om in enumerate(choice) if om)
        cand = HiSupport(r, s, blocks, tuple(choice[k] for k in blocks))
        err = projection_error(v, cand)
        if err < best_err:
            best, best_err = cand, err
    return best
