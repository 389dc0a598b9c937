"""DFT machinery: unitary and sub-sampled DFT operators, coherence, Welch bound,
and square-submatrix diagnostics for prime and composite transform sizes."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

__all__ = [
    "DftOperator",
    "SubsampledDft",
    "apply_dft",
    "apply_subsampled",
    "coherence",
    "welch_bound",
    "is_prime",
    "dft_submatrix",
    "prime_submatrix_injective",
    "composite_counterexample",
]

# below this size the explicit matrix is used when method="auto"
DIRECT_MAX_N = 64
RANK_TOL = 1e-8


def _as_vector(v, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.shape[-1] != n:
        raise ValueError(f"dimension mismatch: expected length {n}, got {v.shape[-1]}")
    return v


def dft_matrix(n: int) -> np.ndarray:
    """Normalized DFT matrix with entries n^{-1/2} exp(-2 pi i p q / n)."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


@dataclass(frozen=True)
class DftOperator:
    """Unitary n-point DFT.

    ``method`` selects the explicit O(n^2) matrix action ("direct"), the FFT
    ("fft") or picks by size ("auto").
    """

    n: int
    method: str = "auto"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.method not in ("auto", "direct", "fft"):
            raise ValueError(f"unknown method {self.method!r}")

    def _direct(self) -> bool:
        return self.method == "direct" or (self.method == "auto" and self.n <= DIRECT_MAX_N)

    def forward(self, v) -> np.ndarray:
        v = _as_vector(v, self.n)
        if self._direct():
            return v @ dft_matrix(self.n).T
        return np.fft.fft(v, norm="ortho")

    def inverse(self, v) -> np.ndarray:
        v = _as_vector(v, self.n)
        if self._direct():
            return v @ dft_matrix(self.n).conj()
        return np.fft.ifft(v, norm="ortho")

    def matrix(self) -> np.ndarray:
        return dft_matrix(self.n)


def apply_dft(v, direction: str = "forward", method: str = "auto") -> np.ndarray:
    """Apply the unitary DFT (``forward``) or its adjoint (``inverse``) along the last axis."""
    v = np.asarray(v, dtype=complex)
    op = DftOperator(v.shape[-1], method)
    if direction == "forward":
        return op.forward(v)
    if direction == "inverse":
        return op.inverse(v)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


@dataclass(frozen=True, eq=False)
class SubsampledDft:
    """The energy-preserving partial DFT  A = sqrt(n/m) * Phi_B.

    Rows of Phi are selected in the order given by ``rows``. Columns of A have
    unit Euclidean norm.
    """

    n: int
    rows: np.ndarray
    scale: float = field(init=False)

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.int64).reshape(-1)
        if rows.size == 0:
            raise ValueError("row set must be nonempty")
        if rows.min() < 0 or rows.max() >= self.n:
            raise ValueError(f"row indices must lie in [0, {self.n})")
        if np.unique(rows).size != rows.size:
            raise ValueError("row indices must be distinct")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "scale", float(np.sqrt(self.n / rows.size)))

    @property
    def m(self) -> int:
        return self.rows.size

    def apply(self, v) -> np.ndarray:
        v = _as_vector(v, self.n)
        return self.scale * np.fft.fft(v, norm="ortho")[..., self.rows]

    def adjoint(self, b, n_cols: int | None = None) -> np.ndarray:
        """A^* b, optionally truncated to the first ``n_cols`` coordinates."""
        b = np.asarray(b, dtype=complex)
        if b.shape[-1] != self.m:
            raise ValueError(f"dimension mismatch: expected length {self.m}, got {b.shape[-1]}")
        full = np.zeros(b.shape[:-1] + (self.n,), dtype=complex)
        full[..., self.rows] = b
        out = self.scale * np.fft.ifft(full, norm="ortho")
        return out if n_cols is None else out[..., :n_cols]

    def columns(self, cols) -> np.ndarray:
        """Explicit m x |cols| matrix of the selected columns of A."""
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        phase = np.outer(self.rows, cols) % self.n
        return self.scale * np.exp(-2j * np.pi * phase / self.n) / np.sqrt(self.n)

    def matrix(self, n_cols: int | None = None) -> np.ndarray:
        return self.columns(np.arange(self.n if n_cols is None else n_cols))


def apply_subsampled(op: SubsampledDft, v) -> np.ndarray:
    return op.apply(v)


def coherence(op: SubsampledDft, n_cols: int | None = None) -> float:
    """Mutual coherence of the (first ``n_cols``) unit-norm columns of ``op``.

    The Gram matrix of a partial DFT is Toeplitz-circulant,
    <a_k, a_l> = (1/m) sum_{p in B} exp(-2 pi i p (l - k) / n), so the maximum
    over column pairs equals the maximum over column offsets 1..n_cols-1 of the
    DFT of the row indicator. This is exact, not an estimate.
    """
    n = op.n
    n_cols = n if n_cols is None else min(int(n_cols), n)
    if n_cols < 2:
        return 0.0
    indicator = np.zeros(n)
    indicator[op.rows] = 1.0
    gram_row = np.fft.fft(indicator) / op.m
    return float(np.max(np.abs(gram_row[1:n_cols])))


def welch_bound(n_cols: int, m: int) -> float:
    """Lower bound sqrt((N - m) / (m (N - 1))) on the coherence of N unit vectors in C^m."""
    if n_cols < 2 or m < 1:
        raise ValueError("need n_cols >= 2 and m >= 1")
    if m >= n_cols:
        return 0.0
    return float(np.sqrt((n_cols - m) / (m * (n_cols - 1))))


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def dft_submatrix(n: int, rows, cols) -> np.ndarray:
    """Rows ``rows`` and columns ``cols`` of the unnormalized n-point DFT matrix."""
    rows = np.asarray(list(rows), dtype=np.int64)
    cols = np.asarray(list(cols), dtype=np.int64)
    return np.exp(-2j * np.pi * (np.outer(rows, cols) % n) / n)


def _full_row_rank(mat: np.ndarray, tol: float = RANK_TOL) -> bool:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return False
    return int(np.sum(sv > tol * sv[0])) == mat.shape[0]


def prime_submatrix_injective(n: int, rows, cols) -> bool:
    """Whether the DFT submatrix on (rows, cols) has full row rank, for prime n.

    For prime n every square submatrix of the DFT is invertible, so any choice
    with |rows| <= |cols| must come back True.
    """
    if not is_prime(n):
        raise ValueError(f"n={n} is not prime")
    rows, cols = list(rows), list(cols)
    if len(rows) > len(cols):
        raise ValueError("need |rows| <= |cols|")
    if any(not 0 <= x < n for x in rows + cols):
        raise ValueError(f"indices must lie in [0, {n})")
    return _full_row_rank(dft_submatrix(n, rows, cols))


def composite_counterexample(p: int, q: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Rows J and columns I giving a singular square DFT submatrix for n = p*q.

    Columns are I = p*[q]; the indicator of I is annihilated by every DFT row
    outside q*[p], so any |I| rows avoiding q*[p] form a singular block.
    """
    if p < 2 or q < 2:
        raise ValueError("need p, q >= 2")
    n = p * q
    cols = tuple(p * j for j in range(q))
    forbidden = {q * j for j in range(p)}
    allowed = [k for k in range(n) if k not in forbidden]
    if len(allowed) < len(cols):
        raise ValueError("no admissible row set exists")
    rows = tuple(allowed[: len(cols)])
    return rows, cols


def square_submatrices(n: int, size: int):
    """Yield every (rows, cols) pair of ``size``-subsets of [n]."""
    subsets = list(combinations(range(n), size))
    for rows in subsets:
        for cols in subsets:
            yield rows, cols
