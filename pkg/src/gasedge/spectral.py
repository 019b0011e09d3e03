"""Spectral computations on symmetric (periodic) tridiagonal matrices.

The workhorse is the shifted LDL^T sign-count recursion (Sturm sequence),
which counts eigenvalues strictly below a shift in O(N); the top
eigenvalue follows by bisection inside Gerschgorin bounds. A dense
LAPACK-backed solver serves as the independent oracle, and block
decomposition at vanishing off-diagonals mirrors the structure of
truncated matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import ContractViolation

__all__ = [
    "TridiagonalMatrix",
    "BlockDecomposition",
    "spectral_bounds",
    "sturm_count",
    "lambda_max",
    "truncate",
    "block_decompose",
    "periodic_shift_reduce",
    "dense_spectrum_oracle",
    "sturm_counts_batch",
    "lambda_max_batch",
]

_EPS = np.finfo(float).eps
_DENSE_GUARD = 2000


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Symmetric tridiagonal matrix, optionally with periodic corner entries.

    diag holds a_1..a_N; offdiag holds b_1..b_{N-1}, plus b_N as the corner
    coupling iff periodic.
    """

    diag: np.ndarray = field(repr=False)
    offdiag: np.ndarray = field(repr=False)
    periodic: bool = False

    def __post_init__(self):
        d = np.ascontiguousarray(self.diag, dtype=float)
        b = np.ascontiguousarray(self.offdiag, dtype=float)
        if d.ndim != 1 or d.size == 0:
            raise ContractViolation("diag must be a nonempty 1D array")
        expected = d.size if self.periodic else d.size - 1
        if self.periodic and d.size < 2:
            raise ContractViolation("periodic matrices need N >= 2")
        if b.ndim != 1 or b.size != expected:
            raise ContractViolation(
                f"offdiag must have length {expected} (N={d.size}, periodic={self.periodic}),"
                f" got {b.size}"
            )
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", b)

    @property
    def n(self) -> int:
        return self.diag.size

    def to_dense(self) -> np.ndarray:
        m = np.diag(self.diag)
        inner = self.offdiag[: self.n - 1]
        idx = np.arange(self.n - 1)
        m[idx, idx + 1] = inner
        m[idx + 1, idx] = inner
        if self.periodic:
            m[0, -1] += self.offdiag[-1]
            m[-1, 0] += self.offdiag[-1]
        return m

    def max_abs_entry(self) -> float:
        top = float(np.max(np.abs(self.diag)))
        if self.offdiag.size:
            top = max(top, float(np.max(np.abs(self.offdiag))))
        return top

    def to_csv(self, path) -> None:
        from .reporting import write_csv

        rows = [("meta", "n", str(self.n)), ("meta", "periodic", str(int(self.periodic)))]
        rows += [("diag", str(i), repr(float(v))) for i, v in enumerate(self.diag)]
        rows += [("offdiag", str(i), repr(float(v))) for i, v in enumerate(self.offdiag)]
        write_csv(path, ("component", "index", "value"), rows)

    @classmethod
    def from_csv(cls, path) -> "TridiagonalMatrix":
        import csv

        meta = {}
        diag_entries = {}
        off_entries = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["component", "index", "value"]:
                raise ContractViolation(f"unexpected matrix CSV header {header}")
            for comp, idx, val in reader:
                if comp == "meta":
                    meta[idx] = val
                elif comp == "diag":
                    diag_entries[int(idx)] = float(val)
                elif comp == "offdiag":
                    off_entries[int(idx)] = float(val)
                else:
                    raise ContractViolation(f"unknown CSV component {comp!r}")
        n = int(meta["n"])
        periodic = bool(int(meta["periodic"]))
        diag = np.array([diag_entries[i] for i in range(n)])
        m = n if periodic else n - 1
        off = np.array([off_entries[i] for i in range(m)])
        return cls(diag, off, periodic)


def spectral_bounds(t: TridiagonalMatrix) -> tuple[float, float]:
    """Guaranteed sandwich max(a_i) <= lambda_max <= max(|a_i|+|b_{i-1}|+|b_i|).

    The upper bound is the Gerschgorin row bound; indices wrap modulo N in
    the periodic case and b_N is treated as 0 otherwise.
    """
    lower = float(np.max(t.diag))
    row = np.abs(t.diag).copy()
    inner = np.abs(t.offdiag[: t.n - 1])
    row[:-1] += inner
    row[1:] += inner
    if t.periodic:
        corner = abs(t.offdiag[-1])
        row[0] += corner
        row[-1] += corner
    return lower, float(np.max(row))


def _pivot_floor(scale: float) -> float:
    return _EPS * (1.0 + scale)


def sturm_count(t: TridiagonalMatrix, lam: float) -> int:
    """Number of eigenvalues strictly below lam (non-periodic only).

    Shifted LDL^T recursion with near-zero pivots replaced by +-eta,
    eta = machine epsilon scaled by the matrix norm.
    """
    if t.periodic:
        raise ContractViolation("sturm_count requires a non-periodic matrix")
    eta = _pivot_floor(spectral_bounds(t)[1])
    d = t.diag[0] - lam
    count = 1 if d < 0.0 else 0
    for i in range(1, t.n):
        if abs(d) < eta:
            d = -eta if d < 0.0 else eta
        d = (t.diag[i] - lam) - t.offdiag[i - 1] ** 2 / d
        if d < 0.0:
            count += 1
    return count


def sturm_counts_batch(diag: np.ndarray, offdiag: np.ndarray, lam) -> np.ndarray:
    """Vectorized sturm_count over a batch of non-periodic matrices.

    diag has shape (R, N), offdiag (R, N-1); lam is a scalar or an (R,)
    vector of shifts. Returns an (R,) int array.
    """
    diag = np.asarray(diag, float)
    off2 = np.asarray(offdiag, float) ** 2
    r, n = diag.shape
    lam = np.broadcast_to(np.asarray(lam, float), (r,))
    row = np.abs(diag).copy()
    absoff = np.sqrt(off2)
    row[:, :-1] += absoff
    row[:, 1:] += absoff
    eta = _pivot_floor(0.0) * (1.0 + row.max(axis=1))
    d = diag[:, 0] - lam
    count = (d < 0.0).astype(np.int64)
    for i in range(1, n):
        small = np.abs(d) < eta
        if small.any():
            d = np.where(small, np.where(d < 0.0, -eta, eta), d)
        d = diag[:, i] - lam - off2[:, i - 1] / d
        count += d < 0.0
    return count


def lambda_max(t: TridiagonalMatrix, tol: Optional[float] = None) -> float:
    """Top eigenvalue within tol (default 1e-12 * (1 + inf-norm)).

    Non-periodic: bisection on the Sturm count inside the Gerschgorin
    bracket. Periodic: reduce through a vanishing off-diagonal when one
    exists, else fall back to the dense oracle below the size guard and a
    Lanczos iteration above it.
    """
    lower, upper = spectral_bounds(t)
    if tol is None:
        tol = 1e-12 * (1.0 + upper)
    if t.periodic:
        reduced = periodic_shift_reduce(t)
        if reduced is not None:
            return lambda_max(reduced, tol)
        if t.n <= _DENSE_GUARD:
            return float(dense_spectrum_oracle(t)[-1])
        from scipy.sparse.linalg import eigsh

        m = _periodic_sparse(t)
        val = eigsh(m, k=1, which="LA", return_eigenvectors=False,
                    maxiter=50 * t.n, tol=0.0)
        return float(val[0])
    lo, hi = lower, upper
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if sturm_count(t, mid) == t.n:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def lambda_max_batch(diag: np.ndarray, offdiag: np.ndarray, tol_scale: float = 1e-12) -> np.ndarray:
    """Batched top eigenvalues for non-periodic matrices, via bisection.

    Shapes as in sturm_counts_batch. Accuracy tol_scale*(1+inf norm) per row.
    """
    diag = np.asarray(diag, float)
    off = np.asarray(offdiag, float)
    r, n = diag.shape
    lo = diag.max(axis=1)
    row = np.abs(diag).copy()
    absoff = np.abs(off)
    row[:, :-1] += absoff
    row[:, 1:] += absoff
    hi = row.max(axis=1)
    tol = tol_scale * (1.0 + hi)
    off2 = off * off
    eta = _pivot_floor(0.0) * (1.0 + hi)
    full = np.int64(n)
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        d = diag[:, 0] - mid
        count = (d < 0.0).astype(np.int64)
        for i in range(1, n):
            small = np.abs(d) < eta
            if small.any():
                d = np.where(small, np.where(d < 0.0, -eta, eta), d)
            d = diag[:, i] - mid - off2[:, i - 1] / d
            count += d < 0.0
        below = count == full
        hi = np.where(below, mid, hi)
        lo = np.where(below, lo, mid)
    return 0.5 * (lo + hi)


def truncate(t: TridiagonalMatrix, epsilon: float) -> TridiagonalMatrix:
    """Keep entries with |entry| >= epsilon*sqrt(2 log N), zero the rest.

    For N = 1 the threshold is 0 (log N = 0), so everything is kept.
    """
    if epsilon <= 0:
        raise ContractViolation(f"epsilon must be positive, got {epsilon}")
    thr = epsilon * math.sqrt(2.0 * math.log(t.n)) if t.n >= 2 else 0.0
    diag = np.where(np.abs(t.diag) >= thr, t.diag, 0.0)
    off = np.where(np.abs(t.offdiag) >= thr, t.offdiag, 0.0)
    return TridiagonalMatrix(diag, off, t.periodic)


@dataclass(frozen=True)
class BlockDecomposition:
    """Splitting of a non-periodic matrix at vanishing off-diagonals.

    boundaries = (i_0=0 < i_1 < ... < i_{k+1}=N); block l covers rows
    boundaries[l]..boundaries[l+1]-1.
    """

    boundaries: np.ndarray
    block_sizes: np.ndarray
    d_max: int

    def blocks(self, t: TridiagonalMatrix) -> List[TridiagonalMatrix]:
        out = []
        for a, b in zip(self.boundaries[:-1], self.boundaries[1:]):
            out.append(TridiagonalMatrix(t.diag[a:b], t.offdiag[a : b - 1], False))
        return out

    def reconstruct(self, blocks: Sequence[TridiagonalMatrix]) -> TridiagonalMatrix:
        diag = np.concatenate([b.diag for b in blocks])
        off_parts = []
        for b in blocks:
            off_parts.append(b.offdiag)
            off_parts.append(np.zeros(1))
        off = np.concatenate(off_parts)[:-1] if off_parts else np.zeros(0)
        return TridiagonalMatrix(diag, off, False)


def block_decompose(t: TridiagonalMatrix, zero_tol: float = 0.0) -> BlockDecomposition:
    """Split at off-diagonals that vanish exactly (or up to zero_tol).

    Truncation produces exact zeros, so the default test is equality; pass
    zero_tol > 0 for matrices whose zeros are only approximate.
    """
    if t.periodic:
        raise ContractViolation("block_decompose requires a non-periodic matrix")
    zero = np.abs(t.offdiag) <= zero_tol if zero_tol > 0 else t.offdiag == 0.0
    cuts = np.flatnonzero(zero) + 1
    boundaries = np.concatenate([[0], cuts, [t.n]]).astype(np.int64)
    sizes = np.diff(boundaries)
    return BlockDecomposition(boundaries, sizes, int(sizes.max()))


def periodic_shift_reduce(t: TridiagonalMatrix) -> Optional[TridiagonalMatrix]:
    """Remove the periodic corner by relabeling through a vanishing bond.

    If b_{i*} = 0 for some i*, cyclically shifting the basis by i* makes
    the zero bond the corner entry, which can then be dropped; the result
    is orthogonally similar to the input. Returns None when every
    off-diagonal is nonzero.
    """
    if not t.periodic:
        raise ContractViolation("periodic_shift_reduce requires a periodic matrix")
    zeros = np.flatnonzero(t.offdiag == 0.0)
    if zeros.size == 0:
        return None
    shift = int(zeros[0]) + 1  # bond b_{i*} couples sites i*-1 and i* (0-based i*=shift-1)
    diag = np.roll(t.diag, -shift)
    off = np.roll(t.offdiag, -shift)[: t.n - 1]
    return TridiagonalMatrix(diag, off, False)


def _periodic_sparse(t: TridiagonalMatrix):
    from scipy.sparse import diags_array, lil_matrix

    inner = t.offdiag[: t.n - 1]
    m = diags_array([inner, t.diag, inner], offsets=[-1, 0, 1], format="lil")
    m[0, t.n - 1] += t.offdiag[-1]
    m[t.n - 1, 0] += t.offdiag[-1]
    return m.tocsr()


def dense_spectrum_oracle(t: TridiagonalMatrix) -> np.ndarray:
    """Full sorted spectrum via the classical implicit-shift solver.

    Periodic matrices are embedded as dense symmetric matrices first.
    Guarded to N <= 2000 so accidental huge dense solves fail loudly.
    """
    if t.n > _DENSE_GUARD:
        raise ContractViolation(f"dense oracle limited to N <= {_DENSE_GUARD}, got {t.n}")
    if t.periodic:
        return np.sort(np.linalg.eigvalsh(t.to_dense()))
    if t.n == 1:
        return t.diag.copy()
    return np.sort(
        scipy.linalg.eigh_tridiagonal(t.diag, t.offdiag, eigvals_only=True)
    )
