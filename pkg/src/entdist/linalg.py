"""Dense linear algebra for small composite Hilbert spaces.

Subsystems are ordered by tensor-product concatenation; every index set
passed to the partial operations refers to that order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 64
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-10


class DimensionError(ValueError):
    """Raised for malformed subsystem requests or oversized spaces."""


def _check_size(n: int) -> None:
    if n > MAX_DIM:
        raise DimensionError(f"total dimension {n} exceeds the cap of {MAX_DIM}")


def _normalize_dims(dims, n: int) -> tuple[int, ...]:
    if dims is None:
        return (n,)
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims) or int(np.prod(dims)) != n:
        raise DimensionError(f"dims {dims} do not multiply to {n}")
    return dims


def _check_indices(indices: Iterable[int], nsys: int) -> list[int]:
    idx = sorted(set(int(i) for i in indices))
    for i in idx:
        if not 0 <= i < nsys:
            raise DimensionError(f"subsystem index {i} out of range for {nsys} subsystems")
    return idx


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace operator with subsystem dims."""

    matrix: np.ndarray
    dims: tuple[int, ...] = field(default=None)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError("density matrix must be square")
        _check_size(m.shape[0])
        object.__setattr__(self, "dims", _normalize_dims(self.dims, m.shape[0]))
        if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ValueError("matrix is not Hermitian")
        m = 0.5 * (m + m.conj().T)
        if abs(np.trace(m).real - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {np.trace(m).real} is not 1")
        if np.linalg.eigvalsh(m)[0] < -PSD_TOL:
            raise ValueError("matrix has negative eigenvalues")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_array(cls, m, dims=None, *, clip: bool = True) -> "DensityMatrix":
        """Build from an almost-valid array, symmetrizing, clipping tiny negative
        eigenvalues and renormalizing the trace."""
        m = np.asarray(m, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        if clip:
            w, v = np.linalg.eigh(m)
            if w[0] < 0:
                w = np.clip(w, 0.0, None)
                m = (v * w) @ v.conj().T
                m = 0.5 * (m + m.conj().T)
        return cls(m / np.trace(m).real, dims)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __repr__(self):
        return f"DensityMatrix(dims={self.dims})"


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray
    dims: tuple[int, ...] = field(default=None)

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex).ravel()
        _check_size(a.size)
        object.__setattr__(self, "dims", _normalize_dims(self.dims, a.size))
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise ValueError("state vector is not normalized")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    def density_matrix(self) -> DensityMatrix:
        a = self.amplitudes
        return DensityMatrix(np.outer(a, a.conj()), self.dims)


# array-level kernels; public wrappers below add validation

def ptrace_array(m: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace of a square array over all subsystems not in ``keep``."""
    dims = list(dims)
    n = len(dims)
    keep = sorted(keep)
    drop = [i for i in range(n) if i not in keep]
    t = m.reshape(dims + dims)
    # bring kept row indices first, then dropped; same for columns
    perm = keep + drop + [n + i for i in keep] + [n + i for i in drop]
    t = t.transpose(perm)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    t = t.reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def ptranspose_array(m: np.ndarray, dims: Sequence[int], part: Sequence[int]) -> np.ndarray:
    """Transpose the subsystems in ``part``; an involution and a Frobenius isometry."""
    dims = list(dims)
    n = len(dims)
    perm = list(range(2 * n))
    for i in part:
        perm[i], perm[n + i] = n + i, i
    N = m.shape[0]
    return m.reshape(dims + dims).transpose(perm).reshape(N, N)


def permute_array(m: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder subsystems so that new subsystem ``k`` is old subsystem ``order[k]``."""
    dims = list(dims)
    n = len(dims)
    N = m.shape[0]
    perm = list(order) + [n + i for i in order]
    return m.reshape(dims + dims).transpose(perm).reshape(N, N)


def embed_operator(op: np.ndarray, dims: Sequence[int], subsystem: int) -> np.ndarray:
    """Lift an operator on one subsystem to the full space (possibly changing that
    subsystem's dimension for rectangular ``op``)."""
    left = int(np.prod(dims[:subsystem])) if subsystem else 1
    right = int(np.prod(dims[subsystem + 1:])) if subsystem + 1 < len(dims) else 1
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def clipped_eigvalsh(m: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(m)
    return np.clip(w, 0.0, None)


# public operations

def tensor(*states: DensityMatrix) -> DensityMatrix:
    """Kronecker product of density matrices, dims concatenated in argument order."""
    if not states:
        raise ValueError("tensor needs at least one state")
    m = states[0].matrix
    dims = list(states[0].dims)
    for s in states[1:]:
        _check_size(m.shape[0] * s.dim)
        m = np.kron(m, s.matrix)
        dims += list(s.dims)
    return DensityMatrix(m, dims)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    keep = _check_indices(keep, len(rho.dims))
    m = ptrace_array(rho.matrix, rho.dims, keep)
    dims = [rho.dims[i] for i in keep] or [1]
    return DensityMatrix(0.5 * (m + m.conj().T), dims)


def partial_transpose(rho, part: Iterable[int], dims=None) -> np.ndarray:
    """Partial transpose on ``part``. Accepts a DensityMatrix or a raw array with ``dims``."""
    if isinstance(rho, DensityMatrix):
        m, dims = rho.matrix, rho.dims
    else:
        m = np.asarray(rho, dtype=complex)
        dims = _normalize_dims(dims, m.shape[0])
    part = _check_indices(part, len(dims))
    return ptranspose_array(m, dims, part)


def eig_hermitian(m, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.

    Raises ValueError if ``m`` deviates from Hermitian by more than ``tol``
    (max elementwise).
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError("matrix must be square")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol:
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return w[::-1], v[:, ::-1]


def trace_norm(m) -> float:
    m = m.matrix if isinstance(m, DensityMatrix) else np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError("trace norm needs a square matrix")
    if m.size == 0:
        return 0.0
    if np.allclose(m, m.conj().T, atol=1e-12, rtol=0):
        return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def fidelity_and_trace_distance(a: DensityMatrix, b: DensityMatrix) -> tuple[float, float]:
    """Uhlmann fidelity (squared convention, ``F = (Tr|sqrt(a) sqrt(b)|)^2``) and
    trace distance ``||a - b||_1 / 2``."""
    if a.dims != b.dims:
        raise DimensionError(f"dims differ: {a.dims} vs {b.dims}")
    sa = _sqrtm_psd(a.matrix)
    sb = _sqrtm_psd(b.matrix)
    f = float(np.sum(np.linalg.svd(sa @ sb, compute_uv=False)) ** 2)
    dist = 0.5 * trace_norm(a.matrix - b.matrix)
    return min(max(f, 0.0), 1.0), min(max(dist, 0.0), 1.0)


def trace_distance_array(a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


# common states

def basis_state(index: int, dims: Sequence[int]) -> DensityMatrix:
    n = int(np.prod(dims))
    m = np.zeros((n, n), dtype=complex)
    m[index, index] = 1.0
    return DensityMatrix(m, dims)


def maximally_mixed(dims: Sequence[int]) -> DensityMatrix:
    n = int(np.prod(dims))
    return DensityMatrix(np.eye(n) / n, dims)


def max_entangled_vector(d: int) -> np.ndarray:
    """``(1/sqrt d) sum_k |k>|k>``."""
    v = np.zeros(d * d, dtype=complex)
    v[:: d + 1] = 1.0 / np.sqrt(d)
    return v


def max_entangled(d: int) -> DensityMatrix:
    v = max_entangled_vector(d)
    return DensityMatrix(np.outer(v, v.conj()), (d, d))


def random_pure_vector(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def random_density_array(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre-ensemble random density matrix as a raw array."""
    k = n if rank is None else rank
    g = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_density_matrix(dims: Sequence[int], rng: np.random.Generator, rank=None) -> DensityMatrix:
    n = int(np.prod(dims))
    return DensityMatrix.from_array(random_density_array(n, rng, rank), dims)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph
