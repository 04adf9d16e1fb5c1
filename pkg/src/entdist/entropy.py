"""Entropic quantities and single-letter capacity bounds (all in bits)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .channels import QuantumChannel
from .linalg import DensityMatrix, ptrace_array

EIG_CUTOFF = 1e-12
SUPPORT_TOL = 1e-10
N_RANDOM_STARTS = 6
OPT_FTOL = 1e-7
OPT_SEED = 1234


def _entropy_from_eigs(w: np.ndarray) -> float:
    w = w[w > EIG_CUTOFF]
    return float(-np.sum(w * np.log2(w)))


def entropy_array(m: np.ndarray) -> float:
    return _entropy_from_eigs(np.linalg.eigvalsh(m))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """``-sum lambda log2 lambda`` over eigenvalues above the zero cutoff."""
    return entropy_array(rho.matrix)


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if p in (0.0, 1.0):
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def relative_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """``D(rho||sigma)`` in bits; ``inf`` when supp(rho) is not inside supp(sigma)."""
    if rho.dims != sigma.dims:
        raise ValueError(f"dims differ: {rho.dims} vs {sigma.dims}")
    return relative_entropy_array(rho.matrix, sigma.matrix)


def relative_entropy_array(rho: np.ndarray, sigma: np.ndarray) -> float:
    wr = np.linalg.eigvalsh(rho)
    ws, vs = np.linalg.eigh(sigma)
    # weight of rho on each sigma eigenvector
    weights = np.real(np.einsum("ij,ik,kj->j", vs.conj(), rho, vs))
    null = ws <= EIG_CUTOFF
    if np.any(weights[null] > SUPPORT_TOL):
        return float("inf")
    cross = float(np.sum(weights[~null] * np.log2(ws[~null])))
    return max(-_entropy_from_eigs(wr) - cross, 0.0)


def coherent_information_array(m: np.ndarray, dims) -> float:
    """``S(B) - S(AB)`` with A = subsystem 0, B = subsystem 1."""
    return entropy_array(ptrace_array(m, dims, [1])) - entropy_array(m)


def coherent_information_state(rho_ab: DensityMatrix, reverse: bool = False) -> float:
    """``I_c(A>B) = S(B) - S(AB)``; ``reverse=True`` gives ``I_c(B>A)``."""
    if len(rho_ab.dims) != 2:
        raise ValueError("coherent information needs a bipartite state")
    keep = 0 if reverse else 1
    return entropy_array(ptrace_array(rho_ab.matrix, rho_ab.dims, [keep])) - entropy_array(rho_ab.matrix)


# input-state parametrization: rho = L L^+ / Tr(L L^+), L lower triangular

def n_params(d: int) -> int:
    return d * d


def params_to_density(x: np.ndarray, d: int) -> np.ndarray:
    L = np.zeros((d, d), dtype=complex)
    L[np.diag_indices(d)] = x[:d]
    il = np.tril_indices(d, -1)
    m = len(il[0])
    L[il] = x[d:d + m] + 1j * x[d + m:d + 2 * m]
    rho = L @ L.conj().T
    tr = np.trace(rho).real
    if tr < 1e-300:
        return np.eye(d) / d
    return rho / tr


def density_to_params(rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    w, v = np.linalg.eigh(rho)
    r = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    # Cholesky of a slightly regularized rho gives a lower-triangular factor
    L = np.linalg.cholesky(r @ r.conj().T + 1e-14 * np.eye(d))
    # make diagonal real
    il = np.tril_indices(d, -1)
    return np.concatenate([L[np.diag_indices(d)].real, L[il].real, L[il].imag])


def purified_output(channel: QuantumChannel, rho_in: np.ndarray) -> np.ndarray:
    """``(id x N)(psi)`` on ``A (x) B`` for the canonical purification ``psi`` of ``rho_in``."""
    w, v = np.linalg.eigh(rho_in)
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    # |psi> = sum_k |k> (x) sqrt(rho)|k>
    out = 0
    for k in channel.kraus:
        m = k @ sq  # columns are (K sqrt(rho))|k>
        vec = m.T.reshape(-1)  # A index slow, B index fast
        out = out + np.outer(vec, vec.conj())
    return out


def exchange_matrix(channel: QuantumChannel, rho_in: np.ndarray) -> np.ndarray:
    """``W_ij = Tr(K_i rho K_j^+)``, spectrum equal to that of the purified output."""
    k = channel.kraus_stack
    return np.einsum("iab,bc,jac->ij", k, rho_in, k.conj())


def coherent_information_input(channel: QuantumChannel, rho_in: np.ndarray) -> float:
    """``I_c(A>B)`` at a given input marginal, via output and exchange entropies."""
    return entropy_array(channel(rho_in)) - entropy_array(exchange_matrix(channel, rho_in))


def reverse_coherent_information_input(channel: QuantumChannel, rho_in: np.ndarray) -> float:
    """``I_c(B>A) = S(A) - S(AB)`` at a given input marginal."""
    return entropy_array(rho_in) - entropy_array(exchange_matrix(channel, rho_in))


@dataclass
class OptimizationResult:
    value: float
    rho_in: np.ndarray
    start_values: list[float]
    n_starts: int


def starting_points(d: int, n_random: int = N_RANDOM_STARTS, seed: int = OPT_SEED) -> list[np.ndarray]:
    """Maximally mixed, a biased diagonal, and ``n_random`` random parameter vectors."""
    rng = np.random.default_rng(seed)
    starts = [np.concatenate([np.ones(d), np.zeros(d * d - d)])]
    diag = np.concatenate([[1.0], 0.3 * np.ones(d - 1)])
    starts.append(np.concatenate([diag, np.zeros(d * d - d)]))
    for _ in range(n_random):
        starts.append(rng.normal(size=d * d))
    return starts


def maximize_over_inputs(objective: Callable[[np.ndarray], float], d: int, *,
                         starts=None, ftol: float = OPT_FTOL, xtol: float = 1e-5,
                         maxiter: int | None = None) -> OptimizationResult:
    """Multi-start Nelder-Mead maximization of ``objective(rho_in)`` over ``d x d`` inputs.

    Starts are independent; the reduction keeps the best value and never
    returns less than the best starting value.
    """
    if starts is None:
        starts = starting_points(d)
    best_val, best_rho = -np.inf, None
    start_vals = []
    for x0 in starts:
        f0 = objective(params_to_density(x0, d))
        start_vals.append(f0)
        res = minimize(lambda x: -objective(params_to_density(x, d)), x0, method="Nelder-Mead",
                       options={"fatol": ftol, "xatol": xtol,
                                "maxiter": maxiter or 400 * len(x0), "adaptive": len(x0) > 4})
        cand = [(f0, x0), (-res.fun, res.x)]
        for val, x in cand:
            if val > best_val:
                best_val, best_rho = val, params_to_density(x, d)
    return OptimizationResult(float(best_val), best_rho, start_vals, len(starts))


def coherent_information_channel(channel: QuantumChannel, *, return_input: bool = False):
    """Single-letter coherent information ``max_rho I_c``; a lower bound on Q."""
    if channel.in_dim > 8:
        raise ValueError("input dimension above 8 is not supported")
    res = maximize_over_inputs(lambda r: coherent_information_input(channel, r), channel.in_dim)
    return (res.value, res.rho_in) if return_input else res.value


def reverse_coherent_information_channel(channel: QuantumChannel, *, return_input: bool = False):
    """Reverse coherent information ``max_rho I_c(B>A)``; a lower bound on E_cpp."""
    if channel.in_dim > 8:
        raise ValueError("input dimension above 8 is not supported")
    res = maximize_over_inputs(lambda r: reverse_coherent_information_input(channel, r), channel.in_dim)
    return (res.value, res.rho_in) if return_input else res.value
