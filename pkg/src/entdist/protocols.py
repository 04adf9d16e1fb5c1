"""Capacity bounds for EPR and GHZ distribution over pairs and tuples of channels.

Every bound endpoint carries a source label saying which quantity produced it.
Single-letter coherent information stands in for the quantum capacity Q, and
reverse coherent information for the CPP-assisted capacity E_cpp (both lower
bounds); channel Rains information is the upper bound.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channels import (
    ChannelParams,
    QuantumChannel,
    cached_channel,
    choi_array,
    generalized_paulis,
    is_teleportation_covariant,
)
from .entropy import (
    binary_entropy,
    coherent_information_array,
    coherent_information_channel,
    reverse_coherent_information_channel,
)
from .linalg import DimensionError, max_entangled_vector, permute_array, random_unitary
from .rains import rains_information_channel

BOUND_TOL = 1e-6
POVM_TOL = 1e-10
MULTIRAIL_KS = (2, 3, 4, 5, 6)
N_MEASUREMENTS = 8
ASSIST_SEED = 0
REFINE_STEPS = 200
REFINE_STEP0 = 0.1


class BoundError(RuntimeError):
    """Raised when a computed lower bound exceeds the upper bound."""


@dataclass(frozen=True)
class BoundInterval:
    lower: float
    upper: float
    lower_source: str
    upper_source: str

    def __post_init__(self):
        if not self.lower <= self.upper + BOUND_TOL:
            raise BoundError(
                f"inconsistent bounds: lower {self.lower} ({self.lower_source}) > "
                f"upper {self.upper} ({self.upper_source})")

    def as_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper,
                "lower_source": self.lower_source, "upper_source": self.upper_source}


@dataclass(frozen=True)
class MeasurementFamily:
    """POVM on the helper system; rank-1 projective families come from unitaries."""

    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(np.asarray(m, dtype=complex) for m in self.operators)
        if not ops:
            raise ValueError("empty measurement family")
        n = ops[0].shape[0]
        for m in ops:
            if m.shape != (n, n):
                raise DimensionError("measurement operators must share one square shape")
            if np.max(np.abs(m - m.conj().T)) > POVM_TOL:
                raise ValueError("measurement operator is not Hermitian")
            if np.linalg.eigvalsh(m)[0] < -POVM_TOL:
                raise ValueError("measurement operator is not PSD")
        if np.max(np.abs(sum(ops) - np.eye(n))) > POVM_TOL:
            raise ValueError("measurement operators do not sum to the identity")
        object.__setattr__(self, "operators", ops)

    @classmethod
    def from_basis(cls, u: np.ndarray) -> "MeasurementFamily":
        """Projectors onto the columns of the unitary ``u``."""
        return cls(tuple(np.outer(u[:, i], u[:, i].conj()) for i in range(u.shape[1])))


# closed forms

def _check_prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name}={p} outside [0, 1]")


def erasure_capacity(p1: float, p2: float, d: int) -> float:
    """EPR distribution capacity of two erasure channels, ``(1-p1)(1-p2) log2 d``."""
    _check_prob("p1", p1)
    _check_prob("p2", p2)
    if d != int(d) or d < 2:
        raise ValueError(f"d must be an integer >= 2, got {d}")
    return (1 - p1) * (1 - p2) * math.log2(d)


def dephasing_ghz_capacity(p: float, other_Q_lower_bounds) -> float | None:
    """``1 - h2(p)`` when every other channel's Q is known to be at least that, else None."""
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"p={p} outside [0, 1/2]")
    value = 1 - binary_entropy(p)
    if all(q >= value for q in other_Q_lower_bounds):
        return value
    return None


@dataclass(frozen=True)
class CompositionBound:
    value: float
    min_q: float

    def __float__(self):
        return self.value


def composition_lower_bound(Q1: float, Ecpp1: float, Q2: float, Ecpp2: float) -> CompositionBound:
    """``max{min{Q1, Ecpp2}, min{Q2, Ecpp1}}``: one channel sends qubits, the other generates
    entanglement with classical post-processing.  ``min_q`` is the weaker corollary."""
    for name, v in (("Q1", Q1), ("Ecpp1", Ecpp1), ("Q2", Q2), ("Ecpp2", Ecpp2)):
        if v < 0:
            raise ValueError(f"{name}={v} is negative")
    if Ecpp1 < Q1 or Ecpp2 < Q2:
        raise ValueError("inconsistent inputs: Ecpp must be at least Q for each channel")
    value = max(min(Q1, Ecpp2), min(Q2, Ecpp1))
    min_q = min(Q1, Q2)
    assert value >= min_q
    return CompositionBound(value, min_q)


# per-channel quantities

@dataclass(frozen=True)
class ChannelQuantities:
    """Single-channel quantities in bits.

    ``ecpp`` is a lower bound on E_cpp: exact where a closed form is known,
    otherwise the larger of the two single-letter quantities.
    """

    ic: float
    ir: float
    rains: float
    ecpp: float
    source: str


def _closed_form(params: ChannelParams):
    """``(I_c, I_R, R, E_cpp)`` for families with known closed forms."""
    kind = params.kind
    if kind == "identity":
        v = math.log2(params["d"])
        return v, v, v, v
    if kind == "erasure":
        p, ld = params["p"], math.log2(params["d"])
        # flags are locally readable, so E_cpp reaches the Rains value
        return (1 - 2 * p) * ld, (1 - p) * ld - binary_entropy(p), (1 - p) * ld, (1 - p) * ld
    if kind == "dephasing":
        v = 1 - binary_entropy(params["p"])
        return v, v, v, v
    return None


@lru_cache(maxsize=1024)
def channel_quantities(params: ChannelParams) -> ChannelQuantities:
    """Coherent, reverse coherent and Rains information of one channel.

    Erasure, dephasing and identity channels use their closed forms; other
    families are optimized numerically.
    """
    closed = _closed_form(params)
    if closed is not None:
        return ChannelQuantities(*closed, f"closed-form:{params.kind}")
    ch = cached_channel(params)
    ic = coherent_information_channel(ch)
    ir = reverse_coherent_information_channel(ch)
    return ChannelQuantities(ic, ir, rains_information_channel(ch), max(ic, ir, 0.0), "numerical")


def q_lower(params: ChannelParams) -> float:
    """Lower bound on Q: single-letter coherent information, clamped at 0."""
    return max(channel_quantities(params).ic, 0.0)


def ecpp_lower(params: ChannelParams) -> float:
    """Lower bound on E_cpp; never below ``q_lower`` since E_cpp >= Q."""
    return max(channel_quantities(params).ecpp, q_lower(params))


# multi-rail encoding

def _one_particle_blocks(channel: QuantumChannel, k: int) -> np.ndarray:
    """``M[j, l]`` = one-particle-sector block of ``N^{(x)k}(|e_j><e_l|)``.

    ``|e_j>`` has a single excitation on rail ``j``.  Only single-rail matrix
    elements of ``N`` enter, so the block is a product over rails.
    """
    def elem(m, n, a, b):
        # <m| N(|a><b|) |n> on a single rail
        e = np.zeros((2, 2), dtype=complex)
        e[a, b] = 1.0
        return channel(e)[m, n]

    table = np.array([[[[elem(m, n, a, b) for b in range(2)] for a in range(2)] for n in range(2)]
                      for m in range(2)])
    out = np.empty((k, k, k, k), dtype=complex)
    for j, l, m, n in itertools.product(range(k), repeat=4):
        val = 1.0 + 0j
        for r in range(k):
            val *= table[int(r == m), int(r == n), int(r == j), int(r == l)]
        out[j, l, m, n] = val
    return out


def multirail_state(gamma1: float, gamma2: float, T1: float, T2: float, k: int):
    """Success probability and normalized post-selected ``k x k`` state of the k-rail protocol."""
    if k != int(k) or not 2 <= k <= 6:
        raise ValueError(f"k must be an integer in [2, 6], got {k}")
    k = int(k)
    ch1 = cached_channel(ChannelParams.make("gadc", gamma=gamma1, T=T1))
    ch2 = cached_channel(ChannelParams.make("gadc", gamma=gamma2, T=T2))
    m1 = _one_particle_blocks(ch1, k)
    m2 = _one_particle_blocks(ch2, k)
    # rho = (1/k) sum_jl M1_jl (x) M2_jl
    rho = np.einsum("jlmn,jlpq->mpnq", m1, m2).reshape(k * k, k * k) / k
    q = float(np.trace(rho).real)
    if q <= 0:
        return 0.0, None
    return q, rho / q


def hashing_rate(m: np.ndarray, dims) -> float:
    """One-way hashing yield of a bipartite state: best coherent-information direction, or 0."""
    return max(coherent_information_array(m, dims),
               coherent_information_array(permute_array(m, dims, (1, 0)), dims[::-1]), 0.0)


def multirail_rate(gamma1: float, gamma2: float, T1: float, T2: float, k: int) -> float:
    """Rate per channel use of k-rail encoding, one-particle post-selection and hashing."""
    q, rho = multirail_state(gamma1, gamma2, T1, T2, k)
    if rho is None:
        return 0.0
    return q * hashing_rate(rho, (k, k)) / k


def best_multirail_rate(gamma1: float, gamma2: float, T1: float, T2: float) -> tuple[float, int]:
    rates = [(multirail_rate(gamma1, gamma2, T1, T2, k), k) for k in MULTIRAIL_KS]
    return max(rates, key=lambda rk: (rk[0], -rk[1]))


# assisted distillation

def _assisted_state(ch1: QuantumChannel, ch2: QuantumChannel) -> tuple[np.ndarray, tuple[int, int, int]]:
    """``J1 (x) J2`` reordered to ``(S1 S2) x (A1 A2)`` and reshaped to ``(s, a, s, a)``."""
    d1, d2, o1, o2 = ch1.in_dim, ch2.in_dim, ch1.out_dim, ch2.out_dim
    j = np.kron(choi_array(ch1), choi_array(ch2))
    j = permute_array(j, (d1, o1, d2, o2), (0, 2, 1, 3))
    s, a = d1 * d2, o1 * o2
    return j.reshape(s, a, s, a), (s, o1, o2)


def _assisted_value(r: np.ndarray, shape, u: np.ndarray) -> float:
    """Average hashing yield when the helper measures in the basis given by the columns of ``u``."""
    _, o1, o2 = shape
    total = 0.0
    for i in range(u.shape[1]):
        b = u[:, i]
        sigma = np.einsum("s,satb,t->ab", b.conj(), r, b)
        p = float(np.trace(sigma).real)
        if p > 1e-14:
            total += p * hashing_rate(sigma / p, (o1, o2))
    return total


def _hermitian_generators(n: int) -> list[np.ndarray]:
    gens = []
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1.0
        gens.append(e)
    for i, j in itertools.combinations(range(n), 2):
        e = np.zeros((n, n), dtype=complex)
        e[i, j] = e[j, i] = 1.0
        gens.append(e)
        e = np.zeros((n, n), dtype=complex)
        e[i, j], e[j, i] = -1j, 1j
        gens.append(e)
    return gens


def _expi(h: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(1j * w)) @ v.conj().T


def _refine(f, u: np.ndarray, steps: int = REFINE_STEPS, step0: float = REFINE_STEP0):
    """Coordinate-wise search over ``u exp(i t G)``; the step halves after a sweep with no gain."""
    gens = _hermitian_generators(u.shape[0])
    best = f(u)
    step = step0
    improved = False
    for it in range(steps):
        g = gens[it % len(gens)]
        for sgn in (1.0, -1.0):
            cand = u @ _expi(sgn * step * g)
            val = f(cand)
            if val > best:
                best, u, improved = val, cand, True
                break
        if (it + 1) % len(gens) == 0:
            if not improved:
                step *= 0.5
            improved = False
    return best, u


def _bell_basis_unitary(d1: int, d2: int) -> np.ndarray | None:
    if d1 != d2:
        return None
    vecs = [np.kron(w, np.eye(d1)) @ max_entangled_vector(d1) for w in generalized_paulis(d1).values()]
    return np.array(vecs).T


def assisted_distillation_lower_bound(ch1: QuantumChannel, ch2: QuantumChannel,
                                      n_measurements: int = N_MEASUREMENTS,
                                      seed: int = ASSIST_SEED) -> float:
    """Lower bound on the entanglement of assistance of ``J1 (x) J2``.

    A helper holding both Choi input halves measures in a rank-1 orthonormal
    basis; the two outputs then hash.  Candidate bases are the generalized Bell
    basis and ``n_measurements`` Haar-random bases, each locally refined.  Each
    random basis uses its own sub-seed ``(seed, i)``, so the value is the
    best-so-far over a fixed sequence and never decreases with ``n_measurements``.
    """
    if ch1.in_dim > 2 or ch2.in_dim > 2:
        raise DimensionError("assisted distillation search supports input dimension <= 2")
    if n_measurements < 0:
        raise ValueError("n_measurements must be non-negative")
    r, shape = _assisted_state(ch1, ch2)

    def f(u):
        return _assisted_value(r, shape, u)

    bases = []
    bell = _bell_basis_unitary(ch1.in_dim, ch2.in_dim)
    if bell is not None:
        bases.append(bell)
    s = shape[0]
    for i in range(n_measurements):
        bases.append(random_unitary(s, np.random.default_rng([seed, i])))
    best = 0.0
    for u in bases:
        MeasurementFamily.from_basis(u)
        val, _ = _refine(f, u)
        best = max(best, val)
    return float(best)


# bound assembly

def _params(ch) -> ChannelParams:
    if isinstance(ch, ChannelParams):
        return ch
    if isinstance(ch, QuantumChannel) and ch.params is not None:
        return ch.params
    raise TypeError("expected ChannelParams")


def _best(cands: list[tuple[float, str]], pick) -> tuple[float, str]:
    value = pick(v for v, _ in cands)
    return value, next(s for v, s in cands if v == value)


def epr_lower_candidates(ch1: ChannelParams, ch2: ChannelParams, *, assisted: bool = True,
                         n_measurements: int = N_MEASUREMENTS, seed: int = ASSIST_SEED) -> dict:
    """Every applicable lower bound on the EPR distribution capacity, keyed by source label."""
    out = {"composition": composition_lower_bound(q_lower(ch1), ecpp_lower(ch1),
                                                  q_lower(ch2), ecpp_lower(ch2)).value}
    if ch1.kind == "gadc" and ch2.kind == "gadc":
        out["multirail"] = best_multirail_rate(ch1["gamma"], ch2["gamma"], ch1["T"], ch2["T"])[0]
    if ch1.kind == "erasure" and ch2.kind == "erasure" and ch1["d"] == ch2["d"]:
        out["erasure-exact"] = erasure_capacity(ch1["p"], ch2["p"], int(ch1["d"]))
    if assisted:
        c1, c2 = cached_channel(ch1), cached_channel(ch2)
        if (c1.in_dim <= 2 and c2.in_dim <= 2 and is_teleportation_covariant(c1)[0]
                and is_teleportation_covariant(c2)[0]):
            out["assisted"] = assisted_distillation_lower_bound(c1, c2, n_measurements, seed)
    return out


def epr_bounds(ch1, ch2, *, n_measurements: int = N_MEASUREMENTS, seed: int = ASSIST_SEED) -> BoundInterval:
    """Lower and upper bounds on the EPR distribution capacity of a channel pair."""
    ch1, ch2 = _params(ch1), _params(ch2)
    for ch in (ch1, ch2):
        if cached_channel(ch).in_dim > 4:
            raise DimensionError("epr_bounds supports input dimension <= 4")
    upper_cands = [(channel_quantities(ch1).rains, f"rains:{ch1}"), (channel_quantities(ch2).rains, f"rains:{ch2}")]
    if ch1.kind == "erasure" and ch2.kind == "erasure" and ch1["d"] == ch2["d"]:
        # exact capacity; every lower-bound candidate is dominated by it
        exact = erasure_capacity(ch1["p"], ch2["p"], int(ch1["d"]))
        return BoundInterval(exact, exact, "erasure-exact", "erasure-exact")
    lower_cands = [(v, k) for k, v in epr_lower_candidates(ch1, ch2, n_measurements=n_measurements,
                                                         seed=seed).items()]
    lo, lo_src = _best(lower_cands, max)
    up, up_src = _best(upper_cands, min)
    return BoundInterval(float(lo), float(up), lo_src, up_src)


def ghz_bounds(channels, *, n_measurements: int = N_MEASUREMENTS, seed: int = ASSIST_SEED) -> BoundInterval:
    """Bounds on the N-party GHZ distribution capacity, N >= 3, qubit-input channels."""
    chans = [_params(c) for c in channels]
    n = len(chans)
    if n < 3:
        raise ValueError("ghz_bounds needs at least 3 channels")
    for ch in chans:
        if cached_channel(ch).in_dim != 2:
            raise DimensionError("ghz_bounds supports qubit-input channels only")
    min_q = min(q_lower(c) for c in chans)
    pair_lo = min(epr_bounds(a, b, n_measurements=n_measurements, seed=seed).lower
                  for a, b in itertools.combinations(chans, 2))
    lower_cands = [(min_q, "min-coherent-information"), (n / (2 * (n - 1)) * pair_lo, "pairwise-epr")]
    upper_cands = [(channel_quantities(c).rains, f"rains:{c}") for c in chans]
    lo, lo_src = _best(lower_cands, max)
    up, up_src = _best(upper_cands, min)
    return BoundInterval(float(lo), float(up), lo_src, up_src)


__all__ = [
    "BoundInterval", "BoundError", "MeasurementFamily", "erasure_capacity", "dephasing_ghz_capacity",
    "composition_lower_bound", "CompositionBound", "channel_quantities", "epr_bounds",
    "epr_lower_candidates", "multirail_rate", "multirail_state", "best_multirail_rate",
    "assisted_distillation_lower_bound", "ghz_bounds", "hashing_rate",
]
