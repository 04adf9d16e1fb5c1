"""Finite-n stochastic simulation of the erasure and multi-rail protocols.

Random streams are ``numpy`` generators seeded with ``(seed, block)``, so
every block is reproducible on its own and results do not depend on the
order in which blocks are evaluated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelParams, QuantumChannel, apply, cached_channel, make_channel, teleportation_branches
from .linalg import DensityMatrix, random_pure_vector, trace_distance_array
from .protocols import erasure_capacity, hashing_rate, multirail_rate, multirail_state


@dataclass(frozen=True)
class SimReport:
    n_uses: int
    empirical_rate: float
    stderr: float
    success_prob_hat: float
    analytic_rate: float
    seed: int
    success_stderr: float = 0.0
    analytic_success_prob: float = float("nan")

    def __post_init__(self):
        if not 0.0 <= self.success_prob_hat <= 1.0:
            raise ValueError("success probability estimate outside [0, 1]")
        if self.stderr < 0 or self.success_stderr < 0:
            raise ValueError("negative standard error")

    def within(self, n_sigma: float, floor: float = 1e-12) -> bool:
        """Empirical rate within ``n_sigma`` standard errors of the analytic rate."""
        return abs(self.empirical_rate - self.analytic_rate) <= n_sigma * self.stderr + floor

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _binomial_stderr(p_hat: float, n: int) -> float:
    return math.sqrt(max(p_hat * (1 - p_hat), 0.0) / n)


def simulate_erasure_protocol(p1: float, p2: float, d: int, n: int, seed: int) -> SimReport:
    """Send ``n`` pairs through two erasure channels; keep pairs with no flag raised."""
    if n < 1:
        raise ValueError("n must be at least 1")
    analytic = erasure_capacity(p1, p2, d)
    rng = np.random.default_rng([seed, 0])
    intact1 = rng.random(n) >= p1
    intact2 = rng.random(n) >= p2
    hits = int(np.count_nonzero(intact1 & intact2))
    p_hat = hits / n
    ld = math.log2(d)
    se = _binomial_stderr(p_hat, n)
    return SimReport(n, p_hat * ld, se * ld, p_hat, analytic, seed, se, (1 - p1) * (1 - p2))


def _unit_weight_indices(k: int) -> np.ndarray:
    """Computational-basis indices of the weight-1 strings, rail 0 most significant."""
    return np.array([1 << (k - 1 - j) for j in range(k)])


def multirail_input(k: int) -> np.ndarray:
    """``psi_k`` as a tensor with ``2k`` qubit axes: A's rails then B's rails."""
    psi = np.zeros((2 ** k, 2 ** k), dtype=complex)
    idx = _unit_weight_indices(k)
    psi[idx, idx] = 1 / math.sqrt(k)
    return psi.reshape((2,) * (2 * k))


def _sample_trajectory(psi: np.ndarray, kraus_by_axis, rng: np.random.Generator) -> np.ndarray:
    """Apply one sampled Kraus operator per qubit axis, with Born-rule branch weights."""
    for axis, ks in enumerate(kraus_by_axis):
        branches = [np.moveaxis(np.tensordot(kop, psi, axes=([1], [axis])), 0, axis) for kop in ks]
        w = np.array([np.vdot(b, b).real for b in branches])
        i = rng.choice(len(ks), p=w / w.sum())
        psi = branches[i] / math.sqrt(w[i])
    return psi


def multirail_block(channels: tuple[QuantumChannel, QuantumChannel], k: int,
                    rng: np.random.Generator) -> tuple[bool, np.ndarray | None]:
    """One block: sample trajectories on all ``2k`` rails, then post-select both sides.

    Returns the success flag and, on success, the normalized ``k x k``
    one-particle-sector state vector.
    """
    axes = [channels[0].kraus] * k + [channels[1].kraus] * k
    psi = _sample_trajectory(multirail_input(k), axes, rng)
    idx = _unit_weight_indices(k)
    block = psi.reshape(2 ** k, 2 ** k)[np.ix_(idx, idx)]
    norm2 = float(np.vdot(block, block).real)
    if norm2 <= 1e-14:
        return False, None
    return True, block / math.sqrt(norm2)


def simulate_multirail(gamma1: float, gamma2: float, T1: float, T2: float, k: int,
                       n_blocks: int, seed: int) -> SimReport:
    """Kraus-trajectory simulation of k-rail encoding with one-particle post-selection.

    Each block contributes ``success * I_c(branch) / k``.  The branch state is
    pure, so both coherent-information directions equal its entanglement
    entropy.  At ``T = 0`` every successful branch is maximally entangled and
    the estimator is unbiased for ``multirail_rate``; for ``T > 0`` knowing the
    trajectory is extra information, so the mean can exceed the analytic rate.
    """
    if k != int(k) or not 2 <= k <= 6:
        raise ValueError(f"k must be an integer in [2, 6], got {k}")
    if n_blocks < 1:
        raise ValueError("n_blocks must be at least 1")
    k = int(k)
    chans = (cached_channel(ChannelParams.make("gadc", gamma=gamma1, T=T1)),
             cached_channel(ChannelParams.make("gadc", gamma=gamma2, T=T2)))
    q, _ = multirail_state(gamma1, gamma2, T1, T2, k)
    analytic = multirail_rate(gamma1, gamma2, T1, T2, k)
    contrib = np.zeros(n_blocks)
    succ = np.zeros(n_blocks, dtype=bool)
    for b in range(n_blocks):
        ok, vec = multirail_block(chans, k, np.random.default_rng([seed, b]))
        if ok:
            succ[b] = True
            contrib[b] = hashing_rate(np.outer(vec.reshape(-1), vec.reshape(-1).conj()), (k, k)) / k
    p_hat = float(succ.mean())
    rate = float(contrib.mean())
    se = float(contrib.std(ddof=1) / math.sqrt(n_blocks)) if n_blocks > 1 else 0.0
    return SimReport(n_blocks * 2 * k, rate, se, p_hat, analytic, seed,
                     _binomial_stderr(p_hat, n_blocks), q)


def simulate_teleportation_check(channel: ChannelParams | QuantumChannel | str, n_inputs: int,
                                 seed: int, *, shots: int = 4) -> float:
    """Max trace distance between the Choi-state teleportation simulation and direct action.

    Each Bell outcome is corrected separately and the corrected branches are
    summed with their probabilities.  With ``shots > 0`` outcomes are also
    sampled and every sampled, corrected branch must equal ``N(rho)`` on its
    own, which is checked as well.
    """
    if not isinstance(channel, QuantumChannel):
        channel = make_channel(channel)
    rng = np.random.default_rng([seed, 0])
    d = channel.in_dim
    worst = 0.0
    for _ in range(n_inputs):
        v = random_pure_vector(d, rng)
        rho = DensityMatrix.from_array(np.outer(v, v.conj()), (d,))
        target = apply(channel, rho).matrix
        branches = teleportation_branches(channel, rho.matrix)
        acc = 0
        keys = list(branches)
        probs = np.array([branches[ab][0] for ab in keys])
        for ab in keys:
            prob, branch, u = branches[ab]
            corrected = u.conj().T @ branch @ u
            acc = acc + corrected
        worst = max(worst, trace_distance_array(acc, target))
        for i in rng.choice(len(keys), size=shots, p=probs / probs.sum()) if shots else ():
            prob, branch, u = branches[keys[i]]
            worst = max(worst, trace_distance_array(u.conj().T @ branch @ u / prob, target))
    return float(worst)


__all__ = ["SimReport", "simulate_erasure_protocol", "simulate_multirail", "simulate_teleportation_check",
           "multirail_input", "multirail_block"]
