"""Channel constructors, channel action, Choi states and teleportation simulation."""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import (
    DensityMatrix,
    DimensionError,
    embed_operator,
    max_entangled,
    max_entangled_vector,
    ptrace_array,
    random_pure_vector,
    trace_distance_array,
)

KRAUS_TOL = 1e-10
COVARIANCE_TOL = 1e-8
N_PROBES = 20
PROBE_SEED = 20240917

KINDS = {
    "erasure": ("p", "d"),
    "dephasing": ("p",),
    "gadc": ("gamma", "T"),
    "pauli": ("px", "py", "pz"),
    "identity": ("d",),
}
_DEFAULTS = {"erasure": {"d": 2}, "identity": {"d": 2}}


class ChannelSpecError(ValueError):
    """Malformed channel spec string; ``token`` names the offending piece."""

    def __init__(self, message: str, token: str):
        super().__init__(message)
        self.token = token


@dataclass(frozen=True)
class ChannelParams:
    """Parameters of one of the supported channel families.

    ``values`` holds ``(name, value)`` pairs in the family's canonical order so
    instances are hashable and usable as cache keys.
    """

    kind: str
    values: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        names = [k for k, _ in self.values]
        if names != list(KINDS[self.kind]):
            raise ValueError(f"{self.kind} expects parameters {KINDS[self.kind]}, got {names}")
        for k, v in self.values:
            if k == "d":
                if v != int(v) or v < 2:
                    raise ValueError(f"dimension d must be an integer >= 2, got {v}")
            elif not 0.0 <= v <= 1.0:
                raise ValueError(f"parameter {k}={v} outside [0, 1]")
        if self.kind == "pauli" and sum(v for _, v in self.values) > 1.0 + 1e-12:
            raise ValueError("pauli probabilities sum to more than 1")

    @classmethod
    def make(cls, kind: str, **kw) -> "ChannelParams":
        if kind not in KINDS:
            raise ValueError(f"unknown channel kind {kind!r}")
        merged = dict(_DEFAULTS.get(kind, {}))
        merged.update(kw)
        unknown = set(merged) - set(KINDS[kind])
        if unknown:
            raise ValueError(f"unknown parameter(s) {sorted(unknown)} for {kind}")
        missing = [k for k in KINDS[kind] if k not in merged]
        if missing:
            raise ValueError(f"missing parameter(s) {missing} for {kind}")
        return cls(kind, tuple((k, float(merged[k])) for k in KINDS[kind]))

    def __getitem__(self, key: str) -> float:
        return dict(self.values)[key]

    def replace(self, **kw) -> "ChannelParams":
        d = dict(self.values)
        d.update(kw)
        return ChannelParams.make(self.kind, **d)

    def to_spec(self) -> str:
        body = ",".join(f"{k}={int(v) if k == 'd' else repr(v)}" for k, v in self.values)
        return f"{self.kind}:{body}"

    def __str__(self):
        return self.to_spec()


_NUM = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def parse_channel_spec(text: str) -> ChannelParams:
    """Parse ``kind:key=value,...``, e.g. ``"gadc:gamma=0.3,T=0.1"``."""
    text = text.strip()
    kind, sep, body = text.partition(":")
    kind = kind.strip()
    if kind not in KINDS:
        raise ChannelSpecError(f"unknown channel kind {kind!r}", kind)
    kw: dict[str, float] = {}
    if sep and body.strip():
        for item in body.split(","):
            key, eq, val = item.partition("=")
            key, val = key.strip(), val.strip()
            if not eq or not key:
                raise ChannelSpecError(f"expected key=value, got {item!r}", item)
            if key not in KINDS[kind]:
                raise ChannelSpecError(f"unknown parameter {key!r} for {kind}", key)
            if key in kw:
                raise ChannelSpecError(f"duplicate parameter {key!r}", key)
            if not _NUM.match(val):
                raise ChannelSpecError(f"not a decimal number: {val!r}", val)
            kw[key] = float(val)
    try:
        return ChannelParams.make(kind, **kw)
    except ValueError as exc:
        raise ChannelSpecError(str(exc), text) from exc


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    kraus: tuple[np.ndarray, ...]
    in_dim: int
    out_dim: int
    label: str = ""
    params: ChannelParams | None = None

    def __post_init__(self):
        ks = tuple(np.array(k, dtype=complex) for k in self.kraus)
        for k in ks:
            if k.shape != (self.out_dim, self.in_dim):
                raise DimensionError(f"Kraus operator shape {k.shape} != ({self.out_dim}, {self.in_dim})")
            k.setflags(write=False)
        s = sum(k.conj().T @ k for k in ks)
        if np.max(np.abs(s - np.eye(self.in_dim))) > KRAUS_TOL:
            raise ValueError("Kraus operators are not trace preserving")
        object.__setattr__(self, "kraus", ks)
        stack = np.array(ks)
        stack.setflags(write=False)
        object.__setattr__(self, "_stack", stack)

    @property
    def kraus_stack(self) -> np.ndarray:
        """Kraus operators as one ``(n, out_dim, in_dim)`` array."""
        return self._stack

    def __call__(self, m: np.ndarray) -> np.ndarray:
        """Apply to a raw ``in_dim x in_dim`` array."""
        k = self._stack
        return np.einsum("iab,bc,idc->ad", k, m, k.conj())


def _pauli_matrices():
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    z = np.array([[1, 0], [0, -1]], dtype=complex)
    return x, y, z


def gadc_kraus(gamma: float, T: float) -> list[np.ndarray]:
    k1 = np.sqrt(1 - T) * np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k2 = np.sqrt(gamma * (1 - T)) * np.array([[0, 1], [0, 0]], dtype=complex)
    k3 = np.sqrt(T) * np.array([[np.sqrt(1 - gamma), 0], [0, 1]], dtype=complex)
    k4 = np.sqrt(gamma * T) * np.array([[0, 0], [1, 0]], dtype=complex)
    return [k1, k2, k3, k4]


def make_channel(params: ChannelParams | str) -> QuantumChannel:
    if isinstance(params, str):
        params = parse_channel_spec(params)
    kind = params.kind
    if kind == "identity":
        d = int(params["d"])
        return QuantumChannel((np.eye(d),), d, d, str(params), params)
    if kind == "erasure":
        p, d = params["p"], int(params["d"])
        keep = np.zeros((d + 1, d), dtype=complex)
        keep[:d, :d] = np.sqrt(1 - p) * np.eye(d)
        ks = [keep]
        for j in range(d):
            k = np.zeros((d + 1, d), dtype=complex)
            k[d, j] = np.sqrt(p)
            ks.append(k)
        return QuantumChannel(tuple(ks), d, d + 1, str(params), params)
    if kind == "dephasing":
        p = params["p"]
        _, _, z = _pauli_matrices()
        return QuantumChannel((np.sqrt(1 - p) * np.eye(2), np.sqrt(p) * z), 2, 2, str(params), params)
    if kind == "pauli":
        px, py, pz = params["px"], params["py"], params["pz"]
        x, y, z = _pauli_matrices()
        ks = (np.sqrt(1 - px - py - pz) * np.eye(2), np.sqrt(px) * x, np.sqrt(py) * y, np.sqrt(pz) * z)
        return QuantumChannel(ks, 2, 2, str(params), params)
    if kind == "gadc":
        return QuantumChannel(tuple(gadc_kraus(params["gamma"], params["T"])), 2, 2, str(params), params)
    raise ValueError(kind)


@lru_cache(maxsize=256)
def cached_channel(params: ChannelParams) -> QuantumChannel:
    return make_channel(params)


def apply_array(channel: QuantumChannel, m: np.ndarray, dims, subsystem: int) -> np.ndarray:
    if dims[subsystem] != channel.in_dim:
        raise DimensionError(
            f"subsystem {subsystem} has dimension {dims[subsystem]}, channel expects {channel.in_dim}")
    out = 0
    for k in channel.kraus:
        big = embed_operator(k, dims, subsystem)
        out = out + big @ m @ big.conj().T
    return out


def apply(channel: QuantumChannel, rho: DensityMatrix, subsystem: int = 0) -> DensityMatrix:
    """Apply ``channel`` to one subsystem of ``rho``."""
    if not 0 <= subsystem < len(rho.dims):
        raise DimensionError(f"subsystem {subsystem} out of range")
    out = apply_array(channel, rho.matrix, rho.dims, subsystem)
    dims = list(rho.dims)
    dims[subsystem] = channel.out_dim
    return DensityMatrix.from_array(out, dims)


def choi_array(channel: QuantumChannel) -> np.ndarray:
    d = channel.in_dim
    phi = np.outer(max_entangled_vector(d), max_entangled_vector(d).conj())
    return apply_array(channel, phi, (d, d), 1)


def choi_state(channel: QuantumChannel) -> DensityMatrix:
    """``(id x N)(phi_d)`` with dims ``[in_dim, out_dim]``."""
    return DensityMatrix.from_array(choi_array(channel), (channel.in_dim, channel.out_dim))


def generalized_paulis(d: int) -> dict[tuple[int, int], np.ndarray]:
    """``X^a Z^b`` for ``a, b in range(d)``."""
    x = np.roll(np.eye(d), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return {(a, b): np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b)
            for a in range(d) for b in range(d)}


@lru_cache(maxsize=8)
def _probe_states(d: int) -> tuple[np.ndarray, ...]:
    rng = np.random.default_rng(PROBE_SEED + d)
    out = []
    for _ in range(N_PROBES):
        v = random_pure_vector(d, rng)
        out.append(np.outer(v, v.conj()))
    return tuple(out)


def _polar_unitary(m: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def find_intertwiner(channel: QuantumChannel, u: np.ndarray, probes=None, tol=COVARIANCE_TOL):
    """Search a unitary ``V`` with ``N(u rho u^+) = V N(rho) V^+`` on the probe set.

    ``V`` must satisfy the linear relation ``V A_k = B_k V`` with
    ``A_k = N(rho_k)``, ``B_k = N(u rho_k u^+)``. Any invertible solution of that
    relation has a unitary polar factor that satisfies it too, so we take a
    generic element of the solution space and return its polar factor. Returns
    None if no unitary reproduces the probes within ``tol`` in trace distance.
    """
    if probes is None:
        probes = _probe_states(channel.in_dim)
    n = channel.out_dim
    eye = np.eye(n)
    blocks, pairs = [], []
    for r in probes:
        a = channel(r)
        b = channel(u @ r @ u.conj().T)
        pairs.append((a, b))
        # column-major vec: vec(V A) = (A^T x I) vec V, vec(B V) = (I x B) vec V
        blocks.append(np.kron(a.T, eye) - np.kron(eye, b))
    L = np.vstack(blocks)
    _, s, vh = np.linalg.svd(L)
    scale = max(s[0], 1.0)
    null = vh[s <= 1e-9 * scale].conj()
    if len(null) == 0:
        return None
    rng = np.random.default_rng(len(null))
    coeffs = rng.normal(size=len(null)) + 1j * rng.normal(size=len(null))
    x = np.tensordot(coeffs, null, axes=1).reshape(n, n, order="F")
    if np.linalg.cond(x) > 1e10:
        return None
    v = _polar_unitary(x)
    for a, b in pairs:
        if trace_distance_array(v @ a @ v.conj().T, b) > tol:
            return None
    return v


def is_teleportation_covariant(channel: QuantumChannel):
    """Decide covariance under the generalized Pauli group of the input.

    Returns ``(True, {(a, b): V_ab})`` or ``(False, None)``.
    """
    if channel.out_dim < channel.in_dim:
        return False, None
    corrections = {}
    for ab, u in generalized_paulis(channel.in_dim).items():
        v = find_intertwiner(channel, u)
        if v is None:
            return False, None
        corrections[ab] = v
    return True, corrections


def bell_basis(d: int) -> dict[tuple[int, int], np.ndarray]:
    """``|Phi_ab> = (X^a Z^b x I)|phi_d>`` on the measured pair (input, Choi half)."""
    return {ab: np.kron(w, np.eye(d)) @ max_entangled_vector(d) for ab, w in generalized_paulis(d).items()}


def teleportation_branches(channel: QuantumChannel, rho: np.ndarray):
    """Per-outcome data of the Choi-state teleportation simulation.

    For each Bell outcome ``(a, b)`` on (input, Choi input half), returns the
    outcome probability, the unnormalized output conditioned on that outcome
    and the correction unitary that maps it back to ``N(rho)``.
    """
    d = channel.in_dim
    ok, _ = is_teleportation_covariant(channel)
    if not ok:
        raise ValueError(f"channel {channel.label or ''} is not teleportation-covariant; refusing simulation")
    J = choi_array(channel)
    dims = (d, d, channel.out_dim)
    total = np.kron(rho, J)
    paulis = generalized_paulis(d)
    out = {}
    for ab, vec in bell_basis(d).items():
        proj = np.kron(np.outer(vec, vec.conj()), np.eye(channel.out_dim))
        branch = ptrace_array(proj @ total @ proj, dims, [2])
        prob = float(np.trace(branch).real)
        # outcome ab teleports W_ab^+ rho W_ab into the channel
        w = paulis[ab]
        v = find_intertwiner(channel, w.conj().T)
        out[ab] = (prob, branch, v)
    return out


def simulate_via_choi(channel: QuantumChannel, rho: DensityMatrix) -> DensityMatrix:
    """Reproduce ``N(rho)`` from the Choi state, a Bell measurement and Pauli-frame corrections."""
    if rho.dim != channel.in_dim:
        raise DimensionError("input dimension mismatch")
    acc = 0
    for prob, branch, v in teleportation_branches(channel, rho.matrix).values():
        acc = acc + v.conj().T @ branch @ v
    return DensityMatrix.from_array(acc, (channel.out_dim,))


def phase_covariant(channel: QuantumChannel, trials: int = 3, tol: float = 1e-10) -> bool:
    """True if ``N(D rho D^+) = D' N(rho) D'^+`` for diagonal unitaries ``D``, with
    ``D'`` equal to ``D`` padded by ones on extra output levels."""
    if channel.out_dim < channel.in_dim:
        return False
    rng = np.random.default_rng(7)
    probes = _probe_states(channel.in_dim)
    for _ in range(trials):
        ph = np.exp(2j * np.pi * rng.random(channel.in_dim))
        D = np.diag(ph)
        Dp = np.diag(np.concatenate([ph, np.ones(channel.out_dim - channel.in_dim)]))
        for r in probes[:6]:
            lhs = channel(D @ r @ D.conj().T)
            rhs = Dp @ channel(r) @ Dp.conj().T
            if np.max(np.abs(lhs - rhs)) > tol:
                return False
    return True


def erasure_flag_projector(d: int) -> np.ndarray:
    """Projector onto the flag level (last index) of a ``d+1`` dimensional erasure output."""
    p = np.zeros((d + 1, d + 1))
    p[d, d] = 1.0
    return p


__all__ = [
    "ChannelParams", "ChannelSpecError", "QuantumChannel", "parse_channel_spec", "make_channel",
    "cached_channel", "apply", "apply_array", "choi_state", "choi_array", "generalized_paulis",
    "is_teleportation_covariant", "simulate_via_choi", "teleportation_branches", "find_intertwiner",
    "phase_covariant", "gadc_kraus", "max_entangled",
]
