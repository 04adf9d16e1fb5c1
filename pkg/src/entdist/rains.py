"""Rains relative entropy over the PPT' set and channel Rains information.

The state quantity ``min_{sigma in PPT'} D(rho||sigma)`` is computed by one of
two solvers:

``"barrier"`` (default)
    Path-following interior-point method. The trace-norm constraint is lifted
    to ``sigma^{T_B} = P - N`` with ``P, N >= 0`` and ``Tr P + Tr N <= 1``;
    log-det barriers keep ``sigma``, ``P``, ``N`` positive definite and damped
    Newton steps follow the central path. The duality gap on the path is
    ``nu / t``.
``"spg"``
    Spectral projected gradient on ``sigma`` with Dykstra projections onto
    PPT' and non-monotone Armijo backtracking (trial step 1, shrink 0.5).
    Reliable on two-qubit states, slow near rank-deficient optima in larger
    dimensions; kept as an independent cross-check.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .channels import QuantumChannel, choi_array, is_teleportation_covariant, phase_covariant
from .entropy import entropy_array, maximize_over_inputs, params_to_density, purified_output, starting_points
from .linalg import DensityMatrix, DimensionError, ptranspose_array, random_pure_vector

log = logging.getLogger(__name__)

MAX_DIM = 16
GAP_TOL = 1e-5
BARRIER_EPS = 1e-9
LN2 = np.log(2.0)
OUTER_TOL = 1e-4
INIT_MIX = 1e-2
PATH_GAP = 1e-9  # nats
PATH_STEP = 10.0


@dataclass
class RainsResult:
    """Solver output; ``value`` and both gaps are in bits.

    ``gap_estimate`` is the larger of the sampled linearization gap and the
    solver's own bound (barrier: ``nu / t``), so it is never smaller than either.
    """

    value: float
    minimizer: np.ndarray
    gap_estimate: float
    iterations: int
    certified_gap: float = float("inf")
    dims: tuple[int, ...] = field(default=(2, 2))

    @property
    def converged(self) -> bool:
        return self.gap_estimate <= GAP_TOL


def _ip(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.vdot(a, b)))


# projections

def project_psd(x: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(x)
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def project_l1_ball(z: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection of a real vector onto the l1 ball (sort-based)."""
    a = np.abs(z)
    if a.sum() <= radius:
        return z
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, len(u) + 1)
    r = np.nonzero(u * k > css - radius)[0][-1]
    theta = (css[r] - radius) / (r + 1.0)
    return np.sign(z) * np.maximum(a - theta, 0.0)


def project_pt_ball(x: np.ndarray, dims, part=(1,)) -> np.ndarray:
    """Projection onto ``{X : ||X^{T_B}||_1 <= 1}``; partial transposition is a
    Frobenius isometry, so soft-threshold the spectrum of ``X^{T_B}``."""
    z = ptranspose_array(x, dims, part)
    w, v = np.linalg.eigh(0.5 * (z + z.conj().T))
    if np.abs(w).sum() <= 1.0:
        return x
    w = project_l1_ball(w)
    return ptranspose_array((v * w) @ v.conj().T, dims, part)


def make_feasible(x: np.ndarray, dims, part=(1,)) -> np.ndarray:
    """Clip to PSD and rescale so the partial-transpose trace norm is at most 1."""
    x = project_psd(0.5 * (x + x.conj().T))
    tn = np.abs(np.linalg.eigvalsh(ptranspose_array(x, dims, part))).sum()
    return x / tn if tn > 1.0 else x


class PPTProjector:
    """Dykstra projection onto PPT' (PSD cone, then the partial-transpose
    trace-norm ball, with correction terms).

    Each call restarts the correction terms from zero. After ``maxiter`` sweeps
    the iterate is repaired into PPT', so callers always receive a feasible
    point.
    """

    def __init__(self, dims, part=(1,), tol: float = 1e-12, maxiter: int = 2000):
        self.dims, self.part, self.tol, self.maxiter = tuple(dims), tuple(part), tol, maxiter
        self.total_iterations = 0

    def __call__(self, y: np.ndarray) -> np.ndarray:
        p = np.zeros_like(y)
        q = np.zeros_like(y)
        x = y
        it = 0
        for it in range(1, self.maxiter + 1):
            a = project_psd(x + p)
            p = x + p - a
            xn = project_pt_ball(a + q, self.dims, self.part)
            q = a + q - xn
            step = np.linalg.norm(xn - x)
            x = xn
            if step < self.tol and np.linalg.norm(a - xn) < self.tol:
                break
        self.total_iterations += it
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite iterate in PPT' projection")
        return make_feasible(x, self.dims, self.part)


# objective pieces

def cross_entropy(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``-Tr rho log2 sigma``, ``inf`` if rho has weight outside supp(sigma)."""
    w, v = np.linalg.eigh(sigma)
    wt = np.real(np.einsum("ij,ik,kj->j", v.conj(), rho, v))
    pos = w > 1e-300
    if np.any(wt[~pos] > 1e-14):
        return float("inf")
    return float(-np.sum(wt[pos] * np.log(w[pos])) / LN2)


def _log1p_ratio(x: np.ndarray) -> np.ndarray:
    """``log1p(x) / x`` with its series near 0."""
    out = np.empty_like(x)
    small = np.abs(x) < 1e-6
    xs = x[small]
    out[small] = 1 - xs / 2 + xs ** 2 / 3
    xl = x[~small]
    out[~small] = np.log1p(xl) / xl
    return out


def _log1p_ratio_deriv(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[small]
    out[small] = -0.5 + 2 * xs / 3 - 0.75 * xs ** 2 + 0.8 * xs ** 3
    xl = x[~small]
    out[~small] = (xl / (1 + xl) - np.log1p(xl)) / xl ** 2
    return out


def log_divided_differences(w: np.ndarray) -> np.ndarray:
    """First divided differences of ``ln`` at positive ``w``; ``1/w_i`` on the diagonal."""
    return _log1p_ratio((w[:, None] - w[None, :]) / w[None, :]) / w[None, :]


def log_second_divided_differences(w: np.ndarray) -> np.ndarray:
    """``T[i, j, k]`` = second divided difference of ``ln`` at ``(w_i, w_j, w_k)``."""
    f1 = log_divided_differences(w)
    a = w[:, None, None]
    b = w[None, :, None]
    c = w[None, None, :]
    shape = (len(w),) * 3
    den = np.broadcast_to(a - c, shape)
    close = np.abs(den) <= 1e-4 * np.maximum(a, c)
    # near a = c use d/da f1(a, b) at the midpoint
    bb = np.broadcast_to(b, shape)
    mid = np.broadcast_to(0.5 * (a + c), shape)
    approx = _log1p_ratio_deriv((mid - bb) / bb) / bb ** 2
    exact = (f1[:, :, None] - f1.T[None, :, :]) / np.where(close, 1.0, den)
    return np.where(close, approx, exact)


def cross_entropy_grad(rho: np.ndarray, sigma: np.ndarray, eps: float = BARRIER_EPS) -> np.ndarray:
    """Gradient of ``-Tr rho log2 sigma`` (Frechet derivative of log via divided
    differences), evaluated at ``(1-eps) sigma + eps I/d``."""
    d = sigma.shape[0]
    s = (1 - eps) * sigma + eps * np.eye(d) / d
    w, v = np.linalg.eigh(s)
    w = np.clip(w, max(eps / d, 1e-300), None)
    r = v.conj().T @ rho @ v
    g = -(v @ (log_divided_differences(w) * r) @ v.conj().T) / LN2
    return 0.5 * (g + g.conj().T)


def sampled_fw_gap(rho: np.ndarray, sigma: np.ndarray, dims, part=(1,), *,
                   seed: int = 0, n_product: int = 8) -> float:
    """Linearization gap ``max_s <G, sigma - s>`` over a finite set of PPT' points.

    The set holds repaired gradient steps, repaired eigenprojectors of ``-G``,
    random pure product states and ``I/n``. Never larger than the true
    Frank-Wolfe gap.
    """
    grad = cross_entropy_grad(rho, sigma)
    rng = np.random.default_rng(seed)
    cands = []
    gn = max(np.linalg.norm(grad), 1e-300)
    for t in (1e-3, 1e-2, 1e-1, 1.0):
        cands.append(make_feasible(sigma - (t / gn) * grad, dims, part))
    w, v = np.linalg.eigh(grad)
    for i in range(min(3, len(w))):
        cands.append(make_feasible(np.outer(v[:, i], v[:, i].conj()), dims, part))
    da = int(np.prod([dims[i] for i in range(len(dims)) if i not in part]))
    db = int(np.prod(dims)) // da
    for _ in range(n_product):
        # product across the cut (index order only matters for dims = (dA, dB))
        ab = np.kron(random_pure_vector(da, rng), random_pure_vector(db, rng))
        cands.append(np.outer(ab, ab.conj()))
    n = sigma.shape[0]
    cands.append(np.eye(n) / n)
    base = _ip(grad, sigma)
    return max(0.0, max(base - _ip(grad, c) for c in cands))


# barrier solver

@lru_cache(maxsize=None)
def _hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal (real inner product) basis of n x n Hermitian matrices."""
    basis = np.zeros((n * n, n, n), dtype=complex)
    k = 0
    for i in range(n):
        basis[k, i, i] = 1.0
        k += 1
    s = 1 / np.sqrt(2)
    for i in range(n):
        for j in range(i + 1, n):
            basis[k, i, j] = basis[k, j, i] = s
            basis[k + 1, i, j], basis[k + 1, j, i] = -1j * s, 1j * s
            k += 2
    basis.setflags(write=False)
    return basis


@lru_cache(maxsize=None)
def _pt_coords(dims: tuple, part: tuple) -> np.ndarray:
    """Matrix of partial transposition in basis coordinates (orthogonal involution)."""
    n = int(np.prod(dims))
    basis = _hermitian_basis(n)
    bt = np.array([ptranspose_array(e, dims, part) for e in basis])
    g = np.real(basis.conj().reshape(n * n, -1) @ bt.reshape(n * n, -1).T)
    g.setflags(write=False)
    return g


class _Barrier:
    def __init__(self, rho: np.ndarray, dims, part):
        n = rho.shape[0]
        self.rho, self.n = rho, n
        self.basis = _hermitian_basis(n)
        self.flat = self.basis.reshape(n * n, n * n)
        self.pt = _pt_coords(tuple(dims), tuple(part))
        self.tr = self.coords(np.eye(n))
        self.nu = 3 * n + 1

    def coords(self, x: np.ndarray) -> np.ndarray:
        return np.real(self.flat.conj() @ x.reshape(-1))

    def mat(self, c: np.ndarray) -> np.ndarray:
        return (c @ self.flat).reshape(self.n, self.n)

    def objective(self, s: np.ndarray) -> float:
        """``-Tr rho ln s`` (nats) for positive definite ``s``."""
        w, v = np.linalg.eigh(s)
        r = np.real(np.einsum("ai,ab,bi->i", v.conj(), self.rho, v))
        return float(-np.sum(r * np.log(w)))

    def objective_derivs(self, s: np.ndarray):
        n = self.n
        w, v = np.linalg.eigh(s)
        rt = v.conj().T @ self.rho @ v
        grad = -(v @ (log_divided_differences(w) * rt) @ v.conj().T)
        t3 = log_second_divided_differences(w) * rt.T[:, None, :]  # T_ijk rt_ki
        wb = v.conj().T @ self.basis @ v
        # second derivative of Tr rho ln s: sum T_ijk rt_ki (H_ij K_jk + K_ij H_jk)
        lk = np.einsum("ijk,lij->ljk", t3, wb) + np.einsum("ijk,ljk->lij", t3, wb)
        hess = -np.real(lk.reshape(n * n, -1) @ wb.reshape(n * n, -1).T)
        return self.coords(grad), 0.5 * (hess + hess.T)

    def logdet_derivs(self, x: np.ndarray):
        n = self.n
        xi = np.linalg.inv(x)
        xi = 0.5 * (xi + xi.conj().T)
        y = xi @ self.basis @ xi
        hess = np.real(self.flat.conj() @ y.reshape(n * n, -1).T)
        return -self.coords(xi), 0.5 * (hess + hess.T)

    def value(self, t: float, p: np.ndarray, q: np.ndarray) -> float:
        slack = 1.0 - self.tr @ (p + q)
        if slack <= 0:
            return np.inf
        s = self.mat(self.pt @ (p - q))
        logdets = 0.0
        for x in (self.mat(p), self.mat(q), s):
            try:
                c = np.linalg.cholesky(x)
            except np.linalg.LinAlgError:
                return np.inf
            logdets += 2 * np.sum(np.log(np.real(np.diag(c))))
        return t * self.objective(s) - logdets - np.log(slack)

    def newton_direction(self, t, p, q):
        g = self.pt
        s = self.mat(g @ (p - q))
        slack = 1.0 - self.tr @ (p + q)
        gf, hf = self.objective_derivs(s)
        gp, hp = self.logdet_derivs(self.mat(p))
        gq, hq = self.logdet_derivs(self.mat(q))
        gs, hs = self.logdet_derivs(s)
        gsig = t * gf + gs
        hsig = g.T @ (t * hf + hs) @ g
        grad = np.concatenate([g.T @ gsig + gp + self.tr / slack,
                               -g.T @ gsig + gq + self.tr / slack])
        a = np.concatenate([self.tr, self.tr])
        hess = np.block([[hsig + hp, -hsig], [-hsig, hsig + hq]]) + np.outer(a, a) / slack ** 2
        try:
            c = np.linalg.cholesky(hess)
            d = -np.linalg.solve(c.T, np.linalg.solve(c, grad))
        except np.linalg.LinAlgError:
            d = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        return d, float(-grad @ d)

    def solve(self, gap_tol: float = PATH_GAP, max_newton: int = 40):
        n = self.n
        m = n * n
        p = self.coords(np.eye(n) * 0.3 / n)
        q = self.coords(np.eye(n) * 0.1 / n)
        t = 1.0
        total = 0
        while True:
            for _ in range(max_newton):
                d, dec = self.newton_direction(t, p, q)
                total += 1
                if dec / 2 <= 1e-10:
                    break
                f0 = self.value(t, p, q)
                step = 1.0
                moved = False
                while step >= 1e-10:
                    pn, qn = p + step * d[:m], q + step * d[m:]
                    fn = self.value(t, pn, qn)
                    # roundoff in t * objective bounds the attainable decrease
                    if fn <= f0 - 0.25 * step * dec + 1e-13 * abs(f0):
                        moved = True
                        break
                    step *= 0.5
                if not moved:
                    break
                p, q = pn, qn
            if self.nu / t <= gap_tol:
                break
            t *= PATH_STEP
        return self.mat(self.pt @ (p - q)), total, self.nu / t


def _validate(rho, dims):
    if isinstance(rho, DensityMatrix):
        m, dims = rho.matrix, rho.dims
    else:
        m = np.asarray(rho, dtype=complex)
        if dims is None:
            raise ValueError("dims required for a raw array")
    dims = tuple(int(d) for d in dims)
    n = m.shape[0]
    if n > MAX_DIM:
        raise DimensionError(f"Rains solver supports total dimension <= {MAX_DIM}, got {n}")
    if len(dims) < 2 or int(np.prod(dims)) != n:
        raise DimensionError(f"bad bipartition {dims} for dimension {n}")
    return 0.5 * (m + m.conj().T), dims


def _is_ppt_prime(m: np.ndarray, dims, part) -> bool:
    return np.abs(np.linalg.eigvalsh(ptranspose_array(m, dims, part))).sum() <= 1.0 + 1e-12


def rains_relative_entropy(rho, dims=None, part=(1,), *, method: str = "barrier",
                           **kw) -> RainsResult:
    """``min_{sigma in PPT'} D(rho||sigma)`` in bits across the cut transposing ``part``.

    ``rho`` is a DensityMatrix or a raw array with ``dims``; total dimension
    at most 16. ``method`` is ``"barrier"`` or ``"spg"``.
    """
    m, dims = _validate(rho, dims)
    part = tuple(part)
    s_rho = entropy_array(m)
    if _is_ppt_prime(m, dims, part):
        # sigma = rho is feasible and D >= 0
        gap = sampled_fw_gap(m, m, dims, part)
        return RainsResult(0.0, m, gap, 0, 0.0, dims)
    if method == "barrier":
        sigma, iters, path_gap = _Barrier(m, dims, part).solve(**kw)
        cert = path_gap / LN2
    elif method == "spg":
        sigma, iters, pg_gap = _spg(m, dims, part, **kw)
        cert = float("inf")
    else:
        raise ValueError(f"unknown method {method!r}")
    sigma = make_feasible(sigma, dims, part)
    if not np.isfinite(cross_entropy(m, sigma)):
        n = sigma.shape[0]
        sigma = (1 - BARRIER_EPS) * sigma + BARRIER_EPS * np.eye(n) / n
    value = max(cross_entropy(m, sigma) - s_rho, 0.0)
    sgap = sampled_fw_gap(m, sigma, dims, part)
    gap = max(sgap, pg_gap) if method == "spg" else max(sgap, cert)
    return RainsResult(float(value), sigma, float(gap), int(iters), float(cert), dims)


def _projected_gap(proj, sigma: np.ndarray, g: np.ndarray) -> float:
    """Linearization gap over projected gradient steps of fixed lengths; each
    projected point is feasible, so this is a lower bound on the Frank-Wolfe gap."""
    gn = max(np.linalg.norm(g), 1e-300)
    return max(0.0, max(-_ip(g, proj(sigma - (t / gn) * g) - sigma) for t in (0.1, 1.0, 10.0)))


def _spg(m, dims, part, *, tol: float = 1e-6, maxiter: int = 5000, memory: int = 10,
         check_every: int = 20):
    """Spectral projected gradient; returns ``(sigma, iterations, last projected-gradient gap)``."""
    n = m.shape[0]
    proj = PPTProjector(dims, part)
    # I/n lies in PPT'; mixing bounds the initial gradient
    sigma = (1 - INIT_MIX) * proj(m) + INIT_MIX * np.eye(n) / n
    fs = cross_entropy(m, sigma)
    g = cross_entropy_grad(m, sigma)
    lam = 1.0 / max(np.linalg.norm(g), 1.0)
    hist = [fs]
    it = 0
    pg_gap = float("inf")
    for it in range(1, maxiter + 1):
        # steps longer than the set diameter only cost projection work
        lam = min(lam, 10.0 / max(np.linalg.norm(g), 1e-300))
        direction = proj(sigma - lam * g) - sigma
        gd = _ip(g, direction)
        if (it - 1) % check_every == 0:
            pg_gap = _projected_gap(proj, sigma, g)
            if pg_gap <= tol and sampled_fw_gap(m, sigma, dims, part) <= tol:
                break
        if gd >= 0:
            break
        fref = max(hist[-memory:])
        step = 1.0
        while step >= 1e-14:
            cand = sigma + step * direction
            fc = cross_entropy(m, cand)
            if fc <= fref + 1e-4 * step * gd:
                break
            step *= 0.5
        else:
            break
        gc = cross_entropy_grad(m, cand)
        sk, yk = cand - sigma, gc - g
        sy = _ip(sk, yk)
        sigma, fs, g = cand, fc, gc
        hist.append(fs)
        lam = min(max(_ip(sk, sk) / sy, 1e-12), 1e12) if sy > 0 else 1e12
    return sigma, it, pg_gap


def rains_feasibility(sigma: np.ndarray, dims, part=(1,)) -> tuple[float, float]:
    """``(min eigenvalue, ||sigma^{T_B}||_1)``."""
    lo = float(np.linalg.eigvalsh(sigma)[0])
    tn = float(np.abs(np.linalg.eigvalsh(ptranspose_array(sigma, dims, part))).sum())
    return lo, tn


# channel Rains information

def channel_symmetry(channel: QuantumChannel) -> str:
    """``"full"`` if covariant under every generalized Pauli, ``"diagonal"`` if
    phase covariant, else ``"none"``."""
    if is_teleportation_covariant(channel)[0]:
        return "full"
    if phase_covariant(channel):
        return "diagonal"
    return "none"


def rains_at_input(channel: QuantumChannel, rho_in: np.ndarray, **kw) -> RainsResult:
    """Rains relative entropy of ``(id x N)`` applied to a purification of ``rho_in``."""
    out = purified_output(channel, rho_in)
    return rains_relative_entropy(out, (channel.in_dim, channel.out_dim), **kw)


def rains_of_choi(channel: QuantumChannel) -> RainsResult:
    return rains_relative_entropy(choi_array(channel), (channel.in_dim, channel.out_dim))


def rains_information_channel(channel: QuantumChannel, *, symmetry: str = "auto",
                              return_details: bool = False):
    """Channel Rains information ``max_rho R(A;B)`` over input marginals, in bits.

    ``symmetry`` restricts the input search: ``"full"`` evaluates the maximally
    mixed input, ``"diagonal"`` searches diagonal inputs (then probes a few
    off-diagonal starts), ``"none"`` runs the general multi-start search, and
    ``"auto"`` picks from the channel's detected covariance.
    """
    if channel.in_dim > 4:
        raise DimensionError("channel Rains information supports input dimension <= 4")
    d = channel.in_dim
    if symmetry == "auto":
        symmetry = channel_symmetry(channel)
    cache: dict = {}

    def objective(rho_in):
        key = np.round(rho_in, 12).tobytes()
        if key not in cache:
            cache[key] = rains_at_input(channel, rho_in).value
        return cache[key]

    if symmetry == "full":
        rho_best = np.eye(d, dtype=complex) / d
        value = objective(rho_best)
    elif symmetry == "diagonal" and d == 2:
        value, rho_best = _diagonal_qubit_search(objective)
        # covariance-reduced search; confirm against general inputs near the optimum
        for x0 in starting_points(d, n_random=2)[2:]:
            r = params_rho(x0, d)
            if objective(r) > value:
                value, rho_best = objective(r), r
    elif symmetry == "diagonal":
        def obj_diag(rho_in):
            return objective(np.diag(np.diag(rho_in)))
        r = maximize_over_inputs(obj_diag, d, ftol=OUTER_TOL * 1e-2, xtol=1e-3)
        value, rho_best = r.value, np.diag(np.diag(r.rho_in))
    elif symmetry == "none":
        r = maximize_over_inputs(objective, d, ftol=OUTER_TOL * 1e-2, xtol=1e-3)
        value, rho_best = r.value, r.rho_in
    else:
        raise ValueError(f"unknown symmetry mode {symmetry!r}")
    if return_details:
        return float(value), rho_best, symmetry
    return float(value)


def params_rho(x, d):
    return params_to_density(np.asarray(x, dtype=float), d)


def _diagonal_qubit_search(objective):
    def f(p):
        return objective(np.diag([1 - p, p]).astype(complex))

    grid = np.linspace(0.0, 1.0, 9)
    vals = [f(p) for p in grid]
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda p: -f(p), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-4})
    if -res.fun >= vals[i]:
        p, value = float(res.x), -float(res.fun)
    else:
        p, value = float(grid[i]), vals[i]
    return value, np.diag([1 - p, p]).astype(complex)
