"""Acceptance criteria, each run at its stated tolerance and runtime budget.

Every test appends one pass/fail line to the acceptance summary printed at the
end of the pytest run.
"""
import csv
import io
import math
import time

import numpy as np
import pytest

from entdist.channels import ChannelParams, apply_array, choi_array, make_channel
from entdist.cli import main
from entdist.entropy import coherent_information_channel
from entdist.linalg import (
    ptrace_array,
    ptranspose_array,
    random_density_array,
    random_unitary,
    trace_distance_array,
)
from entdist.montecarlo import simulate_erasure_protocol, simulate_multirail, simulate_teleportation_check
from entdist.protocols import (
    assisted_distillation_lower_bound,
    epr_bounds,
    erasure_capacity,
    ghz_bounds,
    multirail_rate,
)
from entdist.rains import GAP_TOL, rains_feasibility, rains_information_channel, rains_relative_entropy
from oracles import bell_diagonal, bell_diagonal_rains, choi_by_units, h2, ptrace_loops, ptranspose_two

pytestmark = pytest.mark.slow
LOG3_3 = math.log2(3) / 3


def record(log, number, title, ok, elapsed, budget, detail=""):
    ok = bool(ok) and elapsed < budget
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({elapsed:.1f}s of {budget:.0f}s){detail}"
    log.append(line)
    print(line)
    return ok


def test_criterion_1_erasure_exactness(acceptance_log):
    t0 = time.perf_counter()
    worst = 0.0
    calls = 0
    grid = np.linspace(0, 1, 11)
    for d in (2, 3):
        for p1 in grid:
            for p2 in grid:
                b = epr_bounds(ChannelParams.make("erasure", p=p1, d=d), ChannelParams.make("erasure", p=p2, d=d))
                exact = (1 - p1) * (1 - p2) * math.log2(d)
                worst = max(worst, abs(b.lower - exact), abs(b.upper - exact))
                calls += 1
    elapsed = time.perf_counter() - t0
    assert record(acceptance_log, 1, "erasure exactness", calls == 242 and worst <= 1e-12, elapsed, 1.0,
                  f"; {calls} pairs, max error {worst:.1e}")


def test_criterion_2_dephasing_collapse(acceptance_log):
    t0 = time.perf_counter()
    worst = 0.0
    for p in np.round(np.arange(0, 0.5001, 0.05), 12):
        ch = make_channel(ChannelParams.make("dephasing", p=float(p)))
        v = 1 - h2(p)
        worst = max(worst, abs(coherent_information_channel(ch) - v), abs(rains_information_channel(ch) - v))
    zs = (0.1, 0.05, 0.03)
    b = ghz_bounds([ChannelParams.make("dephasing", p=p) for p in zs])
    v = 1 - h2(max(zs))
    ghz_err = max(abs(b.lower - v), abs(b.upper - v))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and ghz_err <= 1e-4
    assert record(acceptance_log, 2, "dephasing collapse", ok, elapsed, 120.0,
                  f"; optimizer error {worst:.1e}, ghz error {ghz_err:.1e}")


def test_criterion_3_gadc_sweep(acceptance_log, tmp_path, capsys):
    t0 = time.perf_counter()
    tables = {}
    for T in (0, 0.1, 0.25, 0.5):
        path = tmp_path / f"gadc_T{T}.csv"
        code = main(["sweep", f"gadc:gamma=0,T={T}", f"gadc:gamma=0,T={T}", "--param", "gamma",
                     "--grid", "0:1:0.02", "--quantities", "ic1,ir1,rains1,composition,multirail,lower,upper",
                     "--format", "csv", "--out", str(path)])
        assert code == 0
        tables[T] = [{k: float(v) for k, v in r.items()} for r in csv.DictReader(io.StringIO(path.read_text()))]
    capsys.readouterr()
    elapsed = time.perf_counter() - t0

    zero = {round(r["gamma"], 12): r for r in tables[0]}
    a = abs(zero[0.5]["composition"]) <= 1e-4
    b = max(abs(r["multirail"] - (1 - r["gamma"]) ** 2 * LOG3_3) for r in tables[0]) <= 1e-10
    c = all(r["multirail"] > r["composition"] for g, r in zero.items() if 0.5 <= g <= 0.98)
    d = all(max(r["composition"], r["multirail"], r["lower"]) <= r["upper"] + 1e-6
            for rows in tables.values() for r in rows)
    full = all(len(rows) == 51 for rows in tables.values())
    assert record(acceptance_log, 3, "GADC sweep", a and b and c and d and full, elapsed, 600.0,
                  f"; checks a={a} b={b} c={c} d={d}")


def test_criterion_4_multirail_optimum(acceptance_log):
    t0 = time.perf_counter()
    best = {g: max(range(2, 7), key=lambda k: multirail_rate(g, g, 0, 0, k)) for g in (0.1, 0.5, 0.9)}
    elapsed = time.perf_counter() - t0
    assert record(acceptance_log, 4, "multi-rail optimum", all(k == 3 for k in best.values()), elapsed, 60.0,
                  f"; argmax {best}")


def test_criterion_5_monte_carlo(acceptance_log):
    t0 = time.perf_counter()
    er = simulate_erasure_protocol(0.1, 0.2, 2, 10**5, 7)
    er_ok = abs(er.empirical_rate - 0.72) <= 3 * er.stderr
    mr = simulate_multirail(0.3, 0.3, 0, 0, 3, 10**4, 7)
    mr_ok = abs(mr.success_prob_hat - 0.49) <= 3 * mr.success_stderr
    elapsed = time.perf_counter() - t0
    assert record(acceptance_log, 5, "Monte Carlo concordance", er_ok and mr_ok, elapsed, 120.0,
                  f"; erasure {er.empirical_rate:.5f}+-{er.stderr:.5f}, "
                  f"success {mr.success_prob_hat:.4f}+-{mr.success_stderr:.4f}")


def test_criterion_6_teleportation(acceptance_log):
    t0 = time.perf_counter()
    dists = {s: simulate_teleportation_check(s, 100, 0)
             for s in ("dephasing:p=0.2", "erasure:p=0.3,d=2", "pauli:px=0.1,py=0.1,pz=0.1")}
    elapsed = time.perf_counter() - t0
    worst = max(dists.values())
    assert record(acceptance_log, 6, "teleportation equivalence", worst <= 1e-8, elapsed, 60.0,
                  f"; max distance {worst:.1e}")


def _linalg_channel_instance(i, rng):
    dims = [(2, 2), (2, 3), (3, 2), (3, 3)][i % 4]
    n = dims[0] * dims[1]
    m = random_density_array(n, rng, int(rng.integers(1, n + 1)))
    ok = np.allclose(ptrace_array(m, dims, [0]), ptrace_loops(m, dims, [0]), atol=1e-12)
    ok &= np.allclose(ptrace_array(m, dims, [1]), ptrace_loops(m, dims, [1]), atol=1e-12)
    pt = ptranspose_array(m, dims, [1])
    ok &= np.allclose(pt, ptranspose_two(m, *dims), atol=1e-12)
    ok &= np.allclose(ptranspose_array(pt, dims, [1]), m, atol=1e-14)
    ok &= abs(np.trace(pt) - 1) <= 1e-12
    u = random_unitary(n, rng)
    other = random_density_array(n, rng)
    td = trace_distance_array(m, other)
    ok &= 0 <= td <= 1 + 1e-12
    ok &= abs(td - trace_distance_array(u @ m @ u.conj().T, u @ other @ u.conj().T)) <= 1e-10

    kind = ["erasure", "dephasing", "gadc", "pauli", "identity"][i % 5]
    a, b = rng.random(2)
    params = {"erasure": dict(p=a, d=2 + i % 2), "dephasing": dict(p=a), "gadc": dict(gamma=a, T=b),
              "pauli": dict(px=a / 3, py=b / 3, pz=(1 - a) / 3), "identity": dict(d=2 + i % 3)}[kind]
    ch = make_channel(ChannelParams.make(kind, **params))
    rho = random_density_array(2 * ch.in_dim, rng)
    out = apply_array(ch, rho, (2, ch.in_dim), 1)
    ok &= abs(np.trace(out) - 1) <= 1e-10 and np.linalg.eigvalsh(out)[0] >= -1e-10
    J = choi_array(ch)
    ok &= np.allclose(J, choi_by_units(list(ch.kraus), ch.in_dim), atol=1e-12)
    ok &= np.allclose(ptrace_array(J, (ch.in_dim, ch.out_dim), [0]), np.eye(ch.in_dim) / ch.in_dim, atol=1e-10)
    return bool(ok)


def test_criterion_7_property_suites(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    states = [random_density_array(4, rng, int(rng.integers(1, 5))) for _ in range(500)]
    results = [rains_relative_entropy(m, (2, 2)) for m in states]
    values = [r.value for r in results]

    feasible = 0
    for r in results:
        lo, tn = rains_feasibility(r.minimizer, (2, 2))
        feasible += lo >= -1e-8 and tn <= 1 + 1e-8 and 0 <= r.gap_estimate <= GAP_TOL

    convex = 0
    for i, m in enumerate(states):
        j, lam = (i + 1) % 500, (0.25, 0.5, 0.75)[i % 3]
        mix = rains_relative_entropy(lam * m + (1 - lam) * states[j], (2, 2)).value
        convex += mix <= lam * values[i] + (1 - lam) * values[j] + 2 * GAP_TOL

    locals_ = [make_channel(s) for s in ("dephasing:p=0.2", "gadc:gamma=0.3,T=0", "gadc:gamma=0.6,T=0.2",
                                         "pauli:px=0.1,py=0.05,pz=0.02")]
    monotone = 0
    for i, m in enumerate(states):
        out = apply_array(locals_[i % 4], m, (2, 2), 1)
        monotone += rains_relative_entropy(out, (2, 2)).value <= values[i] + 2 * GAP_TOL

    bell_err = 0.0
    grid = np.linspace(0, 1, 5)
    for a in grid:
        for b in grid:
            rest = (1 - a) * (1 - b) / 2
            w = np.array([a, (1 - a) * b, rest, rest])
            u = np.kron(random_unitary(2, rng), random_unitary(2, rng))
            m = u @ bell_diagonal(w) @ u.conj().T
            bell_err = max(bell_err, abs(rains_relative_entropy(m, (2, 2)).value - bell_diagonal_rains(w)))

    instances = sum(_linalg_channel_instance(i, rng) for i in range(1000))
    elapsed = time.perf_counter() - t0
    ok = feasible == convex == monotone == 500 and bell_err <= 1e-3 and instances == 1000
    assert record(acceptance_log, 7, "property suites", ok, elapsed, 600.0,
                  f"; feasible {feasible}/500, convex {convex}/500, monotone {monotone}/500, "
                  f"bell-diagonal error {bell_err:.1e}, linalg+channel {instances}/1000")


def test_criterion_8_assisted_consistency(acceptance_log):
    t0 = time.perf_counter()
    e = assisted_distillation_lower_bound(make_channel("erasure:p=0.1,d=2"), make_channel("erasure:p=0.2,d=2"))
    ident = make_channel("identity:d=2")
    i = assisted_distillation_lower_bound(ident, ident)
    elapsed = time.perf_counter() - t0
    ok = 0 <= e <= erasure_capacity(0.1, 0.2, 2) + 1e-6 and i >= 1 - 1e-6
    assert record(acceptance_log, 8, "assisted distillation consistency", ok, elapsed, 120.0,
                  f"; erasure {e:.4f}, identity {i:.6f}")
