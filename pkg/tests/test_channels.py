import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entdist.channels import (
    ChannelParams,
    ChannelSpecError,
    apply,
    choi_array,
    choi_state,
    is_teleportation_covariant,
    make_channel,
    parse_channel_spec,
    simulate_via_choi,
    teleportation_branches,
)
from entdist.linalg import (
    DensityMatrix,
    DimensionError,
    max_entangled,
    partial_trace,
    partial_transpose,
    random_density_matrix,
    tensor,
    trace_distance_array,
)
from oracles import channel_action, choi_by_units, gadc_kraus_literal, ptrace_loops

seeds = st.integers(0, 2**32 - 1)
prob = st.floats(0, 1, allow_nan=False)


@st.composite
def channel_params(draw):
    kind = draw(st.sampled_from(["erasure", "dephasing", "gadc", "pauli", "identity"]))
    if kind == "erasure":
        return ChannelParams.make(kind, p=draw(prob), d=draw(st.integers(2, 3)))
    if kind == "dephasing":
        return ChannelParams.make(kind, p=draw(prob))
    if kind == "gadc":
        return ChannelParams.make(kind, gamma=draw(prob), T=draw(prob))
    if kind == "pauli":
        w = np.array([draw(st.floats(0, 1)) for _ in range(4)]) + 1e-9
        w = w / w.sum()
        return ChannelParams.make(kind, px=float(w[1]), py=float(w[2]), pz=float(w[3]) * (1 - 1e-12))
    return ChannelParams.make(kind, d=draw(st.integers(2, 4)))


def test_spec_parsing():
    p = parse_channel_spec("gadc:gamma=0.3,T=0.1")
    assert p.kind == "gadc" and p["gamma"] == 0.3 and p["T"] == 0.1
    assert parse_channel_spec("erasure:p=0.1,d=2") == ChannelParams.make("erasure", p=0.1, d=2)
    assert parse_channel_spec("dephasing:p=0.05")["p"] == 0.05
    assert parse_channel_spec(str(p)) == p
    for bad, token in [("foo:p=1", "foo"), ("gadc:gama=0.3,T=0", "gama"), ("dephasing:p=abc", "abc"),
                       ("dephasing:p", "p"), ("dephasing:p=0.1,p=0.2", "p")]:
        with pytest.raises(ChannelSpecError) as err:
            parse_channel_spec(bad)
        assert err.value.token == token
    with pytest.raises(ChannelSpecError):
        parse_channel_spec("dephasing:p=1.5")
    with pytest.raises(ValueError):
        ChannelParams.make("pauli", px=0.5, py=0.5, pz=0.5)


def test_gadc_kraus_matches_literal():
    ch = make_channel("gadc:gamma=0.3,T=0.2")
    for k, lit in zip(ch.kraus, gadc_kraus_literal(0.3, 0.2)):
        np.testing.assert_allclose(k, lit, atol=1e-15)
    s = sum(k.conj().T @ k for k in ch.kraus)
    assert np.max(np.abs(s - np.eye(2))) <= 1e-12
    ad = make_channel("gadc:gamma=0.4,T=0")
    assert np.allclose(ad.kraus[2], 0) and np.allclose(ad.kraus[3], 0)


def test_erasure_and_dephasing_layout():
    er = make_channel("erasure:p=0,d=2")
    assert er.out_dim == 3
    rho = random_density_matrix([2], np.random.default_rng(1))
    out = apply(er, rho).matrix
    np.testing.assert_allclose(out[:2, :2], rho.matrix, atol=1e-15)
    assert abs(out[2, 2]) < 1e-15
    deph = make_channel("dephasing:p=0.3")
    np.testing.assert_allclose(deph.kraus[1], np.sqrt(0.3) * np.diag([1, -1]))


def test_apply_examples():
    rng = np.random.default_rng(2)
    rho = random_density_matrix([2, 3], rng)
    ident = make_channel("identity:d=3")
    np.testing.assert_allclose(apply(ident, rho, 1).matrix, rho.matrix, atol=1e-14)
    total = apply(make_channel("erasure:p=1,d=3"), rho, 1)
    flag = np.zeros((4, 4))
    flag[3, 3] = 1
    np.testing.assert_allclose(total.matrix, np.kron(partial_trace(rho, [0]).matrix, flag), atol=1e-14)
    with pytest.raises(DimensionError):
        apply(make_channel("identity:d=2"), rho, 1)


def test_dual_rail_displayed_state():
    g1, g2 = 0.3, 0.45
    psi = np.zeros(16)
    psi[0b0101] = psi[0b1010] = 1 / np.sqrt(2)
    rho = DensityMatrix(np.outer(psi, psi), [2, 2, 2, 2])
    a1, a2 = make_channel(f"gadc:gamma={g1},T=0"), make_channel(f"gadc:gamma={g2},T=0")
    for i, ch in enumerate([a1, a1, a2, a2]):
        rho = apply(ch, rho, i)

    def proj(bits):
        e = np.zeros(16)
        e[bits] = 1
        return np.outer(e, e)

    expected = ((1 - g1) * (1 - g2) * np.outer(psi, psi)
                + g1 * (1 - g2) / 2 * (proj(0b0001) + proj(0b0010))
                + (1 - g1) * g2 / 2 * (proj(0b0100) + proj(0b1000)) + g1 * g2 * proj(0b0000))
    np.testing.assert_allclose(rho.matrix, expected, atol=1e-14)


def test_choi_examples():
    np.testing.assert_allclose(choi_state(make_channel("identity:d=2")).matrix, max_entangled(2).matrix, atol=1e-15)
    p = 0.35
    J = choi_state(make_channel(f"erasure:p={p},d=2")).matrix
    phi = np.zeros((6, 6), dtype=complex)
    phi[np.ix_([0, 4], [0, 4])] = 0.5
    flag = np.zeros((3, 3))
    flag[2, 2] = 1
    np.testing.assert_allclose(J, (1 - p) * phi + p * np.kron(np.eye(2) / 2, flag), atol=1e-15)
    J = choi_state(make_channel("dephasing:p=0.5"))
    np.testing.assert_allclose(J.matrix, np.diag([0.5, 0, 0, 0.5]), atol=1e-15)
    assert np.linalg.eigvalsh(partial_transpose(J, [1]))[0] >= -1e-12
    np.testing.assert_allclose(partial_trace(choi_state(make_channel("dephasing:p=0.1")), [0]).matrix,
                               np.eye(2) / 2, atol=1e-15)


def test_teleportation_covariance_examples():
    for spec in ["dephasing:p=0.2", "erasure:p=0.3,d=2", "erasure:p=0.4,d=3", "pauli:px=0.1,py=0.1,pz=0.1",
                 "identity:d=3"]:
        ok, corr = is_teleportation_covariant(make_channel(spec))
        assert ok, spec
        for v in corr.values():
            np.testing.assert_allclose(v.conj().T @ v, np.eye(v.shape[0]), atol=1e-10)
    assert is_teleportation_covariant(make_channel("gadc:gamma=0.3,T=0"))[0] is False
    assert is_teleportation_covariant(make_channel("gadc:gamma=0.3,T=0.2"))[0] is False


def test_simulate_via_choi_examples():
    rng = np.random.default_rng(3)
    deph = make_channel("dephasing:p=0.1")
    rho = random_density_matrix([2], rng)
    assert trace_distance_array(simulate_via_choi(deph, rho).matrix, apply(deph, rho).matrix) <= 1e-10
    ident = make_channel("identity:d=2")
    assert trace_distance_array(simulate_via_choi(ident, rho).matrix, rho.matrix) <= 1e-10
    plus = DensityMatrix(np.full((2, 2), 0.5))
    out = simulate_via_choi(make_channel("erasure:p=0.25,d=2"), plus).matrix
    expected = np.zeros((3, 3))
    expected[:2, :2] = 0.75 * 0.5
    expected[2, 2] = 0.25
    np.testing.assert_allclose(out, expected, atol=1e-10)
    with pytest.raises(ValueError):
        simulate_via_choi(make_channel("gadc:gamma=0.3,T=0"), rho)


def test_branch_probabilities_uniform():
    rho = random_density_matrix([2], np.random.default_rng(4))
    br = teleportation_branches(make_channel("dephasing:p=0.3"), rho.matrix)
    np.testing.assert_allclose([b[0] for b in br.values()], 0.25, atol=1e-12)


def test_thermal_fixed_point():
    for T in (0.0, 0.1, 0.37, 1.0):
        out = make_channel(f"gadc:gamma=1,T={T}")(np.eye(2) / 2)
        assert abs(out[1, 1].real - T) <= 1e-10


@settings(max_examples=100)
@given(channel_params())
def test_kraus_completeness_and_choi_marginal(params):
    ch = make_channel(params)
    s = sum(k.conj().T @ k for k in ch.kraus)
    assert np.max(np.abs(s - np.eye(ch.in_dim))) <= 1e-10
    J = choi_array(ch)
    np.testing.assert_allclose(J, choi_by_units(list(ch.kraus), ch.in_dim), atol=1e-12)
    marg = ptrace_loops(J, (ch.in_dim, ch.out_dim), [0])
    assert np.max(np.abs(marg - np.eye(ch.in_dim) / ch.in_dim)) <= 1e-10


@settings(max_examples=100)
@given(channel_params(), seeds)
def test_apply_preserves_trace_and_psd(params, seed):
    ch = make_channel(params)
    rng = np.random.default_rng(seed)
    rho = random_density_matrix([2, ch.in_dim], rng)
    out = apply(ch, rho, 1)
    assert abs(np.trace(out.matrix).real - 1) <= 1e-10
    assert np.linalg.eigvalsh(out.matrix)[0] >= -1e-10
    raw = channel_action([np.kron(np.eye(2), k) for k in ch.kraus], rho.matrix)
    np.testing.assert_allclose(out.matrix, raw, atol=1e-12)


@settings(max_examples=25)
@given(st.sampled_from(["dephasing", "erasure", "pauli", "identity"]), prob, seeds)
def test_covariant_simulation_matches_direct(kind, p, seed):
    params = {"dephasing": dict(p=p), "erasure": dict(p=p, d=2), "pauli": dict(px=p / 3, py=p / 3, pz=p / 3),
              "identity": dict(d=2)}[kind]
    ch = make_channel(ChannelParams.make(kind, **params))
    assert is_teleportation_covariant(ch)[0]
    rng = np.random.default_rng(seed)
    for _ in range(4):
        rho = random_density_matrix([2], rng)
        assert trace_distance_array(simulate_via_choi(ch, rho).matrix, apply(ch, rho).matrix) <= 1e-8


def test_tensor_channel_order():
    # subsystem ordering follows tensor concatenation
    a = random_density_matrix([2], np.random.default_rng(5))
    b = random_density_matrix([3], np.random.default_rng(6))
    out = apply(make_channel("erasure:p=1,d=2"), tensor(a, b), 0)
    assert out.dims == (3, 3)
    np.testing.assert_allclose(partial_trace(out, [1]).matrix, b.matrix, atol=1e-14)
