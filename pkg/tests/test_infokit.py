import numpy as np
import pytest

from pgfcs.densekit import kron, partial_trace, random_density, random_isometry
from pgfcs.fcskit import Tripartition, builtin_model, contract_chain, dense_state, random_model
from pgfcs.infokit import (
    NotAStateError,
    af_bound,
    binary_entropy,
    dense_entropies,
    purified_memory,
    qcmi,
    qcmi_of_state,
    qmi,
    qmi_closed_form,
    relative_entropy,
    state_entropies,
    transfer_entropies,
    universal_error_ceiling,
    von_neumann,
)

LN2 = np.log(2)


def test_von_neumann_examples():
    assert von_neumann(np.diag([1.0, 0.0])) == pytest.approx(0.0)
    assert von_neumann(np.eye(5) / 5) == pytest.approx(np.log(5))
    assert von_neumann(np.diag([0.25, 0.5, 0.25])) == pytest.approx(1.5 * LN2)
    with pytest.raises(NotAStateError):
        von_neumann(np.eye(2))
    with pytest.raises(NotAStateError):
        von_neumann(np.diag([1.1, -0.1]))


def test_af_bound_examples():
    assert af_bound(0.0, 1, 3) == (0.0, 0.0)
    assert af_bound(2.0, 1, 3).full == pytest.approx(np.log(3) + 2 * LN2)
    for eps in np.linspace(1e-4, 2.0, 60):
        b = af_bound(eps, 2, 3)
        assert b.simplified >= b.full - 1e-12
    with pytest.raises(ValueError):
        af_bound(2.5, 1, 3)
    assert binary_entropy(0.5) == pytest.approx(LN2)
    assert universal_error_ceiling(0.0) == 0.0


def test_relative_entropy_examples():
    rng = np.random.default_rng(0)
    r = random_density(3, rng)
    assert relative_entropy(r, r) == pytest.approx(0.0, abs=1e-12)
    assert relative_entropy(np.diag([1.0, 0.0]), np.eye(2) / 2) == pytest.approx(LN2)
    assert relative_entropy(np.eye(2) / 2, np.diag([1.0, 0.0])) == float("inf")


def test_relative_entropy_qcmi_identity():
    m = random_model(2, 2, np.random.default_rng(3))
    y = dense_state(m, 4)
    rho = y @ y.conj().T
    dims = [2, 4, 2]
    rho_bc = partial_trace(rho, dims, [1, 2])
    rho_ab = partial_trace(rho, dims, [0, 1])
    rho_b = partial_trace(rho, dims, [1])
    lhs = relative_entropy(rho, kron(np.eye(2), rho_bc)) - relative_entropy(rho_ab, kron(np.eye(2), rho_b))
    assert lhs == pytest.approx(qcmi_of_state(rho, dims), abs=1e-9)


def test_complement_symmetry_of_purified_chain():
    # pure state on R (x) spins (x) M; every region and its complement share an entropy
    m = random_model(2, 2, np.random.default_rng(4))
    x0 = purified_memory(m)
    n = 3
    psi = contract_chain(m, [(n, True)], x0=x0, k0=2, trace_memory=False)
    assert abs(np.trace(psi @ psi) - 1) < 1e-10
    dims = [2] + [2] * n + [2]
    for keep in ([0], [1, 2], [0, 4], [2], [1, 3]):
        comp = [i for i in range(len(dims)) if i not in keep]
        a = von_neumann(partial_trace(psi, dims, keep))
        b = von_neumann(partial_trace(psi, dims, comp))
        assert a == pytest.approx(b, abs=1e-9)


@pytest.mark.parametrize("name", ["aklt", "two-component", "period2"])
@pytest.mark.parametrize("n_b", [1, 2, 3])
def test_engines_agree_on_builtins(name, n_b):
    m = builtin_model(name)
    part = Tripartition(1, n_b, 1)
    a, b = dense_entropies(m, part), transfer_entropies(m, part)
    for k in a:
        assert a[k] == pytest.approx(b[k], abs=1e-10)


def test_strong_subadditivity_random():
    rng = np.random.default_rng(11)
    for t in range(200):
        d_s, d_M = int(rng.integers(2, 4)), int(rng.integers(1, 4))
        m = random_model(d_s, d_M, rng)
        part = Tripartition(1, int(rng.integers(1, 3)), 1)
        r = qcmi(m, part)
        assert r.qcmi >= -1e-9
        assert r.qmi >= -1e-9
        for s in (r.S_ABC, r.S_AB, r.S_BC, r.S_B):
            assert -1e-9 <= s <= part.total * np.log(d_s) + np.log(d_M) + 1e-9


def test_data_processing_on_c():
    rng = np.random.default_rng(5)
    m = random_model(2, 2, rng)
    y = dense_state(m, 4)
    rho = y @ y.conj().T
    dims = [2, 4, 2]
    base = qcmi_of_state(rho, dims)
    for _ in range(10):
        k = random_isometry(2 * 3, 2, rng).reshape(3, 2, 2)
        big = np.array([np.kron(np.eye(8), a) for a in k])
        out = sum(b @ rho @ b.conj().T for b in big)
        assert qcmi_of_state(out, dims) <= base + 1e-9


def test_product_state_has_zero_qcmi():
    rng = np.random.default_rng(6)
    rho = kron(random_density(2, rng), kron(random_density(3, rng), random_density(2, rng)))
    assert qcmi_of_state(rho, [2, 3, 2]) == pytest.approx(0.0, abs=1e-12)
    e = state_entropies(rho, [2, 3, 2])
    assert e["S_A"] + e["S_C"] - e["S_AC"] == pytest.approx(0.0, abs=1e-12)


def test_qmi_closed_form_value():
    assert qmi_closed_form() == pytest.approx(0.0034794022, abs=1e-9)
    assert qmi(builtin_model("two-component"), Tripartition(1, 30, 1)) == pytest.approx(qmi_closed_form(), abs=1e-12)


def test_aklt_qmi_decays():
    m = builtin_model("aklt")
    vals = [qmi(m, Tripartition(1, n, 1)) for n in (2, 4, 6, 8)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-4


def test_period2_qcmi_decreases_across_parity():
    m = builtin_model("period2")
    a = qcmi(m, Tripartition(1, 29, 1)).qcmi
    b = qcmi(m, Tripartition(1, 30, 1)).qcmi
    assert 0 <= b < a < 1e-4


def test_dense_budget():
    with pytest.raises(MemoryError):
        dense_entropies(builtin_model("aklt"), Tripartition(2, 6, 2))
