import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgfcs.densekit import (
    DimensionError,
    NotPSDError,
    eig_general,
    kron,
    kron_all,
    matrix_sqrt_psd,
    norm_op,
    norm_trace,
    norms,
    partial_trace,
    permute_factors,
    pinv_sqrt,
    random_density,
    random_unitary,
    support_projector,
    unvec,
    vec,
)


def loop_partial_trace(x, dims, keep):
    """Index-by-index oracle."""
    n = len(dims)
    kd = [dims[i] for i in keep]
    out = np.zeros((int(np.prod(kd)), int(np.prod(kd))), dtype=complex)
    t = x.reshape(list(dims) * 2)
    for row in itertools.product(*[range(d) for d in dims]):
        for col in itertools.product(*[range(d) for d in dims]):
            if any(row[i] != col[i] for i in range(n) if i not in keep):
                continue
            r = np.ravel_multi_index([row[i] for i in keep], kd) if keep else 0
            c = np.ravel_multi_index([col[i] for i in keep], kd) if keep else 0
            out[r, c] += t[row + col]
    return out


@pytest.mark.parametrize("dims,keep", [([2, 3], [0]), ([2, 3], [1]), ([2, 2, 3], [0, 2]), ([3, 2, 2], [1]), ([2, 2], [])])
def test_partial_trace_matches_loops(dims, keep):
    rng = np.random.default_rng(3)
    d = int(np.prod(dims))
    x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    assert np.allclose(partial_trace(x, dims, keep), loop_partial_trace(x, dims, keep), atol=1e-12)


def test_partial_trace_of_product():
    rng = np.random.default_rng(0)
    a, b = random_density(2, rng), random_density(3, rng)
    ab = kron(a, b)
    assert np.allclose(partial_trace(ab, [2, 3], [0]), a)
    assert np.allclose(partial_trace(ab, [2, 3], [1]), b)


def test_partial_trace_rejects_bad_dims():
    with pytest.raises(DimensionError):
        partial_trace(np.eye(6), [2, 2], [0])
    with pytest.raises(DimensionError):
        partial_trace(np.eye(4), [2, 2], [2])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=3), st.integers(0, 2**31 - 1))
def test_partial_trace_preserves_trace(dims, seed):
    rng = np.random.default_rng(seed)
    rho = random_density(int(np.prod(dims)), rng)
    for r in range(len(dims) + 1):
        for keep in itertools.combinations(range(len(dims)), r):
            assert abs(np.trace(partial_trace(rho, dims, list(keep))) - 1) < 1e-12


def test_permute_factors_swaps_kron():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 2)), rng.standard_normal((3, 3))
    assert np.allclose(permute_factors(np.kron(a, b), [2, 3], [1, 0]), np.kron(b, a))


def test_vec_row_major():
    x = np.arange(4).reshape(2, 2)
    assert list(vec(x)) == [0, 1, 2, 3]
    assert np.array_equal(unvec(vec(x)), x)
    with pytest.raises(DimensionError):
        unvec(np.arange(5))


def test_kron_cap():
    with pytest.raises(DimensionError):
        kron(np.eye(1 << 8), np.eye(1 << 8))
    assert kron_all(np.eye(2), np.eye(3), np.eye(2)).shape == (12, 12)


def test_norms():
    x = np.diag([1.0, -1.0])
    assert norm_trace(x) == pytest.approx(2.0)
    assert norm_op(x) == pytest.approx(1.0)
    rng = np.random.default_rng(2)
    y = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    s = np.linalg.svd(y, compute_uv=False)
    n = norms(y)
    assert n["trace_norm"] == pytest.approx(s.sum())
    assert n["op_norm"] == pytest.approx(s.max())
    assert n["hs_norm"] == pytest.approx(np.sqrt((s**2).sum()))


def test_matrix_functions():
    rng = np.random.default_rng(4)
    rho = random_density(4, rng, rank=2)
    r = matrix_sqrt_psd(rho)
    assert np.allclose(r @ r, rho, atol=1e-12)
    p = support_projector(rho)
    assert np.trace(p).real == pytest.approx(2)
    s = pinv_sqrt(rho)
    assert np.allclose(s @ rho @ s, p, atol=1e-8)
    with pytest.raises(NotPSDError):
        matrix_sqrt_psd(np.diag([1.0, -0.5]))


def test_eig_general_biorthogonal():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    sp = eig_general(x)
    assert sp.diagonalizable
    assert np.allclose(sp.left.conj().T @ sp.right, np.eye(6), atol=1e-9)
    assert np.allclose(x @ sp.right, sp.right * sp.values, atol=1e-9)
    assert np.all(np.diff(np.abs(sp.values)) <= 1e-12)


def test_eig_general_degenerate_cluster():
    u = random_unitary(4, np.random.default_rng(6))
    # a normal matrix with a doubly degenerate eigenvalue
    x = u @ np.diag([1.0, 1.0, 0.3, -0.2]) @ u.conj().T
    sp = eig_general(x)
    assert sp.diagonalizable
    assert np.allclose(sp.left.conj().T @ sp.right, np.eye(4), atol=1e-9)


def test_eig_general_flags_jordan_block():
    sp = eig_general(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert not sp.diagonalizable
