import os
import subprocess
import sys

import numpy as np
import pytest

from pgfcs import _pykernels, kernels

ck = pytest.importorskip("pgfcs._ckernels")


@pytest.mark.parametrize("k,d_out,d_in,ns", [(1, 2, 2, 3), (3, 4, 2, 2), (9, 4, 4, 3), (2, 6, 2, 1)])
def test_compiled_matches_numpy(k, d_out, d_in, ns):
    rng = np.random.default_rng(k + d_in)
    ops = rng.standard_normal((ns, d_out, d_in)) + 1j * rng.standard_normal((ns, d_out, d_in))
    x = rng.standard_normal((k * d_in, k * d_in)) + 1j * rng.standard_normal((k * d_in, k * d_in))
    ref = _pykernels.conj_last(x, ops, k)
    assert np.allclose(ck.conj_last(x, ops, k), ref, atol=1e-12)
    assert np.allclose(kernels.conj_last(x, ops, k), ref, atol=1e-12)


def test_conj_last_oracle():
    rng = np.random.default_rng(0)
    ops = rng.standard_normal((3, 2, 2)) + 1j * rng.standard_normal((3, 2, 2))
    x = rng.standard_normal((6, 6))
    ref = sum(np.kron(np.eye(3), a) @ x @ np.kron(np.eye(3), a).conj().T for a in ops)
    assert np.allclose(kernels.conj_last(x, ops, 3), ref)


def test_xlogx():
    w = np.array([0.5, 0.25, 0.25, 0.0, -1e-18])
    ref = 0.5 * np.log(0.5) + 0.5 * np.log(0.25)
    assert ck.xlogx_sum(w) == pytest.approx(ref)
    assert _pykernels.xlogx_sum(w) == pytest.approx(ref)


def test_backend_selection():
    assert kernels.BACKEND == "cython"
    code = "from pgfcs import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=dict(os.environ, PGFCS_PURE="1"), capture_output=True, text=True)
    assert out.stdout.strip() == "numpy"


def test_pure_backend_gives_same_entropies():
    code = (
        "from pgfcs.fcskit import builtin_model, Tripartition;from pgfcs.infokit import qcmi;"
        "r=qcmi(builtin_model('aklt'),Tripartition(1,3,2));print(repr(r.qcmi))"
    )
    vals = []
    for pure in ("1", "0"):
        out = subprocess.run([sys.executable, "-c", code], env=dict(os.environ, PGFCS_PURE=pure), capture_output=True, text=True)
        vals.append(float(out.stdout))
    assert abs(vals[0] - vals[1]) < 1e-12
