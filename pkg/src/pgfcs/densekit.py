"""Dense complex matrix primitives.

Conventions used across the package: tensor factor 0 is the leftmost slot,
storage is row-major, and ``vec`` stacks rows so that
``vec(|i><j|) = |i> (x) |j>``.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg

HERM_TOL = 1e-10
BIORTH_TOL = 1e-8
MAX_DIM = 1 << 15


class DimensionError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted by decreasing modulus with bi-orthogonal eigenvectors.

    ``left[:, i].conj() @ right[:, j] == delta_ij`` when ``diagonalizable``.
    """

    values: np.ndarray
    right: np.ndarray
    left: np.ndarray
    diagonalizable: bool


def kron(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] * b.shape[0] > MAX_DIM or a.shape[1] * b.shape[1] > MAX_DIM:
        raise DimensionError(f"kron result {a.shape} x {b.shape} exceeds dimension cap {MAX_DIM}")
    return np.kron(a, b)


def kron_all(*ops):
    return reduce(kron, ops)


def partial_trace(x, dims, keep):
    """Trace out every factor not listed in ``keep``.

    The kept factors appear in increasing index order in the result.
    """
    x = np.asarray(x)
    dims = [int(d) for d in dims]
    n = len(dims)
    total = int(np.prod(dims)) if dims else 1
    if x.shape != (total, total):
        raise DimensionError(f"matrix of shape {x.shape} does not match factor dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise DimensionError(f"keep indices {keep} out of range for {n} factors")
    t = x.reshape(dims + dims)
    # einsum over row letters 0..n-1 and column letters n..2n-1
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    col = list(letters[n:])
    for i in range(n):
        if i not in keep:
            col[i] = letters[i]
    out = [letters[i] for i in keep] + [col[i] for i in keep]
    t = np.einsum("".join(letters[:n]) + "".join(col) + "->" + "".join(out), t)
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return t.reshape(d, d)


def permute_factors(x, dims, order):
    """Reorder tensor factors of a square operator: new factor j is old factor order[j]."""
    n = len(dims)
    t = np.asarray(x).reshape(list(dims) * 2)
    t = t.transpose(list(order) + [n + o for o in order])
    d = int(np.prod(dims))
    return t.reshape(d, d)


def vec(x):
    return np.asarray(x).reshape(-1)


def unvec(v, d=None):
    v = np.asarray(v).reshape(-1)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise DimensionError(f"vector of length {v.size} is not a vectorized {d}x{d} matrix")
    return v.reshape(d, d)


def herm(x):
    return 0.5 * (x + np.conj(np.transpose(x)))


def is_hermitian(x, tol=HERM_TOL):
    x = np.asarray(x)
    scale = max(1.0, np.abs(x).max(initial=0.0))
    return np.abs(x - x.conj().T).max(initial=0.0) <= tol * scale


def norm_op(x):
    return float(np.linalg.norm(x, 2)) if np.asarray(x).size else 0.0


def norm_hs(x):
    return float(np.linalg.norm(x))


def norm_trace(x):
    """Sum of singular values; Hermitian inputs use eigvalsh."""
    x = np.asarray(x)
    if x.shape[0] == x.shape[1] and is_hermitian(x, 1e-13):
        return float(np.abs(np.linalg.eigvalsh(herm(x))).sum())
    return float(np.linalg.svd(x, compute_uv=False).sum())


def norms(x):
    return {"trace_norm": norm_trace(x), "op_norm": norm_op(x), "hs_norm": norm_hs(x)}


def eigh_psd(x, tol=HERM_TOL):
    """Eigen-decomposition of a PSD matrix with small negative eigenvalues clipped."""
    x = np.asarray(x)
    if not is_hermitian(x, tol):
        raise NotPSDError("matrix is not Hermitian")
    w, u = np.linalg.eigh(herm(x))
    scale = max(1.0, abs(w).max(initial=0.0))
    if w.size and w.min() < -tol * scale:
        raise NotPSDError(f"negative eigenvalue {w.min():.3e}")
    return np.clip(w, 0.0, None), u


def matrix_sqrt_psd(x, tol=HERM_TOL):
    w, u = eigh_psd(x, tol)
    return (u * np.sqrt(w)) @ u.conj().T


psd_sqrt = matrix_sqrt_psd


def pinv_sqrt(x, cutoff=1e-12, tol=HERM_TOL):
    """Pseudo-inverse square root; eigenvalues at or below ``cutoff * max`` map to zero."""
    w, u = eigh_psd(x, tol)
    thr = cutoff * max(w.max(initial=0.0), 0.0)
    inv = np.zeros_like(w)
    mask = w > thr
    inv[mask] = 1.0 / np.sqrt(w[mask])
    return (u * inv) @ u.conj().T


def support_projector(x, cutoff=1e-12, tol=HERM_TOL):
    w, u = eigh_psd(x, tol)
    thr = cutoff * max(w.max(initial=0.0), 0.0)
    v = u[:, w > thr]
    return v @ v.conj().T


def _cluster(values, tol):
    """Group indices of nearly equal complex values."""
    groups = []
    for i, z in enumerate(values):
        for g in groups:
            if abs(values[g[0]] - z) <= tol:
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def eig_general(x, tol=1e-10):
    """General eigendecomposition with bi-orthogonal left eigenvectors.

    LAPACK geev reduces to Schur form internally. Within clusters of equal
    eigenvalues the left vectors are re-biorthogonalized explicitly. The
    decomposition is flagged non-diagonalizable when the right eigenvector
    matrix has condition number above 1/tol.
    """
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError("eig_general needs a square matrix")
    try:
        w, vl, vr = scipy.linalg.eig(x, left=True, right=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    order = np.lexsort((np.angle(w), -np.round(np.abs(w), 12)))
    w, vl, vr = w[order], vl[:, order], vr[:, order]
    vr = vr / np.linalg.norm(vr, axis=0)
    cond = np.linalg.cond(vr)
    diag = bool(np.isfinite(cond) and cond < 1.0 / tol)
    scale = max(1.0, np.abs(w).max(initial=0.0))
    for g in _cluster(w, 1e-8 * scale):
        r = vr[:, g]
        l = vl[:, g]
        gram = l.conj().T @ r
        if diag:
            vl[:, g] = l @ np.linalg.inv(gram).conj().T
        else:
            # best effort; callers check the flag
            d = np.diag(gram)
            d = np.where(abs(d) > 1e-300, d, 1.0)
            vl[:, g] = l / d.conj()
    if diag:
        resid = np.abs(vl.conj().T @ vr - np.eye(len(w))).max(initial=0.0)
        if resid > BIORTH_TOL * max(1.0, cond):
            diag = False
    return Spectrum(values=w, right=vr, left=vl, diagonalizable=diag)


def random_unitary(d, rng):
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / abs(np.diag(r)))


def random_isometry(rows, cols, rng):
    z = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / abs(np.diag(r)))


def random_density(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
