"""Transfer channels of isometries, the peripheral projection and distance fits."""

from dataclasses import dataclass, field
from math import gcd

import numpy as np

from pgfcs import kernels
from pgfcs.densekit import DimensionError, Spectrum, eig_general, herm, unvec, vec

TOL_PERIPHERAL = 1e-7


class ValidationError(ValueError):
    pass


class UnsupportedModelError(ValueError):
    pass


@dataclass(frozen=True)
class TransferOperator:
    """Matrix form E of a channel on d x d memory operators.

    ``<m,n|E|i,j> = <m|E(|i><j|)|n>`` so that ``vec(E(X)) = E @ vec(X)``.
    """

    dim_memory: int
    matrix: np.ndarray
    spectrum: Spectrum
    nu_gap: float
    peripheral_count: int
    tol_peripheral: float = TOL_PERIPHERAL
    kraus: np.ndarray | None = field(default=None, repr=False)

    @property
    def peripheral_values(self):
        v = self.spectrum.values
        return v[np.abs(v) >= 1.0 - self.tol_peripheral]

    def power(self, n):
        return np.linalg.matrix_power(self.matrix, int(n))


@dataclass(frozen=True)
class ChannelDistanceReport:
    n: int
    norm22: float
    diamond_upper: float
    fitted_c: float
    fitted_nu: float
    nu_stderr: float = 0.0


def transfer_matrix(kraus):
    """E = sum_s M_s (x) conj(M_s)."""
    kraus = np.asarray(kraus, dtype=complex)
    d_out, d_in = kraus.shape[1], kraus.shape[2]
    e = np.zeros((d_out * d_out, d_in * d_in), dtype=complex)
    for m in kraus:
        e += np.kron(m, m.conj())
    return e


def choi_from_transfer(e, d_in, d_out=None):
    """Choi matrix sum_ij |i><j| (x) E(|i><j|)."""
    d_out = d_in if d_out is None else d_out
    t = np.asarray(e).reshape(d_out, d_out, d_in, d_in)
    return t.transpose(2, 0, 3, 1).reshape(d_in * d_out, d_in * d_out)


def cptp_residuals(e, d_in, d_out=None):
    """(min Choi eigenvalue, trace-preservation residual) of a transfer matrix."""
    d_out = d_in if d_out is None else d_out
    choi = choi_from_transfer(e, d_in, d_out)
    min_eig = float(np.linalg.eigvalsh(herm(choi)).min())
    tr_row = vec(np.eye(d_out)) @ np.asarray(e)
    tp = float(np.abs(tr_row - vec(np.eye(d_in))).max())
    return min_eig, tp


def _make_operator(e, d, tol_peripheral, kraus=None):
    spec = eig_general(e)
    mods = np.abs(spec.values)
    inner = mods[mods < 1.0 - tol_peripheral]
    nu_gap = float(inner.max()) if inner.size else 0.0
    count = int(np.sum(mods >= 1.0 - tol_peripheral))
    return TransferOperator(d, e, spec, nu_gap, count, tol_peripheral, kraus)


def transfer_from_isometry(v, d_s, d_M, tol=1e-10, tol_peripheral=TOL_PERIPHERAL):
    v = np.asarray(v, dtype=complex)
    if v.shape != (d_s * d_M, d_M):
        raise DimensionError(f"isometry has shape {v.shape}, expected {(d_s * d_M, d_M)}")
    resid = np.abs(v.conj().T @ v - np.eye(d_M)).max()
    if resid > tol:
        raise ValidationError(f"V is not an isometry: |V^dag V - I| = {resid:.3e}")
    kraus = v.reshape(d_s, d_M, d_M)
    e = transfer_matrix(kraus)
    # adjoint action on the identity gives trace preservation
    tp = np.abs(vec(np.eye(d_M)) @ e - vec(np.eye(d_M))).max()
    if tp > tol * 10:
        raise ValidationError(f"induced channel not trace preserving: residual {tp:.3e}")
    t = _make_operator(e, d_M, tol_peripheral, kraus)
    radius = float(np.abs(t.spectrum.values).max())
    if abs(radius - 1.0) > 1e-9:
        raise ValidationError(f"spectral radius {radius:.12f} differs from 1")
    return t


def apply_channel(t, x, n=1):
    """E^n(X) for a TransferOperator or an isometry (given as its Kraus stack or matrix)."""
    x = np.asarray(x, dtype=complex)
    if isinstance(t, TransferOperator):
        d = t.dim_memory
        if x.shape != (d, d):
            raise DimensionError(f"operator shape {x.shape} does not match memory dim {d}")
        if n == 0:
            return x.copy()
        return unvec(t.power(n) @ vec(x), d)
    v = np.asarray(t, dtype=complex)
    d = x.shape[0]
    kraus = v if v.ndim == 3 else v.reshape(-1, d, d)
    if kraus.shape[1:] != (d, d):
        raise DimensionError(f"isometry of shape {v.shape} incompatible with {x.shape}")
    for _ in range(n):
        x = kernels.conj_last(x, kraus, 1)
    return x


def _peripheral_vectors(t):
    spec = t.spectrum
    idx = np.flatnonzero(np.abs(spec.values) >= 1.0 - t.tol_peripheral)
    lam = spec.values[idx]
    r = spec.right[:, idx]
    l = spec.left[:, idx]
    # the peripheral part is biorthogonalized on its own, which also covers
    # the case where some sub-peripheral block is defective
    gram = l.conj().T @ r
    if np.linalg.cond(gram) > 1e8:
        raise UnsupportedModelError("peripheral eigenvectors are degenerate: defective peripheral block")
    l = l @ np.linalg.inv(gram).conj().T
    e = t.matrix
    res_r = np.abs(e @ r - r * lam).max(initial=0.0)
    res_l = np.abs(l.conj().T @ e - lam[:, None] * l.conj().T).max(initial=0.0)
    if max(res_r, res_l) > 1e-8:
        raise UnsupportedModelError(
            f"peripheral spectrum is not semisimple (residuals {res_r:.2e}, {res_l:.2e})"
        )
    return lam, r, l


def peripheral_projector(t):
    _, r, l = _peripheral_vectors(t)
    return r @ l.conj().T


def tilde_channel(t, tol_peripheral=None, check=True):
    """Channel keeping only the peripheral spectral part, sum over |nu|=1 of nu r l^dagger."""
    if tol_peripheral is not None and tol_peripheral != t.tol_peripheral:
        t = _make_operator(t.matrix, t.dim_memory, tol_peripheral, t.kraus)
    lam, r, l = _peripheral_vectors(t)
    et = (r * lam) @ l.conj().T
    d = t.dim_memory
    if check:
        min_eig, tp = cptp_residuals(et, d)
        if min_eig < -1e-9 or tp > 1e-9:
            raise UnsupportedModelError(
                f"peripheral projection is not CPTP (Choi min {min_eig:.2e}, TP residual {tp:.2e})"
            )
    return _make_operator(et, d, t.tol_peripheral)


def detected_periods(t):
    """Orders of the peripheral eigenvalues as roots of unity (1 for the fixed points)."""
    out = set()
    for z in t.peripheral_values:
        ang = np.angle(z) / (2 * np.pi)
        for q in range(1, 65):
            if abs(ang * q - round(ang * q)) < 1e-6:
                out.add(q)
                break
    return sorted(out)


def idempotence_order(t_tilde):
    """Smallest m > 1 with tilde^m = tilde, searched up to lcm(periods) + 1."""
    periods = detected_periods(t_tilde)
    lcm = 1
    for q in periods:
        lcm = lcm * q // gcd(lcm, q)
    e = t_tilde.matrix
    p = e.copy()
    for m in range(2, lcm + 2):
        p = p @ e
        if np.abs(p - e).max() < 1e-9:
            return m
    return None


def fit_decay(ns, values, floor=1e-14):
    """Least-squares fit of log(values) ~ log c + n log nu.

    Returns (c, nu, nu_stderr). c is raised to the envelope max(values / nu^n)
    so that c nu^n bounds every fitted point.
    """
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = values > floor
    if mask.sum() < 2:
        return 0.0, 0.0, 0.0
    x, y = ns[mask], np.log(values[mask])
    if mask.sum() >= 3:
        coef, cov = np.polyfit(x, y, 1, cov=True)
        slope_err = float(np.sqrt(max(cov[0, 0], 0.0)))
    else:
        coef = np.polyfit(x, y, 1)
        slope_err = 0.0
    nu = float(np.exp(coef[0]))
    c = float(np.max(values[mask] / nu ** x))
    return c, nu, nu * slope_err


def channel_distance(t, n_range, tilde=None):
    tilde = tilde_channel(t) if tilde is None else tilde
    e, et = t.matrix, tilde.matrix
    ns = [int(n) for n in n_range]
    norms = []
    for n in ns:
        diff = np.linalg.matrix_power(e, n) - np.linalg.matrix_power(et, n)
        norms.append(float(np.linalg.norm(diff, 2)))
    c, nu, err = fit_decay(ns, norms)
    d = t.dim_memory
    return [ChannelDistanceReport(n, x, d * x, c, nu, err) for n, x in zip(ns, norms)]


def fit_bound_constants(t, n_range=range(1, 17)):
    """(c, nu) such that ||E^n - tilde^n|| <= c nu^n over n_range."""
    rep = channel_distance(t, n_range)
    return rep[0].fitted_c, rep[0].fitted_nu


def mixed_transfer_matrix(v_a, v_b, d_s):
    a = np.asarray(v_a, dtype=complex)
    b = np.asarray(v_b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionError(f"isometries differ in shape: {a.shape} vs {b.shape}")
    d = a.shape[1]
    if a.shape[0] != d_s * d:
        raise DimensionError(f"isometry shape {a.shape} inconsistent with d_s={d_s}")
    ka, kb = a.reshape(d_s, d, d), b.reshape(d_s, d, d)
    return sum(np.kron(x, y.conj()) for x, y in zip(ka, kb))


def mixed_transfer_peripheral(v_a, v_b, d_s):
    """Largest eigenvalue modulus of X -> tr_s(V_a X V_b^dagger)."""
    m = mixed_transfer_matrix(v_a, v_b, d_s)
    return {"max_abs_eigenvalue": float(np.abs(np.linalg.eigvals(m)).max())}
