"""Recovery channels B -> BC: the Petz map and the structural map of a Markov chain.

States are handled as factors Y with rho = Y Y^dagger on A (x) B (x) C, where
B is a buffer frame (a subspace of H_B that contains every support in play).
Both channels act on supp(rho_B) as specified and send the rest of the frame
to itself tensored with a fixed state tau_C; coherences between the two
pieces are pinched away, so the maps stay completely positive and trace
preserving on the whole frame. ``apply_dense`` gives the same linear map on
plain matrices for Choi checks.
"""

from dataclasses import dataclass, field

import numpy as np

from pgfcs.densekit import DimensionError, eigh_psd, herm, matrix_sqrt_psd
from pgfcs.markovkit import trace_norm_factors

PINV_CUTOFF = 1e-12


class RecoveryError(ValueError):
    pass


def marginal_ab(y, dims):
    """Factor of tr_C(Y Y^dagger) for Y on (A, B, C)."""
    da, db, dc = dims
    return np.asarray(y).reshape(da * db, dc * np.shape(y)[1])


def _marginal(y, dims, keep):
    """Matrix of the marginal of Y Y^dagger on the axes ``keep`` (sorted)."""
    t = np.asarray(y).reshape(list(dims) + [-1])
    n = len(dims)
    rest = [i for i in range(n + 1) if i not in keep]
    d = int(np.prod([dims[i] for i in keep]))
    m = t.transpose(list(keep) + rest).reshape(d, -1)
    return herm(m @ m.conj().T)


def _factor(rho, cutoff=1e-14):
    w, u = eigh_psd(rho)
    keep = w > cutoff * max(w.max(initial=0.0), 1e-300)
    return u[:, keep] * np.sqrt(w[keep])


def _support(rho_b, cutoff):
    w, u = eigh_psd(rho_b)
    keep = w > cutoff * w.max()
    return w, u, keep


@dataclass
class RecoveryChannel:
    """Channel from B to BC built from the marginals of a tripartite state.

    ``kind`` is "petz" or "structural". ``tau_c`` is the state attached to
    the part of B outside supp(rho_B).
    """

    kind: str
    d_b: int
    d_c: int
    rho_b: np.ndarray
    rho_bc: np.ndarray | None
    tau_c: np.ndarray
    support: np.ndarray  # (d_b, r) orthonormal basis of supp(rho_B)
    cutoff: float = PINV_CUTOFF
    kraus_op: np.ndarray | None = field(default=None, repr=False)
    blocks: list = field(default_factory=list, repr=False)  # (J_k, lambda_k, factor of rho_{b^r C}, n_l, n_r)

    @property
    def complement(self):
        """Projector onto the frame outside supp(rho_B)."""
        return np.eye(self.d_b) - self.support @ self.support.conj().T

    @property
    def lambdas(self):
        return [b[1] for b in self.blocks]

    # factor form: R(Y Y^dag) = Z Z^dag
    def apply_factor(self, y, d_a):
        y = np.asarray(y, dtype=complex)
        if y.shape[0] != d_a * self.d_b:
            raise DimensionError(f"factor has {y.shape[0]} rows, expected {d_a} x {self.d_b}")
        k = y.shape[1]
        t = y.reshape(d_a, self.d_b, k)
        if self.kind == "petz":
            # (1_A (x) K) (Y (x) 1_C) with K = rho_BC^1/2 (rho_B^-1/2 (x) 1_C)
            kk = self.kraus_op.reshape(self.d_b, self.d_c, self.d_b, self.d_c)
            z = np.einsum("bcBC,aBk->abckC", kk, t).reshape(d_a * self.d_b * self.d_c, k * self.d_c)
            parts = [z]
        else:
            parts = []
            for jk, _, f, nl, nr in self.blocks:
                # J_k maps the frame onto b^l (x) b^r; trace b^r, attach rho_{b^r C}, map back
                u = np.einsum("xb,abk->axk", jk, t).reshape(d_a, nl, nr * k)
                fr = f.reshape(nr, self.d_c, -1)
                z = np.einsum("alm,rcn->alrcmn", u, fr).reshape(d_a, nl * nr, self.d_c, -1)
                z = np.einsum("xb,axcm->abcm", jk.conj(), z)
                parts.append(z.reshape(d_a * self.d_b * self.d_c, -1))
        comp = self.complement
        if np.abs(comp).max() > 1e-14:
            ft = _factor(self.tau_c)
            w = np.einsum("Bb,abk->aBk", comp, t)
            z = np.einsum("aBk,cm->aBckm", w, ft).reshape(d_a * self.d_b * self.d_c, -1)
            parts.append(z)
        return np.hstack(parts)

    # dense form on arbitrary operators of A (x) B
    def apply_dense(self, x, d_a):
        x = np.asarray(x, dtype=complex)
        db, dc = self.d_b, self.d_c
        if x.shape != (d_a * db, d_a * db):
            raise DimensionError(f"operator of shape {x.shape} does not act on {d_a} x {db}")
        t = x.reshape(d_a, db, d_a, db)
        out = np.zeros((d_a, db, dc, d_a, db, dc), dtype=complex)
        if self.kind == "petz":
            kk = self.kraus_op.reshape(db, dc, db, dc)
            out += np.einsum("bcBC,aBeD,dfDC->abcedf", kk, t, kk.conj(), optimize=True)
        else:
            for jk, _, f, nl, nr in self.blocks:
                rho_rc = f @ f.conj().T
                j4 = jk.reshape(nl, nr, db)
                # tr_{b^r}(J X J^dag)
                red = np.einsum("lrB,aBeD,mrD->alem", j4, t, j4.conj(), optimize=True)
                r4 = rho_rc.reshape(nr, dc, nr, dc)
                out += np.einsum("lrB,alem,rcsd,msD->aBceDd", j4.conj(), red, r4, j4, optimize=True)
        comp = self.complement
        if np.abs(comp).max() > 1e-14:
            w = np.einsum("Bb,abeD,dD->aBed", comp, t, comp.conj(), optimize=True)
            out += np.einsum("aBed,cf->aBcedf", w, self.tau_c)
        n = d_a * db * dc
        return out.reshape(n, n)

    def choi(self):
        """Choi matrix of the channel B -> BC, sum_ij |i><j| (x) R(|i><j|)."""
        db = self.d_b
        # the reference copy plays the role of A
        omega = np.zeros((db, db, db, db), dtype=complex)
        for i in range(db):
            for j in range(db):
                omega[i, i, j, j] = 1.0
        return self.apply_dense(omega.reshape(db * db, db * db), db)

    def cptp_residuals(self):
        """(min Choi eigenvalue, trace-preservation residual)."""
        c = self.choi()
        min_eig = float(np.linalg.eigvalsh(herm(c)).min())
        db = self.d_b
        t = c.reshape(db, db * self.d_c, db, db * self.d_c)
        tp = float(np.abs(np.einsum("ixjx->ij", t) - np.eye(db)).max())
        return min_eig, tp


def _tau(rho_c, tau_c, d_c):
    if tau_c is None:
        return rho_c
    if isinstance(tau_c, str) and tau_c == "maximally_mixed":
        return np.eye(d_c) / d_c
    tau = np.asarray(tau_c, dtype=complex)
    if tau.shape != (d_c, d_c):
        raise DimensionError(f"tau_C has shape {tau.shape}, expected {(d_c, d_c)}")
    return tau


def petz_channel(y_ref, dims, cutoff=PINV_CUTOFF, tau_c=None):
    """Petz map of the state Y_ref Y_ref^dagger on (A, B, C).

    ``tau_c`` defaults to the reference state's own C marginal.
    """
    _, db, dc = dims
    rho_b = _marginal(y_ref, dims, [1])
    rho_bc = _marginal(y_ref, dims, [1, 2])
    rho_c = _marginal(y_ref, dims, [2])
    w, u, keep = _support(rho_b, cutoff)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    b_inv = (u * inv) @ u.conj().T
    kraus = matrix_sqrt_psd(rho_bc) @ np.kron(b_inv, np.eye(dc))
    return RecoveryChannel("petz", db, dc, rho_b, rho_bc, _tau(rho_c, tau_c, dc), u[:, keep], cutoff, kraus)


def structural_channel(tilde, y_ref, dims, cutoff=PINV_CUTOFF, tau_c=None):
    """Structural recovery from the xi-label isomorphism of a tilde isometry.

    For block k the isomorphism sends xi_ij to |j> (x) |i> on b^l (x) b^r;
    rho_{b^r C} is read off the reference state's BC marginal.
    """
    _, db, dc = dims
    layout = tilde.layout
    xi = tilde.xi_basis
    if xi.shape[0] != db:
        raise RecoveryError(f"xi vectors live in dimension {xi.shape[0]}, state buffer has {db}")
    rho_b = _marginal(y_ref, dims, [1])
    rho_bc = _marginal(y_ref, dims, [1, 2])
    rho_c = _marginal(y_ref, dims, [2])
    blocks = []
    total = 0.0
    for key in layout.block_keys():
        idx = layout.block_indices(key)
        is_ = sorted({layout.labels[t][2] for t in idx})
        js = sorted({layout.labels[t][3] for t in idx})
        jk = np.zeros((len(js) * len(is_), db), dtype=complex)
        for t in idx:
            _, _, i, j = layout.labels[t]
            jk[js.index(j) * len(is_) + is_.index(i)] = xi[:, t].conj()
        big = np.kron(jk, np.eye(dc))
        m = (big @ rho_bc @ big.conj().T).reshape(len(js), len(is_) * dc, len(js), len(is_) * dc)
        red = herm(np.einsum("lxly->xy", m))
        lam = float(np.trace(red).real)
        if lam <= 0.0:
            raise RecoveryError(f"block {key} carries no weight")
        total += lam
        blocks.append((jk, lam, _factor(red / lam), len(js), len(is_)))
    if abs(total - 1.0) > 1e-8:
        raise RecoveryError(f"block weights sum to {total:.12f}; the reference state is not supported on the xi span")
    sup, _ = np.linalg.qr(xi)
    return RecoveryChannel(
        "structural", db, dc, rho_b, None, _tau(rho_c, tau_c, dc), sup, cutoff, None, blocks
    )


def petz_apply(rc, x_ab, d_a):
    if rc.kind != "petz":
        raise RecoveryError("channel is not a Petz map")
    return rc.apply_dense(x_ab, d_a)


def structural_apply(rc, x_ab, d_a):
    if rc.kind != "structural":
        raise RecoveryError("channel is not a structural map")
    return rc.apply_dense(x_ab, d_a)


def recovery_error(rho_abc, recovered):
    """||rho_ABC - recovered||_1 without the 1/2 factor (ranges up to 2)."""
    rho_abc = np.asarray(rho_abc)
    recovered = np.asarray(recovered)
    if rho_abc.shape != recovered.shape:
        raise DimensionError(f"shape mismatch {rho_abc.shape} vs {recovered.shape}")
    return float(np.abs(np.linalg.eigvalsh(herm(rho_abc - recovered))).sum())


def recovery_error_factor(rc, y, dims):
    """||rho - R(rho_AB)||_1 for rho = Y Y^dagger, all in factor form."""
    d_a = dims[0]
    z = rc.apply_factor(marginal_ab(y, dims), d_a)
    return trace_norm_factors(y, z)


def recovery_errors(qmc, kinds=("petz", "structural"), tau_c=None):
    """Recovery errors of the true state for channels built from the QMC's tilde state.

    Also returns the exactness residuals on the tilde state itself.
    """
    out = {}
    for kind in kinds:
        if kind == "petz":
            rc = petz_channel(qmc.tilde_factor, qmc.dims, tau_c=tau_c)
        else:
            rc = structural_channel(qmc.tilde_v, qmc.tilde_factor, qmc.dims, tau_c=tau_c)
        out[kind] = recovery_error_factor(rc, qmc.rho_factor, qmc.dims)
        out[kind + "_exact"] = recovery_error_factor(rc, qmc.tilde_factor, qmc.dims)
    return out
