"""Quantum Markov chain approximations built from tilde isometries on the buffer.

Every buffer quantity lives in a *frame*: the span of the generator vectors
``v_ij = <i|V_B|j>`` (computational memory indices) together with the first
d_M^2 computational basis vectors of H_B. A frame stores frame coordinates
for each generator. In dense mode the frame is H_B itself; in transfer mode
the coordinates come from the generators' Gram matrix, whose v-v block is a
reshuffle of E^|B| and whose cross block holds MPS amplitudes, so the buffer
is never materialized. Tilde isometries carry their xi vectors as generator
coefficients, which keeps small differences such as V_B - tilde V_B free of
cancellation.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from pgfcs.channelkit import fit_bound_constants
from pgfcs.densekit import herm
from pgfcs.fcskit import ergodic_decompose, isometry_power, isometry_product, _local_basis

DENSE_FRAME_CAP = 1 << 13
GRAM_FLOOR = 1e-12


class FeasibilityError(ValueError):
    pass


class CutoffError(RuntimeError):
    pass


@dataclass(frozen=True)
class BufferFrame:
    n_b: int
    d_s: int
    d_M: int
    mode: str
    coords: np.ndarray  # (r, N) frame coordinates of the generators
    gram: np.ndarray  # (N, N) generator Gram matrix

    @property
    def dim(self):
        return self.coords.shape[0]

    @property
    def n_v(self):
        return self.d_M * self.d_M

    @property
    def n_canonical(self):
        return self.coords.shape[1] - self.n_v

    @property
    def q_comp(self):
        """Gram of v_ij, indexed by (i, j) pairs in row-major order."""
        return self.gram[: self.n_v, : self.n_v]

    @property
    def vb(self):
        d = self.d_M
        return self.coords[:, : self.n_v].reshape(self.dim * d, d)

    def embed(self, coef):
        """Frame coordinates of generator combinations (columns of ``coef``)."""
        return self.coords @ coef


def _amplitude(kraus, digits):
    d = kraus.shape[1]
    m = np.eye(d, dtype=complex)
    for s in digits:
        m = kraus[s] @ m
    return m


def buffer_frame(model, n_b, mode="transfer", cap=DENSE_FRAME_CAP):
    d, d_s = model.d_M, model.d_s
    n_can = min(d * d, d_s**n_b) if n_b < 64 else d * d
    if mode == "dense":
        if d_s**n_b > cap:
            raise MemoryError(f"dense buffer frame of dimension {d_s**n_b} exceeds cap {cap}")
        vmat = isometry_power(model, n_b).reshape(d_s**n_b, d * d)
        can = np.eye(d_s**n_b, n_can, dtype=complex)
        coords = np.hstack([vmat, can])
        return BufferFrame(n_b, d_s, d, "dense", coords, coords.conj().T @ coords)
    if mode != "transfer":
        raise ValueError(f"unknown frame mode {mode!r}")
    en = model.transfer_power(n_b).reshape(d, d, d, d)
    # Q[(i'j'), (ij)] = E^n[(i, i'), (j, j')]
    q = en.transpose(1, 3, 0, 2).reshape(d * d, d * d)
    amps = np.empty((d * d, n_can), dtype=complex)
    for b in range(n_can):
        digits = np.base_repr(b, d_s).zfill(n_b)
        amps[:, b] = _amplitude(model.kraus, [int(ch, d_s) for ch in digits]).reshape(-1)
    g = np.block([[q, amps.conj()], [amps.T, np.eye(n_can)]])
    g = herm(g)
    w, u = np.linalg.eigh(g)
    keep = w > 1e-15 * w.max()
    coords = np.sqrt(w[keep])[:, None] * u[:, keep].conj().T
    return BufferFrame(n_b, d_s, d, "transfer", coords, g)


@dataclass(frozen=True)
class QmcLayout:
    """Index structure of the tilde isometry for a model and buffer length.

    ``memory_basis`` columns are the eigenvectors |i> of sigma inside each
    cyclic block; ``labels`` lists (alpha, k, i, j) with j in Pi_k and
    i in Pi_{k+|B|} of component alpha; ``weights`` are sqrt(p_alpha sigma_{alpha,i}).
    """

    memory_basis: np.ndarray
    labels: tuple
    weights: np.ndarray
    periods: tuple
    lambdas: tuple
    classes: tuple  # (alpha, k) for each memory basis index

    def block_keys(self):
        return sorted({(a, k) for a, k, _, _ in self.labels})

    def block_indices(self, key):
        return [t for t, (a, k, _, _) in enumerate(self.labels) if (a, k) == key]


def qmc_layout(model, n_b, comps=None):
    comps = ergodic_decompose(model) if comps is None else comps
    cols, classes, svals = [], [], []
    for a, c in enumerate(comps):
        for k, pk in enumerate(c.cyclic_projectors):
            r = int(round(np.real(np.trace(pk))))
            b = _local_basis(pk, r)
            w, u = np.linalg.eigh(herm(b.conj().T @ model.sigma @ b))
            for t in range(r):
                cols.append(b @ u[:, t])
                classes.append((a, k))
                svals.append(w[t] / c.weight)
    basis = np.array(cols).T
    if basis.shape != (model.d_M, model.d_M) or np.abs(basis.conj().T @ basis - np.eye(model.d_M)).max() > 1e-8:
        raise FeasibilityError("cyclic projectors do not resolve the memory space")
    labels, weights = [], []
    for a, c in enumerate(comps):
        p = c.period
        for k in range(p):
            js = [t for t, cl in enumerate(classes) if cl == (a, k)]
            is_ = [t for t, cl in enumerate(classes) if cl == (a, (k + n_b) % p)]
            if not js or not is_:
                raise FeasibilityError(f"missing cyclic projector for component {a}, class {k}")
            for i in is_:
                for j in js:
                    labels.append((a, k, i, j))
                    weights.append(np.sqrt(p * svals[i]))
    return QmcLayout(
        basis,
        tuple(labels),
        np.array(weights),
        tuple(c.period for c in comps),
        tuple(c.weight for c in comps),
        tuple(classes),
    )


@dataclass
class TildeIsometry:
    """Approximating isometry tilde V_B = sum w_ij |xi_ij> (x) |i><j| in frame coordinates."""

    matrix: np.ndarray
    xi_basis: np.ndarray
    labels: tuple
    variant: str
    partial_blocks: dict
    layout: QmcLayout
    frame: BufferFrame
    coeffs: np.ndarray  # generator coefficients of xi, (N, |O|)
    hs_error: float = float("nan")
    op_error: float = float("nan")
    notes: dict = field(default_factory=dict)

    def error_coeffs(self):
        """Generator coefficients of V_B - tilde V_B, shape (N, d_M, d_M)."""
        return _v_coeffs(self.frame) - _tilde_coeffs(self.layout, self.coeffs, self.frame)

    def difference(self):
        d = self.frame.d_M
        dc = self.error_coeffs().reshape(-1, d * d)
        return (self.frame.coords @ dc).reshape(-1, d)

    def errors(self):
        """(operator norm, Hilbert-Schmidt norm) of V_B - tilde V_B."""
        diff = self.difference()
        return float(np.linalg.norm(diff, 2)), float(np.linalg.norm(diff))


def _v_coeffs(frame):
    d = frame.d_M
    n = frame.coords.shape[1]
    out = np.zeros((n, d, d), dtype=complex)
    out[: d * d] = np.eye(d * d).reshape(d * d, d, d)
    return out


def _tilde_coeffs(layout, x, frame, subset=None):
    """Coefficients of sum_t w_t xi_t (x) |e_i><e_j| as (N, d_M, d_M)."""
    e = layout.memory_basis
    idx = range(len(layout.labels)) if subset is None else subset
    n = x.shape[0]
    d = frame.d_M
    out = np.zeros((n, d, d), dtype=complex)
    for t in idx:
        _, _, i, j = layout.labels[t]
        out += layout.weights[t] * x[:, t][:, None, None] * np.outer(e[:, i], e[:, j].conj())[None]
    return out


def _assemble(frame, layout, x, variant, notes=None):
    d = frame.d_M
    coords = frame.coords
    mat = (coords @ _tilde_coeffs(layout, x, frame).reshape(-1, d * d)).reshape(-1, d)
    blocks = {}
    for key in layout.block_keys():
        sub = layout.block_indices(key)
        blocks[key] = (coords @ _tilde_coeffs(layout, x, frame, sub).reshape(-1, d * d)).reshape(-1, d)
    t = TildeIsometry(mat, coords @ x, layout.labels, variant, blocks, layout, frame, x, notes=notes or {})
    t.op_error, t.hs_error = t.errors()
    return t


def _check_feasible(model, n_b):
    if model.d_s**n_b < model.d_M**2:
        raise FeasibilityError(
            f"buffer of {n_b} spins has dimension {model.d_s**n_b} < d_M^2 = {model.d_M**2}"
        )


def tilde_isometry_general(model, n_b, frame=None, xi=None, layout=None):
    """Canonical tilde isometry: xi_t is the t-th computational basis vector of H_B.

    ``xi`` optionally gives generator coefficients (N, |O|) of another
    orthonormal family in the frame.
    """
    _check_feasible(model, n_b)
    frame = buffer_frame(model, n_b) if frame is None else frame
    layout = qmc_layout(model, n_b) if layout is None else layout
    n_o = len(layout.labels)
    if xi is None:
        x = np.zeros((frame.coords.shape[1], n_o), dtype=complex)
        x[frame.n_v + np.arange(n_o), np.arange(n_o)] = 1.0
        variant = "canonical"
    else:
        x = np.asarray(xi, dtype=complex)
        variant = "custom"
    return _assemble(frame, layout, x, variant)


def tilde_isometry_period1(model, n_b, frame=None):
    """sum_ij sqrt(sigma_i) |xi_ij> (x) |i><j| for an ergodic model of period 1."""
    _check_feasible(model, n_b)
    comps = ergodic_decompose(model)
    if len(comps) != 1 or comps[0].period != 1:
        raise FeasibilityError("period-1 construction needs an ergodic model of period 1")
    frame = buffer_frame(model, n_b) if frame is None else frame
    d = model.d_M
    w, e = np.linalg.eigh(herm(model.sigma))
    coef = np.zeros((frame.coords.shape[1], d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            # xi_ij is canonical vector number i * d + j
            coef[frame.n_v + i * d + j] += np.sqrt(w[i]) * np.outer(e[:, i], e[:, j].conj())
    mat = (frame.coords @ coef.reshape(-1, d * d)).reshape(-1, d)
    return mat


def _rotation(layout):
    """Coefficients of v'_ij = <e_i|V_B|e_j> in terms of v_mn: kron(conj(E), E)."""
    e = layout.memory_basis
    return np.kron(e.conj(), e)


def _pair_index(layout):
    d = layout.memory_basis.shape[0]
    return np.array([i * d + j for _, _, i, j in layout.labels])


def _inv_sqrt(m):
    w, u = np.linalg.eigh(herm(m))
    return (u / np.sqrt(w)) @ u.conj().T


def polar_family(frame, x, tol=1e-10):
    """Closest orthonormal family (polar factor) to the vectors with generator coefficients x.

    Well-conditioned families use x (x^dag G x)^{-1/2}, which stays in
    coefficient space. Rank-deficient ones are completed through an SVD in
    frame coordinates. Returns (coefficients, completed flag).
    """
    g = herm(x.conj().T @ frame.gram @ x)
    w = np.linalg.eigvalsh(g)
    if w.min() > tol * max(w.max(), 1e-300):
        return x @ _inv_sqrt(g), False
    # complete inside the span of the generators so coefficients stay exact
    pu, ps, _ = np.linalg.svd(frame.coords, full_matrices=False)
    span = pu[:, ps > 1e-12 * ps.max()]
    u, _, vh = np.linalg.svd(span.conj().T @ frame.coords @ x, full_matrices=False)
    target = span @ (u @ vh)
    coef, *_ = np.linalg.lstsq(frame.coords, target, rcond=None)
    return coef, True


def tilde_isometry_gram(model, n_b, frame=None, layout=None, cutoff="predicted", fit=None, fallback=False):
    """xi_ij = sum (Q'^{-1/2})_{mn;ij} <m|V_B|n> with Q' the cut-off Gram matrix.

    ``cutoff`` is "predicted" (c d_M nu^|B| floored at 1e-12), "rank" (keep
    the |O| largest eigenvalues) or a number. With ``fallback`` a failed
    predicted cutoff retries with the rank policy instead of raising.
    """
    _check_feasible(model, n_b)
    frame = buffer_frame(model, n_b) if frame is None else frame
    layout = qmc_layout(model, n_b) if layout is None else layout
    c, nu = fit_bound_constants(model.transfer) if fit is None else fit
    d = model.d_M
    n_o = len(layout.labels)
    eps_pred = c * d * nu**n_b
    rot = _rotation(layout)
    qp = herm(rot.conj().T @ frame.q_comp @ rot)
    w, u = np.linalg.eigh(qp)
    notes = {"policy": cutoff}
    if cutoff == "rank":
        keep = np.zeros(w.size, dtype=bool)
        keep[np.argsort(w)[::-1][:n_o]] = True
        keep &= w > GRAM_FLOOR * w.max()
        eps = float(w[keep].min())
    else:
        eps = max(eps_pred, GRAM_FLOOR) if cutoff == "predicted" else float(cutoff)
        smin = min(np.linalg.eigvalsh(herm(model.sigma)))
        if cutoff == "predicted" and smin <= 2 * eps_pred and not fallback:
            warnings.warn(
                f"buffer {n_b} too short for the Gram cutoff: sigma_min {smin:.3e} <= 2 c d_M nu^|B| = {2 * eps_pred:.3e}",
                stacklevel=2,
            )
        keep = w > eps
        if keep.sum() != n_o:
            if fallback:
                return tilde_isometry_gram(model, n_b, frame, layout, "rank", (c, nu))
            raise CutoffError(
                f"Gram cutoff {eps:.3e} keeps {int(keep.sum())} eigenvalues, expected |O| = {n_o}; "
                f"spectrum {np.array2string(np.sort(w)[::-1], precision=3)}"
            )
    notes["cutoff"] = eps
    qinv = (u[:, keep] / np.sqrt(w[keep])) @ u[:, keep].conj().T
    x = np.zeros((frame.coords.shape[1], n_o), dtype=complex)
    x[: frame.n_v] = rot @ qinv[:, _pair_index(layout)]
    g = herm(x.conj().T @ frame.gram @ x)
    resid = float(np.abs(g - np.eye(n_o)).max())
    notes["orthonormality_residual"] = resid
    notes["completed"] = False
    if resid > 1e-12:
        # symmetric re-orthonormalization of the kept family
        x, notes["completed"] = polar_family(frame, x)
    return _assemble(frame, layout, x, "gram", notes)


def align_isometry(tilde):
    """Frobenius-optimal xi family: argmin over unitaries U_B of ||V_B - U_B tilde V_B||_HS.

    With A the generator matrix of V_B and C the label-to-memory coefficients
    of tilde V_B, the optimum replaces xi by the polar factor of A C^dagger,
    which lies in the span of the v_ij when that family has full rank.
    """
    frame, layout = tilde.frame, tilde.layout
    rot = _rotation(layout)
    x = np.zeros_like(tilde.coeffs)
    x[: frame.n_v] = rot[:, _pair_index(layout)] * layout.weights[None, :]
    x, completed = polar_family(frame, x)
    notes = {"hs_before": tilde.hs_error, "op_before": tilde.op_error, "completed": completed}
    return _assemble(frame, layout, x, "aligned", notes)


def make_tilde(model, n_b, variant, frame=None, layout=None, fit=None):
    frame = buffer_frame(model, n_b) if frame is None else frame
    layout = qmc_layout(model, n_b) if layout is None else layout
    if variant == "canonical":
        return tilde_isometry_general(model, n_b, frame, layout=layout)
    if variant == "gram":
        return tilde_isometry_gram(model, n_b, frame, layout, fit=fit, fallback=True)
    if variant == "aligned":
        return align_isometry(tilde_isometry_general(model, n_b, frame, layout=layout))
    raise ValueError(f"unknown variant {variant!r}")


# --- QMC states ----------------------------------------------------------


@dataclass(frozen=True)
class BoundEstimate:
    c: float
    nu: float
    q: float
    K: float
    K_tilde: float
    predicted_trace_error: float
    predicted_recovery_error: float
    predicted_qcmi: float

    @property
    def meaningful(self):
        return self.predicted_recovery_error <= 2.0


def bound_estimate(model, n_a, n_b, fit=None):
    c, nu = fit_bound_constants(model.transfer) if fit is None else fit
    d = model.d_M
    if nu <= 0.0 or c <= 0.0:
        return BoundEstimate(c, nu, float("inf"), 0.0, 0.0, 0.0, 0.0, 0.0)
    q = 0.5 * np.log(1.0 / nu)
    root = np.sqrt(d * c)
    k = 4 * root
    decay = np.exp(-q * n_b)
    arg = 2 * root * nu ** (n_b / 2)
    k_t = root * (2 * n_a * np.log(model.d_s) + 2 - 2 * np.log(arg))
    return BoundEstimate(c, nu, q, k, k_t, 0.5 * k * decay, k * decay, k_t * decay)


def purified_factor(model, w):
    """Factor Y with tr_M(W sigma W^dagger) = Y Y^dagger, for W of shape (D d_M, d_M)."""
    d = model.d_M
    w3 = np.asarray(w).reshape(-1, d, d)
    return (w3 @ model.sigma_sqrt).reshape(w3.shape[0], d * d)


def chain_factor(model, isos):
    """Factor of tr_M(W sigma W^dagger) for W the product of ``isos`` in generation order."""
    w = isos[0]
    for u in isos[1:]:
        w = isometry_product(u, w, model.d_M)
    return purified_factor(model, w)


@dataclass
class QmcApproximation:
    """rho and tilde rho on A (x) frame(B) (x) C, both as factors Y with rho = Y Y^dagger."""

    tilde_v: object
    rho_factor: np.ndarray
    tilde_factor: np.ndarray
    dims: tuple
    iso_error: float
    trace_error: float
    bound: BoundEstimate
    tilde_qcmi: float
    extra: dict = field(default_factory=dict)

    @property
    def tilde_rho(self):
        return self.tilde_factor @ self.tilde_factor.conj().T

    @property
    def rho(self):
        return self.rho_factor @ self.rho_factor.conj().T


def trace_norm_factors(y_plus, y_minus):
    """||Y+ Y+^dag - Y- Y-^dag||_1 via a thin QR of [Y+, Y-]."""
    z = np.hstack([y_plus, y_minus])
    q, r = np.linalg.qr(z)
    k = y_plus.shape[1]
    j = np.concatenate([np.ones(k), -np.ones(y_minus.shape[1])])
    m = (r * j) @ r.conj().T
    return float(np.abs(np.linalg.eigvalsh(herm(m))).sum())


def pure_entropy(y, dims, region):
    """Entropy of the marginal on ``region`` of the pure state Y (factor axes + purifier)."""
    from pgfcs.infokit import entropy_of_factor

    t = np.asarray(y).reshape(list(dims) + [-1])
    n = len(dims)
    rest = [i for i in range(n + 1) if i not in region]
    d_r = int(np.prod([dims[i] for i in region])) if region else 1
    m = t.transpose(list(region) + rest).reshape(d_r, -1)
    return entropy_of_factor(m)


def qcmi_of_factor(y, dims, groups=((0,), (1,), (2,))):
    """I(A:C|B) of Y Y^dagger with regions given as groups of factor axes."""
    a, b, c = (tuple(g) for g in groups)

    def s(reg):
        return pure_entropy(y, dims, sorted(reg))

    return s(a + b) + s(b + c) - s(a + b + c) - s(b)


def build_qmc(model, part, tilde, fit=None):
    frame = tilde.frame
    if frame.n_b != part.n_b:
        raise ValueError("tilde isometry was built for a different buffer length")
    va = isometry_power(model, part.n_a)
    vc = isometry_power(model, part.n_c)
    y = chain_factor(model, [va, frame.vb, vc])
    yt = chain_factor(model, [va, tilde.matrix, vc])
    dims = (model.d_s**part.n_a, frame.dim, model.d_s**part.n_c)
    op_err, _ = tilde.errors()
    tr_err = trace_norm_factors(y, yt)
    return QmcApproximation(
        tilde,
        y,
        yt,
        dims,
        op_err,
        tr_err,
        bound_estimate(model, part.n_a, part.n_b, fit),
        qcmi_of_factor(yt, dims),
    )


def build_qmc_disconnected(model, parts, tildes, fit=None):
    """Geometry A1 B1 C B2 A2 with both buffers replaced.

    The returned factors are regrouped as (A1 A2, B1 B2, C).
    """
    a1, b1, c, b2, a2 = parts
    t1, t2 = tildes
    if t1.frame.n_b != b1 or t2.frame.n_b != b2:
        raise ValueError("tilde isometries do not match the buffer lengths")
    va1, vc, va2 = (isometry_power(model, n) for n in (a1, c, a2))
    y = chain_factor(model, [va1, t1.frame.vb, vc, t2.frame.vb, va2])
    yt = chain_factor(model, [va1, t1.matrix, vc, t2.matrix, va2])
    ds = model.d_s
    raw = (ds**a1, t1.frame.dim, ds**c, t2.frame.dim, ds**a2)
    order = (0, 4, 1, 3, 2)

    def regroup(f):
        t = f.reshape(list(raw) + [-1]).transpose(list(order) + [5])
        return t.reshape(-1, f.shape[1])

    y, yt = regroup(y), regroup(yt)
    dims = (raw[0] * raw[4], raw[1] * raw[3], raw[2])
    e1, e2 = t1.errors()[0], t2.errors()[0]
    tr_err = trace_norm_factors(y, yt)
    bnd = bound_estimate(model, a1 + a2, min(b1, b2), fit)
    out = QmcApproximation(
        tildes, y, yt, dims, e1 + e2, tr_err, bnd, qcmi_of_factor(yt, dims),
        extra={"iso_errors": (e1, e2), "raw_dims": raw, "predicted_recovery_error": 2 * bnd.predicted_recovery_error},
    )
    return out
