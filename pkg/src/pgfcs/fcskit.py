"""Purely generated finitely correlated states (uniform MPS) given by a pair (V, sigma).

Basis conventions: the isometry V maps H_M to H_s (x) H_M with the memory
factor last, so ``V[s * d_M + m, j] = M^s[m, j]``. In a product of
isometries the factor generated first sits leftmost.
"""

import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from pgfcs import kernels
from pgfcs.channelkit import (
    TransferOperator,
    ValidationError,
    mixed_transfer_peripheral,
    transfer_from_isometry,
)
from pgfcs.densekit import DimensionError, herm, partial_trace, random_isometry

MAX_ROWS = 1 << 22


class ModelFormatError(ValueError):
    pass


class ResourceError(MemoryError):
    pass


class DecompositionError(RuntimeError):
    pass


class StructureError(RuntimeError):
    pass


class EquivalentComponentsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PgfcsModel:
    d_s: int
    d_M: int
    v: np.ndarray
    sigma: np.ndarray
    label: str = ""

    @cached_property
    def kraus(self):
        return np.asarray(self.v, dtype=complex).reshape(self.d_s, self.d_M, self.d_M)

    @cached_property
    def transfer(self) -> TransferOperator:
        return transfer_from_isometry(self.v, self.d_s, self.d_M)

    @cached_property
    def sigma_sqrt(self):
        w, u = np.linalg.eigh(herm(self.sigma))
        return (u * np.sqrt(np.clip(w, 0, None))) @ u.conj().T

    def transfer_power(self, n):
        return self.transfer.power(n)

    def check(self):
        rep = validate(self)
        if not rep.ok:
            raise ValidationError(rep.summary())
        return self


@dataclass(frozen=True)
class Tripartition:
    n_a: int
    n_b: int
    n_c: int

    def __post_init__(self):
        if min(self.n_a, self.n_b, self.n_c) < 1:
            raise ValueError(f"region sizes must be >= 1, got {self}")

    def feasible(self, d_s, d_M):
        return d_s**self.n_b >= d_M**2

    @property
    def total(self):
        return self.n_a + self.n_b + self.n_c


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)

    def add(self, name, passed, residual):
        self.checks[name] = (bool(passed), float(residual))

    @property
    def ok(self):
        return all(p for p, _ in self.checks.values())

    def summary(self):
        bad = [f"{k} (residual {r:.3e})" for k, (p, r) in self.checks.items() if not p]
        return "model invalid: " + ", ".join(bad) if bad else "model valid"


@dataclass(frozen=True)
class ErgodicComponent:
    """One irreducible block of a model, in the global memory basis and in local coordinates.

    ``basis`` is a d_M x r isometry onto the block; ``v_alpha`` and
    ``sigma_alpha`` are in the local coordinates of that basis and
    ``sigma_alpha`` has unit trace.
    """

    projector: np.ndarray
    weight: float
    v_alpha: np.ndarray
    sigma_alpha: np.ndarray
    period: int
    cyclic_projectors: tuple
    basis: np.ndarray
    d_s: int

    @property
    def rank(self):
        return self.basis.shape[1]

    def as_model(self, label=""):
        return PgfcsModel(self.d_s, self.rank, self.v_alpha, self.sigma_alpha, label)


def validate(model, tol=1e-10):
    rep = ValidationReport()
    v = np.asarray(model.v, dtype=complex)
    s = np.asarray(model.sigma, dtype=complex)
    shape_ok = v.shape == (model.d_s * model.d_M, model.d_M) and s.shape == (model.d_M, model.d_M)
    rep.add("shape", shape_ok, 0.0 if shape_ok else 1.0)
    if not shape_ok:
        return rep
    finite = bool(np.all(np.isfinite(v)) and np.all(np.isfinite(s)))
    rep.add("finite", finite, 0.0 if finite else np.inf)
    if not finite:
        return rep
    r_iso = np.abs(v.conj().T @ v - np.eye(model.d_M)).max()
    rep.add("isometry", r_iso <= tol, r_iso)
    r_herm = np.abs(s - s.conj().T).max()
    rep.add("sigma_hermitian", r_herm <= tol, r_herm)
    w = np.linalg.eigvalsh(herm(s))
    rep.add("sigma_psd", w.min() >= -tol, min(w.min(), 0.0))
    r_tr = abs(np.trace(s) - 1.0)
    rep.add("sigma_trace", r_tr <= tol, r_tr)
    rep.add("sigma_full_rank", w.min() > tol, w.min())
    fixed = kernels.conj_last(s, v.reshape(model.d_s, model.d_M, model.d_M), 1)
    r_fix = np.abs(fixed - s).max()
    rep.add("compatibility", r_fix <= tol, r_fix)
    return rep


def isometry_product(u, w, d_M, max_rows=MAX_ROWS):
    """UW = (1 (x) U) W: W generates the leftmost factors, U the following ones."""
    u = np.asarray(u, dtype=complex)
    w = np.asarray(w, dtype=complex)
    ku, kw = u.shape[0] // d_M, w.shape[0] // d_M
    if ku * kw * d_M > max_rows:
        raise ResourceError(f"isometry with {ku * kw * d_M} rows exceeds the cap {max_rows}")
    u3 = u.reshape(ku, d_M, d_M)
    w3 = w.reshape(kw, d_M, d_M)
    out = np.einsum("spm,amj->aspj", u3, w3, optimize=True)
    return out.reshape(kw * ku * d_M, d_M)


def isometry_power(model, n, max_rows=MAX_ROWS):
    if n < 0:
        raise ValueError("n must be non-negative")
    if model.d_s**n * model.d_M > max_rows:
        raise ResourceError(f"V_{n} needs {model.d_s**n * model.d_M} rows, cap is {max_rows}")
    out = np.eye(model.d_M, dtype=complex)
    for _ in range(n):
        out = isometry_product(model.v, out, model.d_M, max_rows)
    return out


def apply_transfer_last(x, e, k, d):
    """(id_k (x) E)(X) for X on C^k (x) C^d, E given as a d^2 x d^2 matrix."""
    t = np.asarray(x).reshape(k, d, k, d).transpose(0, 2, 1, 3).reshape(k * k, d * d)
    t = t @ np.asarray(e).T
    return t.reshape(k, k, d, d).transpose(0, 2, 1, 3).reshape(k * d, k * d)


def contract_chain(model, segments, x0=None, k0=1, trace_memory=True, max_dim=1 << 13):
    """Contract the chain left to right.

    ``segments`` is a list of (n_spins, kept). Kept spins are generated with
    Phi(X) = V X V^dagger, traced runs with E^n. The operator ``x0`` lives on
    C^k0 (x) H_M (sigma by default). Returns the operator on
    C^k0 (x) kept spins, with the memory traced out unless ``trace_memory``
    is false.
    """
    d_M, d_s = model.d_M, model.d_s
    x = np.asarray(model.sigma if x0 is None else x0, dtype=complex)
    k = k0
    iso = np.asarray(model.v, dtype=complex)[None]
    pending = 0
    for n, kept in segments:
        if not kept:
            pending += n
            continue
        if pending:
            x = apply_transfer_last(x, model.transfer_power(pending), k, d_M)
            pending = 0
        for _ in range(n):
            if k * d_s * d_M > max_dim:
                raise ResourceError(f"kept dimension {k * d_s * d_M} exceeds cap {max_dim}")
            x = kernels.conj_last(x, iso, k).reshape(k * d_s * d_M, k * d_s * d_M)
            k *= d_s
    if not trace_memory:
        if pending:
            x = apply_transfer_last(x, model.transfer_power(pending), k, d_M)
        return x
    return partial_trace(x, [k, d_M], [0])


def reduced_state(model, part, keep):
    """Marginal of rho_ABC on the regions named in ``keep`` (subset of 'ABC')."""
    keep = set(keep)
    if not keep <= {"A", "B", "C"}:
        raise ValueError(f"unknown regions in {keep}")
    segs = [(part.n_a, "A" in keep), (part.n_b, "B" in keep), (part.n_c, "C" in keep)]
    return contract_chain(model, segs)


def dense_state(model, n, max_rows=MAX_ROWS):
    """rho on n consecutive spins as Y Y^dagger with Y = (V_n sigma^1/2) reshaped.

    Returns Y of shape (d_s^n, d_M^2); columns are indexed by (memory, purifier).
    """
    w = isometry_power(model, n, max_rows).reshape(-1, model.d_M, model.d_M)
    y = w @ model.sigma_sqrt
    return y.reshape(w.shape[0], model.d_M * model.d_M)


# --- builtin models --------------------------------------------------------
# spin basis index 0, 1, 2 = |-1>, |0>, |1>; memory index 0, 1 = |->, |+>

_H = 1.0 / np.sqrt(2.0)


def _v1():
    m = np.zeros((3, 2, 2), dtype=complex)
    m[2, 0, 1] = _H  # |1> |-><+|
    m[1, 1, 1] = -_H  # -|0> |+><+|
    m[1, 0, 0] = _H  # |0> |-><-|
    m[0, 1, 0] = -_H  # -|-1> |+><-|
    return m


def _v2():
    # cyclic relabelling |-1> -> |0> -> |1> -> |-1> of V1
    return _v1()[[2, 0, 1]]


def _model_from_kraus(m, sigma, label):
    d_s, d_M = m.shape[0], m.shape[1]
    return PgfcsModel(d_s, d_M, m.reshape(d_s * d_M, d_M), np.asarray(sigma, dtype=complex), label)


def _block(m1, m2, anti):
    d_s, a = m1.shape[0], m1.shape[1]
    m = np.zeros((d_s, 2 * a, 2 * a), dtype=complex)
    if anti:
        m[:, :a, a:] = m1
        m[:, a:, :a] = m2
    else:
        m[:, :a, :a] = m1
        m[:, a:, a:] = m2
    return m


def builtin_model(name):
    if name == "aklt":
        return _model_from_kraus(_v1(), np.eye(2) / 2, "aklt")
    if name == "aklt-v2":
        return _model_from_kraus(_v2(), np.eye(2) / 2, "aklt-v2")
    if name == "two-component":
        return _model_from_kraus(_block(_v1(), _v2(), False), np.eye(4) / 4, "two-component")
    if name == "period2":
        return _model_from_kraus(_block(_v1(), _v2(), True), np.eye(4) / 4, "period2")
    if name == "product":
        phi = np.array([np.cos(np.pi / 8), np.sin(np.pi / 8)], dtype=complex)
        return PgfcsModel(2, 1, phi.reshape(2, 1), np.eye(1, dtype=complex), "product")
    raise KeyError(f"unknown builtin model {name!r}; choose from {', '.join(BUILTINS)}")


BUILTINS = ("aklt", "aklt-v2", "two-component", "period2", "product")


def random_model(d_s, d_M, rng, max_tries=20):
    """Random isometry with its (generically unique, full-rank) invariant state."""
    for _ in range(max_tries):
        v = random_isometry(d_s * d_M, d_M, rng)
        t = transfer_from_isometry(v, d_s, d_M)
        i = int(np.argmin(np.abs(t.spectrum.values - 1.0)))
        s = herm(t.spectrum.right[:, i].reshape(d_M, d_M))
        s = s / np.trace(s).real
        if np.linalg.eigvalsh(s).min() > 1e-6:
            return PgfcsModel(d_s, d_M, v, s, f"random-{d_s}-{d_M}")
    raise RuntimeError("could not draw a model with full-rank invariant state")


# --- MPS dictionary --------------------------------------------------------


def to_mps_tensor(model):
    return [m.copy() for m in model.kraus]


def from_mps_tensor(mats, sigma, label=""):
    m = np.asarray(mats, dtype=complex)
    d_s, d_M = m.shape[0], m.shape[1]
    return PgfcsModel(d_s, d_M, m.reshape(d_s * d_M, d_M), np.asarray(sigma, dtype=complex), label)


# --- model files -----------------------------------------------------------


def _encode(a):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(a)]


def model_to_dict(model):
    d = {"d_s": model.d_s, "d_M": model.d_M, "v": _encode(model.v), "sigma": _encode(model.sigma)}
    if model.label:
        d["label"] = model.label
    return d


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def _decode(data, name, rows, cols):
    if not isinstance(data, list):
        raise ModelFormatError(f"field '{name}': expected an array")
    # accept nested rows or a flat row-major list of pairs
    flat = data
    if data and isinstance(data[0], list) and data[0] and isinstance(data[0][0], list):
        if len(data) != rows:
            raise ModelFormatError(f"field '{name}': expected {rows} rows, got {len(data)}")
        flat = []
        for r, row in enumerate(data):
            if not isinstance(row, list) or len(row) != cols:
                raise ModelFormatError(f"field '{name}' row {r}: expected {cols} entries")
            flat.extend(row)
    if len(flat) != rows * cols:
        raise ModelFormatError(f"field '{name}': expected {rows * cols} entries, got {len(flat)}")
    out = np.empty(rows * cols, dtype=complex)
    for i, pair in enumerate(flat):
        ok = (
            isinstance(pair, (list, tuple))
            and len(pair) == 2
            and all(isinstance(z, (int, float)) and not isinstance(z, bool) for z in pair)
        )
        if not ok:
            raise ModelFormatError(
                f"field '{name}' index [{i // cols}][{i % cols}]: expected [re, im] pair, got {pair!r}"
            )
        out[i] = complex(pair[0], pair[1])
    return out.reshape(rows, cols)


def model_from_dict(d):
    if not isinstance(d, dict):
        raise ModelFormatError("model document must be an object")
    for key in ("d_s", "d_M", "v", "sigma"):
        if key not in d:
            raise ModelFormatError(f"missing field '{key}'")
    for key in ("d_s", "d_M"):
        if not isinstance(d[key], int) or isinstance(d[key], bool) or d[key] < 1:
            raise ModelFormatError(f"field '{key}': expected a positive integer, got {d[key]!r}")
    d_s, d_M = d["d_s"], d["d_M"]
    v = _decode(d["v"], "v", d_s * d_M, d_M)
    s = _decode(d["sigma"], "sigma", d_M, d_M)
    label = d.get("label", "")
    if not isinstance(label, str):
        raise ModelFormatError("field 'label': expected a string")
    return PgfcsModel(d_s, d_M, v, s, label)


def load_model(source, check=True):
    """Load from a JSON model file, or ``builtin:<name>``."""
    if isinstance(source, str) and source.startswith("builtin:"):
        return builtin_model(source.split(":", 1)[1])
    with open(source) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"not valid JSON: {exc}") from exc
    model = model_from_dict(doc)
    return model.check() if check else model


# --- ergodic structure -----------------------------------------------------


def _null_space(a, tol):
    u, s, vh = np.linalg.svd(a)
    scale = max(1.0, s.max(initial=0.0))
    rank = int(np.sum(s > tol * scale))
    return vh[rank:].conj().T


def _fixed_hermitian_basis(model, tol):
    """Hermitian basis of the adjoint fixed points that commute with sigma."""
    d = model.d_M
    e = model.transfer.matrix
    ns = _null_space(e.conj().T - np.eye(d * d), tol)
    herms = []
    for col in ns.T:
        x = col.reshape(d, d)
        herms.append(herm(x))
        herms.append(herm(-1j * x))
    # restrict to the centraliser of sigma: solve [sigma, sum c_k H_k] = 0 for real c
    s = model.sigma
    comm = np.array([(s @ h - h @ s).reshape(-1) for h in herms]).T
    real = np.vstack([comm.real, comm.imag])
    coef = _null_space(real, tol)
    return [sum(c * h for c, h in zip(col, herms)) for col in coef.T]


def _local_basis(p, r):
    """Orthonormal basis of range(p), taken from its heaviest columns for readability."""
    idx = np.sort(np.argsort(-np.real(np.diag(p)), kind="stable")[:r])
    q, rr = np.linalg.qr(p[:, idx])
    ph = np.diag(rr) / np.where(abs(np.diag(rr)) > 0, abs(np.diag(rr)), 1)
    q = q * ph
    if np.abs(q @ q.conj().T - p).max() > 1e-8:
        w, u = np.linalg.eigh(herm(p))
        q = u[:, w > 0.5]
    return q


def _restrict(model, b):
    ks = np.einsum("mi,smn,nj->sij", b.conj(), model.kraus, b)
    r = b.shape[1]
    return ks.reshape(model.d_s * r, r)


def ergodic_decompose(model, tol=1e-8, seed=0, warn_equivalent=True):
    basis = _fixed_hermitian_basis(model, tol)
    d = model.d_M
    if not basis:
        raise DecompositionError("no fixed points found for the adjoint channel")
    rng = np.random.default_rng(seed)
    h = sum(c * x for c, x in zip(rng.standard_normal(len(basis)), basis))
    w, u = np.linalg.eigh(herm(h))
    scale = max(1.0, abs(w).max())
    groups, start = [], 0
    for i in range(1, d + 1):
        if i == d or w[i] - w[i - 1] > 1e-6 * scale:
            groups.append(list(range(start, i)))
            start = i
    if len(groups) == 1:
        projs = [np.eye(d, dtype=complex)]
    else:
        projs = [u[:, g] @ u[:, g].conj().T for g in groups]
    # deterministic order: by the smallest basis index carried by the block
    projs.sort(key=lambda p: (int(np.argmax(np.real(np.diag(p)) > 1e-6)), -np.real(np.trace(p))))
    s = np.asarray(model.sigma, dtype=complex)
    block = sum(p @ s @ p for p in projs)
    if np.abs(block - s).max() > 1e-8:
        raise DecompositionError("sigma is not block diagonal for the fixed-point projectors")
    comps = []
    for p in projs:
        r = int(round(np.real(np.trace(p))))
        b = _local_basis(p, r)
        lam = float(np.real(np.trace(p @ s)))
        if lam <= tol:
            raise DecompositionError("ergodic component carries no weight")
        va = _restrict(model, b)
        sa = herm(b.conj().T @ s @ b) / lam
        comp = ErgodicComponent(p, lam, va, sa, 1, (p,), b, model.d_s)
        comps.append(_with_period(comp))
    if warn_equivalent:
        pairs = equivalent_pairs(comps)
        if pairs:
            warnings.warn(
                f"equivalent ergodic components {pairs}; use merge_equivalent to combine them",
                EquivalentComponentsWarning,
                stacklevel=2,
            )
    return comps


def _with_period(comp):
    p, projs = period_structure(comp)
    return ErgodicComponent(
        comp.projector, comp.weight, comp.v_alpha, comp.sigma_alpha, p, tuple(projs), comp.basis, comp.d_s
    )


def period_structure(component, tol=1e-7):
    """(p, [Pi_0, ..., Pi_{p-1}]) with projectors in the global memory basis."""
    b = component.basis
    r = b.shape[1]
    sub = transfer_from_isometry(component.v_alpha, component.d_s, r)
    per = sub.peripheral_values
    p = len(per)
    roots = np.exp(2j * np.pi * np.arange(p) / p)
    if any(np.abs(roots - z).min() > 1e-6 for z in per):
        raise StructureError(f"peripheral eigenvalues {np.round(per, 8)} are not the {p}-th roots of unity")
    if p == 1:
        return 1, [component.projector]
    omega = np.exp(2j * np.pi / p)
    adj = sub.matrix.conj().T
    wv, vv = np.linalg.eig(adj)
    i = int(np.argmin(np.abs(wv - omega)))
    y = vv[:, i].reshape(r, r)
    ev = np.linalg.eigvals(y)
    y = y / ev[0]
    # Pi_k = (1/p) sum_j omega^{-jk} y^j, with y having spectrum omega^k
    powers = [np.eye(r, dtype=complex)]
    for _ in range(p - 1):
        powers.append(powers[-1] @ y)
    local = [herm(sum(omega ** (-j * k) * powers[j] for j in range(p)) / p) for k in range(p)]
    e0 = int(np.argmax(np.real(np.diag(component.projector)) > 1e-6))
    glob = [b @ q @ b.conj().T for q in local]
    start = int(np.argmax([np.real(g[e0, e0]) for g in glob]))
    glob = glob[start:] + glob[:start]
    local = local[start:] + local[:start]
    sa = component.sigma_alpha
    kr = component.v_alpha.reshape(component.d_s, r, r)

    def push(x):
        return kernels.conj_last(x, kr, 1)

    def ok(order):
        return all(
            np.abs(push(order[k] @ sa @ order[k]) - order[(k + 1) % p] @ sa @ order[(k + 1) % p]).max() < 1e-8
            for k in range(p)
        )

    if not ok(local):
        local = [local[0]] + local[1:][::-1]
        glob = [glob[0]] + glob[1:][::-1]
        if not ok(local):
            raise StructureError("cyclic projectors are not permuted by the channel")
    for q in local:
        if abs(np.real(np.trace(q @ sa)) - 1.0 / p) > 1e-8:
            raise StructureError("cyclic projector weight differs from 1/p")
    return p, glob


def equivalence_check(a, b, tol=1e-7):
    if a.rank != b.rank or a.d_s != b.d_s:
        return False
    val = mixed_transfer_peripheral(a.v_alpha, b.v_alpha, a.d_s)["max_abs_eigenvalue"]
    return val >= 1.0 - tol


def equivalent_pairs(comps, tol=1e-7):
    return [(i, j) for i in range(len(comps)) for j in range(i + 1, len(comps)) if equivalent_safe(comps[i], comps[j], tol)]


def equivalent_safe(a, b, tol):
    try:
        return equivalence_check(a, b, tol)
    except DimensionError:
        return False


def merge_equivalent(model, tol=1e-7):
    """Model with each class of equivalent components replaced by one representative.

    Equivalent components generate the same spin-chain state, so their weights
    are pooled onto the first member of the class.
    """
    comps = ergodic_decompose(model, warn_equivalent=False)
    rep = list(range(len(comps)))
    for i, j in equivalent_pairs(comps, tol):
        rep[j] = rep[i] if rep[i] == i else rep[rep[i]]
    keep = sorted(set(rep))
    if len(keep) == len(comps):
        return model
    weights = {k: 0.0 for k in keep}
    for i, r in enumerate(rep):
        weights[r] += comps[i].weight
    d_s = model.d_s
    dims = [comps[k].rank for k in keep]
    d = sum(dims)
    kr = np.zeros((d_s, d, d), dtype=complex)
    sig = np.zeros((d, d), dtype=complex)
    off = 0
    for k, r in zip(keep, dims):
        kr[:, off:off + r, off:off + r] = comps[k].v_alpha.reshape(d_s, r, r)
        sig[off:off + r, off:off + r] = weights[k] * comps[k].sigma_alpha
        off += r
    return PgfcsModel(d_s, d, kr.reshape(d_s * d, d), sig, model.label + "-merged")


def block_residual(model, component, n_a=1):
    """max |V_A sigma V_A^dag - sum_k Pi_k V_A sigma V_A^dag Pi_k| for a period component."""
    x = contract_chain(model, [(n_a, True)], trace_memory=False)
    k = model.d_s**n_a
    out = np.zeros_like(x)
    for q in component.cyclic_projectors:
        big = np.kron(np.eye(k), q)
        out += big @ x @ big
    full = np.kron(np.eye(k), component.projector)
    return float(np.abs(full @ x @ full - out).max())
