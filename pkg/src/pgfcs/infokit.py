"""Entropies, conditional mutual information and the Alicki-Fannes type bound.

All logarithms are natural. Two engines compute the chain entropies:

* ``dense`` materializes rho_ABC and takes partial traces (oracle);
* ``transfer`` purifies sigma with a reference R and evaluates every entropy
  on the complementary region of the pure extension, generating kept spins
  with Phi and skipping traced runs with powers of the transfer matrix, so
  the buffer length never enters the matrix sizes.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from pgfcs import kernels
from pgfcs.densekit import herm, partial_trace
from pgfcs.fcskit import Tripartition, contract_chain, dense_state, reduced_state

DENSE_CAP = 1 << 12


class NotAStateError(ValueError):
    pass


class AFBound(NamedTuple):
    full: float
    simplified: float


@dataclass
class InfoReport:
    part: Tripartition
    S_ABC: float
    S_AB: float
    S_BC: float
    S_B: float
    S_A: float
    S_C: float
    S_AC: float
    engine: str = "transfer"
    recovery_errors: dict = field(default_factory=dict)
    af_bound: float = float("nan")
    lower_bound_note: float = float("nan")

    @property
    def qcmi(self):
        return self.S_AB + self.S_BC - self.S_ABC - self.S_B

    @property
    def qmi(self):
        return self.S_A + self.S_C - self.S_AC


def entropy_from_eigenvalues(w, tol=1e-9):
    w = np.asarray(w, dtype=float)
    if w.size and w.min() < -tol:
        raise NotAStateError(f"negative eigenvalue {w.min():.3e} (below -{tol:g})")
    return -kernels.xlogx_sum(np.clip(w, 0.0, None))


def von_neumann(rho, tol=1e-8):
    rho = np.asarray(rho)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise NotAStateError(f"trace {tr:.12f} differs from 1")
    return entropy_from_eigenvalues(np.linalg.eigvalsh(herm(rho)))


def entropy_of_factor(y):
    """Entropy of Y Y^dagger, using whichever Gram matrix is smaller."""
    y = np.asarray(y)
    g = y.conj().T @ y if y.shape[0] >= y.shape[1] else y @ y.conj().T
    return entropy_from_eigenvalues(np.linalg.eigvalsh(herm(g)))


def binary_entropy(p):
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log(p) - (1 - p) * np.log(1 - p))


def af_bound(epsilon, n_a, d_s):
    """Upper bounds on I(A:C|B) from a recovery error epsilon in [0, 2].

    ``full`` is eps/2 |A| ln d_s + (1 + eps/2) h(eps / (2 + eps)),
    ``simplified`` is eps (|A| ln d_s / 2 + 1 - ln(eps / 2) / 2).
    """
    eps = float(epsilon)
    if not 0.0 <= eps <= 2.0 + 1e-12:
        raise ValueError(f"epsilon {eps} outside [0, 2]")
    eps = min(eps, 2.0)
    if eps == 0.0:
        return AFBound(0.0, 0.0)
    la = n_a * np.log(d_s)
    full = 0.5 * eps * la + (1 + 0.5 * eps) * binary_entropy(eps / (2 + eps))
    simple = eps * (0.5 * la + 1 - 0.5 * np.log(eps / 2))
    return AFBound(float(full), float(simple))


def universal_error_ceiling(qcmi_value):
    """Largest recovery error compatible with the universal-recovery lower bound.

    From (1 / (4 ln 2)) eps^2 <= I(A:C|B); informational only.
    """
    return float(np.sqrt(4 * np.log(2) * max(qcmi_value, 0.0)))


def relative_entropy(rho, sigma, cutoff=1e-12):
    """D(rho || sigma) = tr rho (ln rho - ln sigma); +inf when supp rho is not inside supp sigma."""
    wr, ur = np.linalg.eigh(herm(np.asarray(rho)))
    ws, us = np.linalg.eigh(herm(np.asarray(sigma)))
    wr = np.clip(wr, 0.0, None)
    thr = cutoff * max(ws.max(), 0.0)
    keep = ws > thr
    # weight of rho outside supp(sigma)
    overlap = np.abs(us.conj().T @ ur) ** 2
    if np.sum(overlap[~keep] @ wr) > 1e-10:
        return float("inf")
    log_s = np.zeros_like(ws)
    log_s[keep] = np.log(ws[keep])
    cross = float(np.sum((overlap.T @ log_s) * wr))
    return float(kernels.xlogx_sum(wr) - cross)


# --- engines -------------------------------------------------------------


def purified_memory(model):
    """|psi> on R (x) M with tr_R |psi><psi| = sigma."""
    psi = model.sigma_sqrt.T.reshape(-1)
    return np.outer(psi, psi.conj())


def transfer_entropies(model, part):
    a, b, c = part.n_a, part.n_b, part.n_c
    x0 = purified_memory(model)
    d = model.d_M

    def comp(segments):
        x = contract_chain(model, segments, x0=x0, k0=d, trace_memory=False)
        return von_neumann(x)

    s_abc = comp([(a + b + c, False)])
    s_ab = comp([(a + b, False), (c, True)])
    s_bc = comp([(a, True), (b + c, False)])
    s_b = comp([(a, True), (b, False), (c, True)])
    s_a = von_neumann(reduced_state(model, part, "A"))
    s_c = von_neumann(reduced_state(model, part, "C"))
    s_ac = von_neumann(reduced_state(model, part, "AC"))
    return dict(S_ABC=s_abc, S_AB=s_ab, S_BC=s_bc, S_B=s_b, S_A=s_a, S_C=s_c, S_AC=s_ac)


def dense_entropies(model, part, cap=DENSE_CAP):
    n = part.total
    dim = model.d_s**n
    if dim > cap:
        raise MemoryError(f"dense engine needs dimension {dim} > cap {cap}")
    y = dense_state(model, n)
    rho = y @ y.conj().T
    dims = [model.d_s**part.n_a, model.d_s**part.n_b, model.d_s**part.n_c]
    return state_entropies(rho, dims)


def state_entropies(rho, dims):
    """Entropies of every region of a tripartite state rho on A (x) B (x) C."""

    def s(keep):
        return von_neumann(partial_trace(rho, dims, keep))

    return dict(
        S_ABC=von_neumann(rho),
        S_AB=s([0, 1]),
        S_BC=s([1, 2]),
        S_B=s([1]),
        S_A=s([0]),
        S_C=s([2]),
        S_AC=s([0, 2]),
    )


def entropies(model, part, engine="transfer"):
    if engine == "transfer":
        return transfer_entropies(model, part)
    if engine == "dense":
        return dense_entropies(model, part)
    raise ValueError(f"unknown engine {engine!r}")


def qcmi(model, part, engine="transfer"):
    return InfoReport(part=part, engine=engine, **entropies(model, part, engine))


def qmi(model, part, engine="transfer"):
    if engine == "transfer":
        s_a = von_neumann(reduced_state(model, part, "A"))
        s_c = von_neumann(reduced_state(model, part, "C"))
        s_ac = von_neumann(reduced_state(model, part, "AC"))
        return s_a + s_c - s_ac
    return qcmi(model, part, engine).qmi


def qcmi_of_state(rho, dims):
    e = state_entropies(rho, dims)
    return e["S_AB"] + e["S_BC"] - e["S_ABC"] - e["S_B"]


def qmi_closed_form():
    """Limit of I(A:C) for the two-component and period-2 builtins."""
    return 17 * np.log(2) / 16 - 9 * np.log(3) / 8 + 5 * np.log(5) / 16
