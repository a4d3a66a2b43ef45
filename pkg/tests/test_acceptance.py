"""Acceptance criteria, one test each, with tolerances and runtime budgets.

Each test records a PASS/FAIL line; tests/conftest.py prints them at the end
of the run. ``python3 tests/test_acceptance.py`` runs them without pytest.
"""

import functools
import time

import numpy as np
import pytest

from pgfcs.channelkit import channel_distance, cptp_residuals, tilde_channel
from pgfcs.fcskit import BUILTINS, Tripartition, builtin_model, ergodic_decompose, random_model
from pgfcs.infokit import entropies, qcmi, qmi_closed_form
from pgfcs.markovkit import buffer_frame, build_qmc, build_qmc_disconnected, make_tilde
from pgfcs.recoverkit import recovery_errors
from pgfcs.sweep import VARIANTS, slope, sweep_row

QMI_PLATEAU = 0.0034794
RESULTS = {}


def criterion(num, title, budget):
    """Time the wrapped test, enforce its budget and record the outcome."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            ok, detail = False, ""
            try:
                detail = fn(*args, **kwargs) or ""
                elapsed = time.perf_counter() - t0
                assert elapsed < budget, f"took {elapsed:.2f} s, budget {budget} s"
                ok = True
            except AssertionError as exc:
                detail = str(exc).splitlines()[0] if str(exc) else "assertion failed"
                raise
            finally:
                elapsed = time.perf_counter() - t0
                RESULTS[num] = (ok, f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title} ({elapsed:.2f} s) {detail}")

        return run

    return wrap


# rows shared by criteria 4, 5 and 10


@functools.lru_cache(maxsize=None)
def bound_chain_rows():
    rows = []
    for name in ("aklt", "two-component"):
        m = builtin_model(name)
        for n_b in range(2, 6):
            rows.append((name, sweep_row(m, 1, n_b, 1, "dense", VARIANTS)))
    return rows


@functools.lru_cache(maxsize=None)
def aklt_decay_rows():
    m = builtin_model("aklt")
    return [sweep_row(m, 1, n_b, 1, "transfer", ("gram", "aligned")) for n_b in range(6, 21)]


def hand_aklt_gap():
    """nu_gap of the AKLT transfer matrix from explicitly written Kraus operators."""
    r = 1 / np.sqrt(2)
    kraus = np.zeros((3, 2, 2))
    kraus[2, 0, 1] = r
    kraus[1, 1, 1] = -r
    kraus[1, 0, 0] = r
    kraus[0, 1, 0] = -r
    e = np.zeros((4, 4))
    for s in range(3):
        for m in range(2):
            for n in range(2):
                for i in range(2):
                    for j in range(2):
                        e[2 * m + n, 2 * i + j] += kraus[s, m, i] * kraus[s, n, j]
    mods = np.sort(np.abs(np.linalg.eigvals(e)))[::-1]
    assert abs(mods[0] - 1) < 1e-12 and mods[1] < 1 - 1e-9
    return float(mods[1])


@criterion(1, "two-component QMI plateau at |B|=30", 1.0)
def test_c01_qmi_plateau():
    r = qcmi(builtin_model("two-component"), Tripartition(1, 30, 1))
    assert abs(r.qmi - QMI_PLATEAU) <= 1e-5, f"QMI {r.qmi}"
    assert abs(r.qmi - qmi_closed_form()) <= 1e-10
    return f"QMI={r.qmi:.7f}"


@criterion(2, "period2 QMI at |B|=29,30 and decreasing QCMI", 1.0)
def test_c02_period2():
    m = builtin_model("period2")
    r29, r30 = (qcmi(m, Tripartition(1, n, 1)) for n in (29, 30))
    for r in (r29, r30):
        assert abs(r.qmi - QMI_PLATEAU) <= 1e-5, f"QMI {r.qmi}"
        assert r.qcmi <= 1e-4, f"QCMI {r.qcmi}"
    assert r30.qcmi < r29.qcmi, "QCMI not decreasing"
    return f"QCMI {r29.qcmi:.2e} -> {r30.qcmi:.2e}"


@criterion(3, "tilde states are exact Markov chains", 30.0)
def test_c03_exact_qmc():
    worst_q = worst_r = 0.0
    skipped = []
    for name in BUILTINS:
        m = builtin_model(name)
        for n_b in range(2, 6):
            part = Tripartition(1, n_b, 1)
            if not part.feasible(m.d_s, m.d_M):
                skipped.append(f"{name}|B|={n_b}")
                continue
            frame = buffer_frame(m, n_b)
            for v in VARIANTS:
                q = build_qmc(m, part, make_tilde(m, n_b, v, frame))
                rec = recovery_errors(q)
                worst_q = max(worst_q, q.tilde_qcmi)
                worst_r = max(worst_r, rec["petz_exact"], rec["structural_exact"])
                assert q.tilde_qcmi <= 1e-8, f"{name} {v} |B|={n_b}: QCMI {q.tilde_qcmi}"
                assert rec["petz_exact"] <= 1e-9 and rec["structural_exact"] <= 1e-9, f"{name} {v} |B|={n_b}: {rec}"
    return f"max QCMI {worst_q:.1e}, max recovery {worst_r:.1e}; infeasible skipped: {', '.join(skipped)}"


@criterion(4, "trace <= 2 iso and recovery <= 4 iso, dense engine", 60.0)
def test_c04_bound_chain():
    rows = bound_chain_rows()
    n = 0
    for name, row in rows:
        if row.status != "ok":
            continue
        for v, iso in row.iso_error.items():
            assert row.trace_error[v] <= 2 * iso + 1e-8, f"{name} |B|={row.n_b} {v}"
            for (vv, ch), err in row.recovery_error.items():
                if vv == v:
                    assert err <= 4 * iso + 1e-8, f"{name} |B|={row.n_b} {v}/{ch}"
            n += 1
    return f"{n} (model, |B|, variant) cases; two-component |B|=2 infeasible"


@criterion(5, "aklt decay slopes of qcmi and iso error", 5.0)
def test_c05_decay():
    gap = hand_aklt_gap()
    assert abs(gap - 0.5) < 1e-12
    assert abs(builtin_model("aklt").transfer.nu_gap - gap) < 1e-9
    rows = aklt_decay_rows()
    ns = [r.n_b for r in rows]
    target = 0.5 * np.log(1 / gap)
    s_q = slope(ns, [r.qcmi for r in rows])
    assert s_q <= -0.34, f"qcmi slope {s_q}"
    out = [f"qcmi {s_q:.3f}"]
    for v in ("gram", "aligned"):
        s = slope(ns, [r.iso_error[v] for r in rows])
        assert s <= -0.34, f"{v} iso slope {s}"
        out.append(f"iso[{v}] {s:.3f}")
    return f"slopes {', '.join(out)} (target -{target:.3f})"


@criterion(6, "dense and transfer entropy engines agree on 100 random models", 120.0)
def test_c06_engines():
    rng = np.random.default_rng(20260)
    worst = 0.0
    for _ in range(100):
        m = random_model(int(rng.choice([2, 3])), int(rng.choice([2, 3])), rng)
        for n_b in range(1, 5):
            part = Tripartition(1, n_b, 1)
            a, b = entropies(m, part, "dense"), entropies(m, part, "transfer")
            diff = max(abs(a[k] - b[k]) for k in a)
            worst = max(worst, diff)
            assert diff <= 1e-9, f"{m.label} |B|={n_b}: {diff}"
    return f"max difference {worst:.1e}"


@criterion(7, "fitted decay of E^n - tilde^n matches nu_gap; tilde is CPTP", 5.0)
def test_c07_peripheral_rate():
    out = []
    for name in BUILTINS:
        t = builtin_model(name).transfer
        nu = channel_distance(t, range(4, 17))[0].fitted_nu
        assert abs(nu - t.nu_gap) <= 0.02, f"{name}: fitted {nu} vs gap {t.nu_gap}"
        min_eig, tp = cptp_residuals(tilde_channel(t).matrix, t.dim_memory)
        assert min_eig >= -1e-9 and tp <= 1e-9, f"{name}: Choi {min_eig}, TP {tp}"
        out.append(f"{name} {nu:.4f}/{t.nu_gap:.4f}")
    return "; ".join(out)


@criterion(8, "Gram construction: orthonormality, closed form, recovery decay", 10.0)
def test_c08_gram():
    worst = 0.0
    for name in BUILTINS:
        m = builtin_model(name)
        for n_b in range(2, 9):
            if not Tripartition(1, n_b, 1).feasible(m.d_s, m.d_M):
                continue
            t = make_tilde(m, n_b, "gram")
            g = t.coeffs.conj().T @ t.frame.gram @ t.coeffs
            worst = max(worst, float(np.abs(g - np.eye(len(t.labels))).max()))
    assert worst <= 1e-9, f"orthonormality residual {worst}"

    m = builtin_model("period2")
    proj = ergodic_decompose(m)[0].cyclic_projectors
    et = tilde_channel(m.transfer).matrix
    d = m.d_M
    closed = 0.0
    for n_b in range(2, 9):
        e4 = np.linalg.matrix_power(et, n_b).reshape(d, d, d, d)
        qt = e4.transpose(1, 3, 0, 2).reshape(d * d, d * d)
        ref = sum(2 * np.kron(proj[(k + n_b) % 2] @ m.sigma, proj[k]) for k in range(2))
        closed = max(closed, float(np.abs(qt - ref).max()))
    assert closed <= 1e-10, f"closed form residual {closed}"

    am = builtin_model("aklt")
    rows = [sweep_row(am, 1, n_b, 1, "transfer", ("gram",)) for n_b in range(6, 15)]
    ns = [r.n_b for r in rows]
    slopes = {ch: slope(ns, [r.recovery_error[("gram", ch)] for r in rows]) for ch in ("petz", "structural")}
    for ch, s in slopes.items():
        assert s <= -0.34, f"{ch} slope {s}"
    return f"xi residual {worst:.1e}, closed form {closed:.1e}, slopes petz {slopes['petz']:.3f} structural {slopes['structural']:.3f}"


@criterion(9, "disconnected geometry error <= 2(e1 + e2)", 60.0)
def test_c09_disconnected():
    m = builtin_model("aklt")
    out = []
    for b1 in (2, 3):
        for b2 in (2, 3):
            for v in ("gram", "aligned"):
                ts = [make_tilde(m, b, v, buffer_frame(m, b)) for b in (b1, b2)]
                q = build_qmc_disconnected(m, (1, b1, 1, b2, 1), ts)
                e1, e2 = q.extra["iso_errors"]
                assert q.trace_error <= 2 * (e1 + e2) + 1e-8, f"({b1},{b2}) {v}: {q.trace_error} > {2 * (e1 + e2)}"
            out.append(f"({b1},{b2}) {q.trace_error:.3f}<={2 * (e1 + e2):.3f}")
    return ", ".join(out)


@criterion(10, "AF bound dominates measured qcmi on rows of criteria 4-5", 120.0)
def test_c10_af_bound():
    n = 0
    rows = [r for _, r in bound_chain_rows()] + aklt_decay_rows()
    for row in rows:
        if row.status != "ok":
            continue
        for v, af in row.af_bound.items():
            assert af >= row.qcmi, f"|B|={row.n_b} {v}: {af} < {row.qcmi}"
            n += 1
    return f"{n} rows"


def summary_lines():
    return [RESULTS[k][1] for k in sorted(RESULTS)]


if __name__ == "__main__":
    import sys

    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_c")]
    for fn in tests:
        try:
            fn()
        except AssertionError:
            pass
    print("\n".join(summary_lines()))
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
