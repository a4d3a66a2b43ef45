"""Sweeps over the buffer length with measured errors, predicted bounds and decay fits."""

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from pgfcs.channelkit import fit_bound_constants
from pgfcs.fcskit import Tripartition
from pgfcs.infokit import af_bound, qcmi
from pgfcs.markovkit import (
    bound_estimate,
    buffer_frame,
    build_qmc,
    make_tilde,
    qmc_layout,
)
from pgfcs.recoverkit import recovery_errors

SCHEMA = "pgfcs-sweep/1"
VARIANTS = ("canonical", "gram", "aligned")
CHANNELS = ("petz", "structural")
SLACK = 1e-8
DIGITS = 12


@dataclass(frozen=True)
class SweepConfig:
    model: str
    n_a: int = 1
    n_c: int = 1
    b_start: int = 2
    b_end: int = 6
    b_stride: int = 1
    engine: str = "transfer"
    variants: tuple = ("gram", "aligned")
    channels: tuple = CHANNELS
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.b_stride < 1 or self.b_end < self.b_start or self.b_start < 1:
            raise ValueError(f"empty buffer range {self.b_start}..{self.b_end}:{self.b_stride}")
        if self.engine not in ("dense", "transfer"):
            raise ValueError(f"unknown engine {self.engine!r}")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad or not self.variants:
            raise ValueError(f"unknown variants {bad}; choose from {', '.join(VARIANTS)}")

    @property
    def b_values(self):
        return list(range(self.b_start, self.b_end + 1, self.b_stride))


def parse_b_range(text):
    """'6', '2..20' or '2..20:2' -> (start, end, stride)."""
    text = text.strip()
    stride = 1
    if ":" in text:
        text, s = text.split(":", 1)
        stride = int(s)
    if ".." in text:
        a, b = text.split("..", 1)
        return int(a), int(b), stride
    n = int(text)
    return n, n, stride


@dataclass
class SweepRow:
    n_b: int
    status: str = "ok"
    qcmi: float = float("nan")
    qmi: float = float("nan")
    iso_error: dict = field(default_factory=dict)
    hs_error: dict = field(default_factory=dict)
    trace_error: dict = field(default_factory=dict)
    tilde_qcmi: dict = field(default_factory=dict)
    recovery_error: dict = field(default_factory=dict)  # (variant, channel) -> error
    af_bound: dict = field(default_factory=dict)
    predicted_trace_error: float = float("nan")
    predicted_recovery_error: float = float("nan")
    predicted_qcmi: float = float("nan")
    meaningful: bool = False
    violations: list = field(default_factory=list)

    def best(self, what):
        """Smallest value over variants (and channels for recovery errors)."""
        vals = getattr(self, what).values()
        return min(vals) if vals else float("nan")


def check_row(row, slack=SLACK):
    """Bound violations of a row; the predicted bounds only count when meaningful."""
    out = []
    for v, iso in row.iso_error.items():
        if row.trace_error[v] > 2 * iso + slack:
            out.append(f"{v}: trace error {row.trace_error[v]:.3e} > 2 iso {2 * iso:.3e}")
        for (vv, ch), err in row.recovery_error.items():
            if vv == v and err > 4 * iso + slack:
                out.append(f"{v}/{ch}: recovery error {err:.3e} > 4 iso {4 * iso:.3e}")
        if row.af_bound[v] < row.qcmi - 1e-12:
            out.append(f"{v}: AF bound {row.af_bound[v]:.3e} < qcmi {row.qcmi:.3e}")
    if row.meaningful and row.iso_error:
        if row.best("trace_error") > row.predicted_trace_error + slack:
            out.append(f"trace error {row.best('trace_error'):.3e} above prediction {row.predicted_trace_error:.3e}")
        if row.best("recovery_error") > row.predicted_recovery_error + slack:
            out.append(
                f"recovery error {row.best('recovery_error'):.3e} above prediction {row.predicted_recovery_error:.3e}"
            )
        if row.qcmi > row.predicted_qcmi + slack:
            out.append(f"qcmi {row.qcmi:.3e} above prediction {row.predicted_qcmi:.3e}")
    return out


def sweep_row(model, n_a, n_b, n_c, engine="transfer", variants=("gram", "aligned"), channels=CHANNELS, fit=None):
    fit = fit_bound_constants(model.transfer) if fit is None else fit
    part = Tripartition(n_a, n_b, n_c)
    row = SweepRow(n_b)
    info = qcmi(model, part, engine)
    row.qcmi, row.qmi = info.qcmi, info.qmi
    if not part.feasible(model.d_s, model.d_M):
        row.status = "infeasible"
        return row
    frame = buffer_frame(model, n_b, "dense" if engine == "dense" else "transfer")
    layout = qmc_layout(model, n_b)
    for v in variants:
        t = make_tilde(model, n_b, v, frame, layout, fit)
        q = build_qmc(model, part, t, fit)
        rec = recovery_errors(q, channels)
        row.iso_error[v] = q.iso_error
        row.hs_error[v] = t.hs_error
        row.trace_error[v] = q.trace_error
        row.tilde_qcmi[v] = q.tilde_qcmi
        for ch in channels:
            row.recovery_error[(v, ch)] = rec[ch]
        eps = min(rec[ch] for ch in channels)
        row.af_bound[v] = af_bound(min(eps, 2.0), n_a, model.d_s).full
    b = bound_estimate(model, n_a, n_b, fit)
    row.predicted_trace_error = b.predicted_trace_error
    row.predicted_recovery_error = b.predicted_recovery_error
    row.predicted_qcmi = b.predicted_qcmi
    row.meaningful = b.meaningful
    row.violations = check_row(row)
    return row


def _row_job(args):
    model, cfg, n_b, fit = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return sweep_row(model, cfg.n_a, n_b, cfg.n_c, cfg.engine, cfg.variants, cfg.channels, fit)


def run_sweep(model, cfg):
    fit = fit_bound_constants(model.transfer)
    jobs = [(model, cfg, n, fit) for n in cfg.b_values]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_row_job, jobs))
    else:
        rows = [_row_job(j) for j in jobs]
    rows.sort(key=lambda r: r.n_b)
    return rows, fit


def slope(ns, values, floor=1e-14):
    """Least-squares slope of log(values) against n, ignoring values at or below floor."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = np.isfinite(values) & (values > floor)
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(ns[mask], np.log(values[mask]), 1)[0])


def fit_summary(rows, fit):
    ok = [r for r in rows if r.status == "ok"]
    ns = [r.n_b for r in ok]
    out = {"qcmi": slope(ns, [r.qcmi for r in ok])}
    variants = list(ok[0].iso_error) if ok else []
    for v in variants:
        out[f"iso_error_{v}"] = slope(ns, [r.iso_error[v] for r in ok])
        out[f"trace_error_{v}"] = slope(ns, [r.trace_error[v] for r in ok])
        for (vv, ch) in ok[0].recovery_error:
            if vv == v:
                out[f"recovery_{ch}_{v}"] = slope(ns, [r.recovery_error[(v, ch)] for r in ok])
    c, nu = fit
    q = 0.5 * math.log(1.0 / nu) if 0.0 < nu < 1.0 else float("inf")
    return {"slopes": out, "c": c, "nu": nu, "q": q}


# --- output ----------------------------------------------------------------


def fmt(x):
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):.{DIGITS}g}"


def columns(cfg):
    cols = ["n_b", "status", "qcmi", "qmi"]
    for v in cfg.variants:
        cols += [f"iso_error_{v}", f"hs_error_{v}", f"trace_error_{v}", f"tilde_qcmi_{v}"]
        cols += [f"recovery_{ch}_{v}" for ch in cfg.channels]
        cols.append(f"af_bound_{v}")
    cols += ["predicted_trace_error", "predicted_recovery_error", "predicted_qcmi", "meaningful", "violations"]
    return cols


def row_values(row, cfg):
    vals = [row.n_b, row.status, row.qcmi, row.qmi]
    for v in cfg.variants:
        vals += [row.iso_error.get(v), row.hs_error.get(v), row.trace_error.get(v), row.tilde_qcmi.get(v)]
        vals += [row.recovery_error.get((v, ch)) for ch in cfg.channels]
        vals.append(row.af_bound.get(v))
    vals += [row.predicted_trace_error, row.predicted_recovery_error, row.predicted_qcmi, row.meaningful]
    vals.append(len(row.violations))
    return [fmt(x) if not isinstance(x, str) else x for x in vals]


def write_csv(fh, rows, cfg, summary):
    import csv

    fh.write(f"# schema: {SCHEMA}\n")
    fh.write(
        f"# model: {cfg.model} n_a={cfg.n_a} n_c={cfg.n_c} engine={cfg.engine} "
        f"variants={','.join(cfg.variants)} seed={cfg.seed}\n"
    )
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns(cfg))
    for r in rows:
        w.writerow(row_values(r, cfg))
    fh.write(f"# fit: c={fmt(summary['c'])} nu={fmt(summary['nu'])} q={fmt(summary['q'])}\n")
    for k, s in summary["slopes"].items():
        fh.write(f"# slope {k}: {fmt(s)}\n")


def to_json(rows, cfg, summary):
    cols = columns(cfg)
    out_rows = []
    for r in rows:
        d = dict(zip(cols, row_values(r, cfg)))
        d["violations"] = list(r.violations)
        out_rows.append(d)
    return {
        "schema": SCHEMA,
        "config": {
            "model": cfg.model,
            "n_a": cfg.n_a,
            "n_c": cfg.n_c,
            "b": [cfg.b_start, cfg.b_end, cfg.b_stride],
            "engine": cfg.engine,
            "variants": list(cfg.variants),
            "seed": cfg.seed,
        },
        "rows": out_rows,
        "summary": {
            "c": fmt(summary["c"]),
            "nu": fmt(summary["nu"]),
            "q": fmt(summary["q"]),
            "slopes": {k: fmt(v) for k, v in summary["slopes"].items()},
        },
    }

