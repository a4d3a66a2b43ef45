"""fcs-cli: spectra, ergodic structure, buffer sweeps and recovery checks for pgFCS models."""

import json
import sys
import warnings

import click
import numpy as np

from pgfcs.channelkit import ValidationError, detected_periods, fit_bound_constants
from pgfcs.fcskit import (
    DecompositionError,
    ModelFormatError,
    StructureError,
    Tripartition,
    equivalent_pairs,
    ergodic_decompose,
    load_model,
    merge_equivalent,
    model_to_dict,
    random_model,
    save_model,
    to_mps_tensor,
)
from pgfcs.markovkit import FeasibilityError, buffer_frame, build_qmc, build_qmc_disconnected, make_tilde
from pgfcs.recoverkit import recovery_errors
from pgfcs.sweep import VARIANTS, SweepConfig, fit_summary, fmt, parse_b_range, run_sweep, to_json, write_csv

EXIT_VIOLATION = 3


def _load(source, seed):
    """Model from a file, ``builtin:<name>`` (or a bare builtin name) or ``random:<d_s>:<d_M>``."""
    try:
        if source.startswith("random:"):
            _, ds, dm = source.split(":")
            return random_model(int(ds), int(dm), np.random.default_rng(seed))
        if ":" not in source and not source.endswith(".json"):
            source = "builtin:" + source
        return load_model(source)
    except (ModelFormatError, ValidationError, KeyError, OSError, ValueError) as exc:
        raise click.ClickException(f"cannot load model {source!r}: {exc}") from exc


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _cplx(z):
    z = complex(z)
    # drop rounding noise so printed spectra are stable
    z = complex(0.0 if abs(z.real) < 1e-12 else z.real, 0.0 if abs(z.imag) < 1e-12 else z.imag)
    return f"{fmt(z.real)}{'+' if z.imag >= 0 else '-'}{fmt(abs(z.imag))}j"


model_opt = click.option("--model", "model_src", required=True, help="path, builtin:<name> or random:<d_s>:<d_M>")
seed_opt = click.option("--seed", default=0, show_default=True, help="seed for random models and decompositions")
out_opt = click.option("--out", default=None, help="output path (stdout when omitted)")
fmt_opt = click.option("--format", "out_format", type=click.Choice(["csv", "json"]), default="csv", show_default=True)


@click.group()
def main():
    """Finitely correlated states and their quantum Markov chain approximations."""


@main.command()
@model_opt
@seed_opt
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
def spectrum(model_src, seed, as_json):
    """Transfer spectrum, gap, peripheral structure and ergodic components."""
    m = _load(model_src, seed)
    t = m.transfer
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        comps = ergodic_decompose(m, seed=seed)
    c, nu = fit_bound_constants(t)
    rep = {
        "model": m.label or model_src,
        "d_s": m.d_s,
        "d_M": m.d_M,
        "eigenvalues": [_cplx(z) for z in t.spectrum.values],
        "nu_gap": fmt(t.nu_gap),
        "peripheral": [_cplx(z) for z in t.peripheral_values],
        "periods": detected_periods(t),
        "fit": {"c": fmt(c), "nu": fmt(nu)},
        "components": [{"weight": fmt(x.weight), "rank": x.rank, "period": x.period} for x in comps],
    }
    if as_json:
        click.echo(json.dumps(rep, indent=1))
        return
    click.echo(f"model {rep['model']}  d_s={m.d_s} d_M={m.d_M}")
    click.echo("eigenvalues: " + " ".join(rep["eigenvalues"]))
    click.echo(f"nu_gap: {rep['nu_gap']}")
    click.echo("peripheral: " + " ".join(rep["peripheral"]) + f"  (orders {rep['periods']})")
    click.echo(f"fitted c={rep['fit']['c']} nu={rep['fit']['nu']}")
    click.echo(f"ergodic components: {len(comps)}")
    for i, x in enumerate(rep["components"]):
        click.echo(f"  [{i}] weight={x['weight']} rank={x['rank']} period={x['period']}")


@main.command()
@model_opt
@click.option("--na", default=1, show_default=True)
@click.option("--nc", default=1, show_default=True)
@click.option("--b", "b_range", default="2..8", show_default=True, help="start..end[:stride]")
@click.option("--engine", type=click.Choice(["dense", "transfer"]), default="transfer", show_default=True)
@click.option("--variant", "variants", multiple=True, type=click.Choice(VARIANTS), help="repeatable; default gram+aligned")
@click.option("--jobs", default=1, show_default=True, help="worker processes")
@click.option("--strict", is_flag=True, help="exit with status 3 when a meaningful bound is violated")
@seed_opt
@out_opt
@fmt_opt
def sweep(model_src, na, nc, b_range, engine, variants, jobs, strict, seed, out, out_format):
    """One row per buffer length with measured errors, predictions and decay fits."""
    m = _load(model_src, seed)
    try:
        b0, b1, st = parse_b_range(b_range)
        cfg = SweepConfig(model_src, na, nc, b0, b1, st, engine, tuple(variants) or ("gram", "aligned"), seed=seed, jobs=jobs)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    rows, fit = run_sweep(m, cfg)
    for r in rows:
        if r.status != "ok":
            click.echo(f"warning: |B|={r.n_b} {r.status}", err=True)
    summary = fit_summary(rows, fit)
    if out_format == "csv":
        import io

        buf = io.StringIO()
        write_csv(buf, rows, cfg, summary)
        _emit(buf.getvalue(), out)
    else:
        _emit(json.dumps(to_json(rows, cfg, summary), indent=1) + "\n", out)
    bad = [(r.n_b, v) for r in rows for v in r.violations]
    for n, v in bad:
        click.echo(f"violation |B|={n}: {v}", err=True)
    if strict and bad:
        sys.exit(EXIT_VIOLATION)


@main.command()
@model_opt
@click.option("--na", default=1, show_default=True)
@click.option("--nc", default=1, show_default=True)
@click.option("--b", "n_b", default=4, show_default=True, help="buffer length (first buffer when disconnected)")
@click.option("--b2", default=None, type=int, help="second buffer length (disconnected; defaults to --b)")
@click.option("--na2", default=None, type=int, help="second outer region (disconnected; defaults to --na)")
@click.option("--engine", type=click.Choice(["dense", "transfer"]), default="transfer", show_default=True)
@click.option("--variant", type=click.Choice(VARIANTS), default="gram", show_default=True)
@click.option("--disconnected", is_flag=True, help="geometry A1 B1 C B2 A2")
@click.option("--strict", is_flag=True)
@seed_opt
@out_opt
@fmt_opt
def recover(model_src, na, nc, n_b, b2, na2, engine, variant, disconnected, strict, seed, out, out_format):
    """Petz and structural recovery errors of the true state against the bounds."""
    m = _load(model_src, seed)
    mode = "dense" if engine == "dense" else "transfer"
    fit = fit_bound_constants(m.transfer)
    try:
        if disconnected:
            b2 = n_b if b2 is None else b2
            na2 = na if na2 is None else na2
            ts = [make_tilde(m, b, variant, buffer_frame(m, b, mode), fit=fit) for b in (n_b, b2)]
            q = build_qmc_disconnected(m, (na, n_b, nc, b2, na2), ts, fit)
            iso = sum(q.extra["iso_errors"])
            predicted = q.extra["predicted_recovery_error"]
            rec = recovery_errors(q, ("petz",))
        else:
            t = make_tilde(m, n_b, variant, buffer_frame(m, n_b, mode), fit=fit)
            q = build_qmc(m, Tripartition(na, n_b, nc), t, fit)
            iso = q.iso_error
            predicted = q.bound.predicted_recovery_error
            rec = recovery_errors(q)
    except (FeasibilityError, MemoryError) as exc:
        raise click.ClickException(str(exc)) from exc
    meaningful = bool(predicted <= 2.0)
    channels = [k for k in rec if not k.endswith("_exact")]
    checks = {f"{k} <= 4 iso": bool(rec[k] <= 4 * iso + 1e-8) for k in channels}
    checks["trace <= 2 iso"] = bool(q.trace_error <= 2 * iso + 1e-8)
    if meaningful:
        checks.update({f"{k} <= predicted": bool(rec[k] <= predicted + 1e-8) for k in channels})
    rep = {
        "model": model_src,
        "geometry": "disconnected" if disconnected else "connected",
        "variant": variant,
        "iso_error": fmt(iso),
        "trace_error": fmt(q.trace_error),
        "tilde_qcmi": fmt(q.tilde_qcmi),
        "recovery": {k: fmt(v) for k, v in rec.items()},
        "predicted_recovery_error": fmt(predicted),
        "meaningful": meaningful,
        "checks": checks,
    }
    if out_format == "json":
        _emit(json.dumps(rep, indent=1) + "\n", out)
    else:
        lines = ["quantity,value"]
        for k in ("iso_error", "trace_error", "tilde_qcmi", "predicted_recovery_error"):
            lines.append(f"{k},{rep[k]}")
        lines += [f"recovery_{k},{v}" for k, v in rep["recovery"].items()]
        lines += [f"check {k},{int(v)}" for k, v in checks.items()]
        _emit("\n".join(lines) + "\n", out)
    if strict and not all(checks.values()):
        sys.exit(EXIT_VIOLATION)


@main.command()
@model_opt
@seed_opt
@click.option("--merge", is_flag=True, help="write the model with equivalent components merged to --out")
@out_opt
def decompose(model_src, seed, merge, out):
    """Ergodic components, periods, cyclic projectors and equivalent pairs."""
    m = _load(model_src, seed)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            comps = ergodic_decompose(m, seed=seed)
    except (DecompositionError, StructureError) as exc:
        raise click.ClickException(str(exc)) from exc
    for i, c in enumerate(comps):
        ranks = [int(round(np.trace(p).real)) for p in c.cyclic_projectors]
        click.echo(f"component {i}: weight={fmt(c.weight)} rank={c.rank} period={c.period} cyclic ranks={ranks}")
    pairs = equivalent_pairs(comps)
    click.echo(f"equivalent pairs: {pairs if pairs else 'none'}")
    if merge:
        if not out:
            raise click.UsageError("--merge needs --out")
        save_model(merge_equivalent(m), out)
        click.echo(f"merged model written to {out}")


@main.command("export-mps")
@model_opt
@seed_opt
@out_opt
def export_mps(model_src, seed, out):
    """Write the MPS matrices A^s (A^s[m, j] = <s, m|V|j>) and sigma as JSON."""
    m = _load(model_src, seed)
    doc = model_to_dict(m)
    doc["mps"] = [[[[float(z.real), float(z.imag)] for z in row] for row in a] for a in to_mps_tensor(m)]
    _emit(json.dumps(doc, indent=1) + "\n", out)


if __name__ == "__main__":
    main()
