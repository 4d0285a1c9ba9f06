"""Command-line interface.

Every command runs one library operation and prints JSON (single results)
or CSV (tables).  Records carry a metadata block and the config echo; no
timestamps, so identical inputs give byte-identical output.

Exit codes: 0 ok, 2 invalid input, 3 budget exhausted, 4 not converged.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction

import click
import numpy as np

from . import __version__
from .expsums import BudgetExceeded, S_q
from .forms import FormError, QuadraticForm, load_form, split_form
from .hkernel import delta_terms, h_with_error
from .lattice_enum import N_L_brute
from .localdensities import NonConvergence, count_Npk, sigma, sigma_star
from .pipeline import J_decomposition, asymptotic_table, circle_rhs
from .quadric_integrals import METHODS, IntegralBudgetExceeded, make_weight, sigma_infinity

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_NONCONV = 0, 2, 3, 4
WORKERS_ENV = "QUADCIRCLE_WORKERS"


class NotConverged(Exception):
    """Raised after the record is emitted when the result missed its tolerance."""


@dataclass
class RunConfig:
    command: str
    form_path: str | None = None
    weight_name: str | None = None
    params: dict = field(default_factory=dict)
    output_format: str = "json"
    workers: int = 1
    seed: int | None = None

    def echo(self) -> dict:
        return {
            "command": self.command,
            "form": self.form_path,
            "weight": self.weight_name,
            "params": {k: _plain(v) for k, v in sorted(self.params.items())},
            "format": self.output_format,
        }


def _plain(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _metadata(cfg: RunConfig, form: QuadraticForm | None) -> dict:
    return {
        "tool_version": __version__,
        "form_hash": None if form is None else form.hash(),
        "seed": cfg.seed,
        "workers": cfg.workers,
    }


def _emit_json(cfg: RunConfig, form, result) -> None:
    doc = {"metadata": _metadata(cfg, form), "config": cfg.echo(), "result": _plain(result)}
    click.echo(json.dumps(doc, sort_keys=True, indent=2))


def _emit(cfg: RunConfig, form, result: dict) -> None:
    """A single result: a JSON record, or one CSV row with nested values as JSON cells."""
    if cfg.output_format == "csv":
        _emit_records(cfg, form, [result])
    else:
        _emit_json(cfg, form, result)


def _emit_records(cfg: RunConfig, form, records: list[dict]) -> None:
    if cfg.output_format == "json":
        _emit_json(cfg, form, records)
        return
    buf = io.StringIO()
    buf.write("# metadata: " + json.dumps(_metadata(cfg, form), sort_keys=True) + "\n")
    buf.write("# config: " + json.dumps(cfg.echo(), sort_keys=True) + "\n")
    if records:
        cols = list(records[0].keys())
        wr = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        wr.writeheader()
        for r in records:
            wr.writerow({k: _csv_cell(r.get(k)) for k in cols})
    click.echo(buf.getvalue(), nl=False)


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(_plain(v), sort_keys=True)
    return v


def resolve_form(arg: str) -> QuadraticForm:
    """A path to a form file, or the shorthand F<d> for the split form."""
    if os.path.exists(arg):
        return load_form(arg)
    if arg[:1] in "Ff" and arg[1:].isdigit():
        return split_form(int(arg[1:]))
    raise FormError(f"form file not found: {arg}")


def _rational(_ctx, _param, value):
    if value is None:
        return None
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise click.BadParameter(f"not a rational number: {value!r}") from None


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run(fn):
    """Map library exceptions to exit codes."""
    try:
        fn()
    except NotConverged as exc:
        click.echo(f"error: not converged: {exc}", err=True)
        sys.exit(EXIT_NONCONV)
    except NonConvergence as exc:
        click.echo(f"error: not converged: {exc}", err=True)
        sys.exit(EXIT_NONCONV)
    except (BudgetExceeded, IntegralBudgetExceeded) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_BUDGET)
    except (FormError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    sys.exit(EXIT_OK)


form_opt = click.option("--form", "form_path", required=True, help="form file (JSON {dim, matrix}) or F<d>")
tol_opt = click.option("--tol", type=float, default=1e-6, show_default=True)
weight_opt = click.option("--weight", "weight_name", type=click.Choice(["gaussian", "bump"]), default="gaussian",
                          show_default=True)
fmt_opt = click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default=None)
workers_opt = click.option("--workers", type=int, default=None, help=f"worker threads (default ${WORKERS_ENV} or 1)")
seed_opt = click.option("--seed", type=int, default=None)


def _cfg(command, form_path=None, weight=None, fmt=None, workers=None, seed=None, default_fmt="json", **params):
    w = _default_workers() if workers is None else workers
    if w < 1:
        raise click.BadParameter("--workers must be >= 1")
    return RunConfig(command, form_path, weight, params, fmt or default_fmt, w, seed)


@click.group()
@click.version_option(__version__, prog_name="quadcircle")
@click.option("-v", "--verbose", count=True, help="log to stderr (-v info, -vv debug)")
def main(verbose: int):
    """Lattice points on quadrics: brute-force counts and circle-method terms."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@form_opt
@click.option("--m", "m", default="0", callback=_rational, show_default=True)
@click.option("--L", "L", required=True, callback=_rational)
@weight_opt
@tol_opt
@workers_opt
@fmt_opt
def count(form_path, m, L, weight_name, tol, workers, fmt):
    """Brute-force weighted count N_L(w; A, m)."""
    cfg = _cfg("count", form_path, weight_name, fmt, workers, m=m, L=L, tol=tol)

    def go():
        form = resolve_form(form_path)
        res = N_L_brute(make_weight(weight_name, form.dim), form, m, L, tol=tol, workers=cfg.workers)
        _emit(cfg, form, res.to_dict())

    _run(go)


@main.command()
@form_opt
@click.option("--m", "m", default="0", callback=_rational, show_default=True)
@click.option("--L", "L", required=True, callback=_rational)
@weight_opt
@tol_opt
@click.option("--qmax", type=int, default=None)
@click.option("--cmax", type=int, default=None)
@click.option("--gamma1", type=float, default=0.5, show_default=True)
@click.option("--no-brute", is_flag=True, help="skip the brute-force count")
@click.option("--table/--no-table", default=True, show_default=True, help="include the per-term table")
@workers_opt
@fmt_opt
def circle(form_path, m, L, weight_name, tol, qmax, cmax, gamma1, no_brute, table, workers, fmt):
    """Truncated circle-method expansion (single report)."""
    cfg = _cfg("circle", form_path, weight_name, fmt, workers, m=m, L=L, tol=tol, qmax=qmax, cmax=cmax,
               gamma1=gamma1, brute=not no_brute)

    def go():
        form = resolve_form(form_path)
        rep = circle_rhs(make_weight(weight_name, form.dim), form, m, L, q_max=qmax, c_max=cmax, tol=tol,
                         brute=not no_brute)
        if cfg.output_format == "csv":
            _emit_records(cfg, form, [r.to_dict() for r in rep.per_term_table])
            return
        out = rep.to_dict(with_table=table)
        out["J"] = J_decomposition(rep, gamma1)
        _emit_json(cfg, form, out)

    _run(go)


@main.command()
@form_opt
@click.option("--m", "m", default="0", callback=_rational, show_default=True)
@click.option("--L-grid", "L_grid", required=True, help="comma separated list of L")
@weight_opt
@tol_opt
@click.option("--qmax", type=int, default=None, help="if given, add circle-method columns")
@click.option("--cmax", type=int, default=None)
@click.option("--summary", type=click.Path(dir_okay=False), default=None, help="write the JSON summary here")
@workers_opt
@fmt_opt
def verify(form_path, m, L_grid, weight_name, tol, qmax, cmax, summary, workers, fmt):
    """Asymptotic table: brute-force counts against the main term."""
    try:
        Ls = [Fraction(x) for x in L_grid.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"bad --L-grid {L_grid!r}") from None
    cfg = _cfg("verify", form_path, weight_name, fmt, workers, default_fmt="csv", m=m, L_grid=[str(x) for x in Ls],
               tol=tol, qmax=qmax, cmax=cmax)

    def go():
        if not Ls:
            raise ValueError("--L-grid is empty")
        form = resolve_form(form_path)
        w = make_weight(weight_name, form.dim)
        tab = asymptotic_table(w, form, m, Ls, tol=tol, workers=cfg.workers)
        rows = [r.to_dict() for r in tab.rows]
        if qmax is not None:
            for r, Lq in zip(rows, Ls):
                rep = circle_rhs(w, form, m, Lq, q_max=qmax, c_max=cmax, tol=tol, brute=False, with_leading=False)
                r["N_circle"] = rep.N_circle
                r["circle_quadrature_err"] = rep.diagnostics["quadrature_err"]
        summ = {"constants": tab.constants}
        if tab.fit is not None:
            summ["fit"] = {"slope": tab.fit[0], "intercept": tab.fit[1], "r2": tab.fit[2]}
        if summary:
            with open(summary, "w") as fh:
                json.dump({"metadata": _metadata(cfg, form), "config": cfg.echo(), "result": _plain(summ)}, fh,
                          sort_keys=True, indent=2)
        if cfg.output_format == "json":
            _emit_json(cfg, form, {"rows": rows, "summary": summ})
        else:
            _emit_records(cfg, form, rows)

    _run(go)


@main.command("sigma-series")
@form_opt
@click.option("--t", "t", type=int, default=0, show_default=True)
@tol_opt
@click.option("--pmax", type=int, default=None)
@click.option("--star", is_flag=True, help="sigma* (with the (1 - 1/p) factors, d = 4)")
@fmt_opt
def sigma_series(form_path, t, tol, pmax, star, fmt):
    """Singular series sigma(A, t) or sigma*(A)."""
    cfg = _cfg("sigma-series", form_path, None, fmt, None, t=t, tol=tol, pmax=pmax, star=star)

    def go():
        form = resolve_form(form_path)
        res = sigma_star(form, tol=tol, pmax=pmax) if star else sigma(form, t, tol=tol, pmax=pmax)
        _emit(cfg, form, res.to_dict())
        if not res.converged:
            raise NotConverged(f"tail bound {res.tail_bound:.3g} above tolerance")

    _run(go)


@main.command("sigma-infinity")
@form_opt
@click.option("--t", "t", type=float, default=0.0, show_default=True)
@weight_opt
@tol_opt
@click.option("--method", type=click.Choice(["auto", *METHODS[:3]]), default="auto", show_default=True)
@seed_opt
@fmt_opt
def sigma_inf(form_path, t, weight_name, tol, method, seed, fmt):
    """Singular integral sigma_inf(w; A, t)."""
    cfg = _cfg("sigma-infinity", form_path, weight_name, fmt, None, seed, t=t, tol=tol, method=method)

    def go():
        if method == "thin_shell_mc" and seed is None:
            raise ValueError("--seed is required for the Monte Carlo method")
        form = resolve_form(form_path)
        res = sigma_infinity(make_weight(weight_name, form.dim), form, t, method=method, tol=tol, seed=seed)
        _emit(cfg, form, res.to_dict())
        if not res.converged:
            raise NotConverged(f"error estimate {res.err_estimate:.3g} above tolerance")

    _run(go)


@main.command()
@form_opt
@click.option("--q", "q", type=int, required=True)
@click.option("--c", "c", default=None, help="comma separated integer vector (default 0)")
@click.option("--t", "t", type=int, default=0, show_default=True)
@click.option("--route", type=click.Choice(["auto", "naive", "split"]), default="auto", show_default=True)
@fmt_opt
def expsum(form_path, q, c, t, route, fmt):
    """Complete exponential sum S_q(c; A, t)."""
    cfg = _cfg("expsum", form_path, None, fmt, None, q=q, c=c, t=t, route=route)

    def go():
        if q < 1:
            raise ValueError("--q must be >= 1")
        form = resolve_form(form_path)
        cv = None if c is None else [int(x) for x in c.split(",")]
        res = S_q(q, cv, form, t, prime_power_route=route)
        exact = not any(res.c)
        # c = 0 values are exact integers; otherwise fsum of q rounded terms
        err = 0.0 if exact else 4 * q * 2.0**-53 * max(1.0, abs(res.value))
        _emit(cfg, form, {"q": res.q, "c": list(res.c), "t": res.t, "re": res.value.real,
                               "im": res.value.imag, "route": res.route, "err_bound": err})

    _run(go)


@main.command("h-eval")
@click.option("--x", "x", type=float, required=True)
@click.option("--y", "y", type=float, required=True)
@fmt_opt
def h_eval(x, y, fmt):
    """The kernel h(x, y) with a rounding-error bound."""
    cfg = _cfg("h-eval", None, None, fmt, None, x=x, y=y)

    def go():
        v, e = h_with_error(x, y)
        _emit(cfg, None, {"x": x, "y": y, "value": float(v), "err_bound": float(e)})

    _run(go)


@main.command("delta-check")
@click.option("--Q", "Q", type=float, required=True)
@click.option("--nmax", type=int, default=20, show_default=True)
@fmt_opt
def delta_check(Q, nmax, fmt):
    """delta_rhs(n, Q) for n in [-nmax, nmax]."""
    cfg = _cfg("delta-check", None, None, fmt, None, default_fmt="csv", Q=Q, nmax=nmax)

    def go():
        if nmax < 0:
            raise ValueError("--nmax must be >= 0")
        recs = []
        for n in range(-nmax, nmax + 1):
            dv = delta_terms(n, Q)
            recs.append({"n": n, "Q": Q, "value": dv.value, "err_bound": dv.err_bound, "q_terms": dv.q_terms})
        _emit_records(cfg, None, recs)

    _run(go)


@main.command("local-count")
@form_opt
@click.option("--p", "p", type=int, required=True)
@click.option("--k", "k", type=int, default=1, show_default=True)
@click.option("--t", "t", type=int, default=0, show_default=True)
@fmt_opt
def local_count(form_path, p, k, t, fmt):
    """#{z mod p^k : F(z) = t mod p^k}."""
    cfg = _cfg("local-count", form_path, None, fmt, None, p=p, k=k, t=t)

    def go():
        form = resolve_form(form_path)
        n = count_Npk(p, k, form, t)
        _emit(cfg, form, {"p": p, "k": k, "t": t, "count": n, "err_bound": 0})

    _run(go)


def dispatch(argv: list[str]) -> int:
    """Run the CLI in-process and return its exit code (used by tests)."""
    try:
        main.main(args=argv, prog_name="quadcircle", standalone_mode=True)
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    main()
