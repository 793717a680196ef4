"""Command-line front end: ``validate``, ``analyze``, ``simulate``, ``compare``.

Exit codes: 0 success, 1 failed check or numerical/domain error, 2 bad input.
Every output is deterministic for a given model file and flag set.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fockbath, functionals
from .model import bohr_frequencies, validate
from .modelfile import ModelFileError, load_model

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT = 0, 1, 2

DEFAULTS = {
    "analyze": {"theta": 0.5, "alpha_points": 41},
    "simulate": {"theta": 0.25, "alpha_points": 5, "modes": [3], "t_max": 10.0, "t_points": 11},
    "compare": {"alpha_points": 5, "modes": [4, 6], "t_points": 46},
}


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    model: str
    out: str
    theta: float = 0.5
    alpha_points: int = 41
    lam: float | None = None
    modes: list[int] = field(default_factory=lambda: [3])
    smax: float | None = None
    t_max: float = 10.0
    t_points: int = 11
    threads: int | None = None
    format: str = "csv"
    window: tuple[float, float] = (0.5, 0.95)

    def check(self) -> None:
        if not self.theta > 0:
            raise InputError("--theta must be positive")
        if self.alpha_points < 3:
            raise InputError("--alpha-points must be at least 3")
        if not self.modes or min(self.modes) < 1:
            raise InputError("--modes must be positive integers")
        if self.smax is not None and not self.smax > 0:
            raise InputError("--smax must be positive")
        if not self.t_max > 0:
            raise InputError("--t-max must be positive")
        if self.t_points < 2:
            raise InputError("--t-points must be at least 2")
        if self.threads is not None and self.threads < 1:
            raise InputError("--threads must be at least 1")
        if self.format not in ("csv", "json"):
            raise InputError("--format must be csv or json")
        lo, hi = self.window
        if not 0 <= lo < hi:
            raise InputError("--window must be 0 <= start < end")
        if self.lam is not None and self.lam < 0:
            raise InputError("--lambda must be non-negative")

    def echo(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d.pop("threads")  # neither affects the numbers
        d.pop("out")
        return d


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _window(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'start,end', got {text!r}") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinfermion", description="Entropic fluctuation analysis of spin-fermion models.")
    sub = p.add_subparsers(dest="command", required=True)
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--model", required=True, help="model file (YAML)")
    shared.add_argument("--out", default="out", help="output directory")
    shared.add_argument("--theta", type=float, help="alpha grid spans [-theta, 1 + theta]")
    shared.add_argument("--alpha-points", type=int, dest="alpha_points")
    shared.add_argument("--lambda", type=float, dest="lam", help="coupling strength override")
    shared.add_argument("--modes", type=_int_list, help="modes per field factor (comma list for compare)")
    shared.add_argument("--smax", type=float, help="bath energy cutoff")
    shared.add_argument("--t-max", type=float, dest="t_max")
    shared.add_argument("--t-points", type=int, dest="t_points")
    shared.add_argument("--threads", type=int, help="worker cap (default: all cores)")
    shared.add_argument("--format", choices=("csv", "json"))
    shared.add_argument("--window", type=_window, help="fit window as fractions of the recurrence time")
    for name, helptext in [
        ("validate", "check model assumptions"),
        ("analyze", "pressure curve, rate function, entropy production"),
        ("simulate", "finite-bath entropic functionals"),
        ("compare", "finite-bath growth rates against the weak-coupling pressure"),
    ]:
        sub.add_parser(name, parents=[shared], help=helptext)
    return p


def make_config(args: argparse.Namespace, run: dict) -> RunConfig:
    """Flags override the model file's ``run`` block, which overrides defaults."""
    vals = dict(DEFAULTS.get(args.command, {}))
    vals.update(run)
    for key in ("theta", "alpha_points", "lam", "modes", "smax", "t_max", "t_points", "threads", "format", "window"):
        v = getattr(args, key, None)
        if v is not None:
            vals[key] = v
    cfg = RunConfig(args.command, args.model, args.out, **vals)
    if isinstance(cfg.modes, int):
        cfg.modes = [cfg.modes]
    cfg.check()
    return cfg


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _csv_to_records(text: str) -> list[dict]:
    rows = list(csv.reader(io.StringIO(text)))
    head = rows[0]
    return [{h: float(v) if v not in ("", "None") else None for h, v in zip(head, r)} for r in rows[1:]]


def _table(out: Path, stem: str, text: str, cfg: RunConfig) -> str:
    if cfg.format == "csv":
        _write(out, f"{stem}.csv", text)
        return f"{stem}.csv"
    _write(out, f"{stem}.json", _json({"config": cfg.echo(), "rows": _csv_to_records(text)}))
    return f"{stem}.json"


def _default_smax(model) -> float:
    need = 2.0 * float(np.max(np.abs(bohr_frequencies(model.system))))
    for r in model.reservoirs:
        for ch in r.channels:
            for d in ch.densities:
                if d.family == "tabulated":
                    u, v = d.params["u"], d.params["J"]
                    need = max(need, float(u[v > 0].max()) if np.any(v > 0) else 0.0)
                elif d.decay is not None:
                    need = max(need, d.decay.cutoff)
    return need


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_validate(cfg: RunConfig, model) -> int:
    report = validate(model)
    _write(Path(cfg.out), "validation.json", _json({"config": cfg.echo(), **report.to_dict()}))
    for c in report.checks:
        tag = "ok" if c.passed else ("FAIL" if c.required else "note")
        print(f"{tag:4s} {c.name}")
    return EXIT_OK if report.passed else EXIT_DOMAIN


def cmd_analyze(cfg: RunConfig, model) -> int:
    out = Path(cfg.out)
    curve = functionals.pressure_curve(model, cfg.theta, cfg.alpha_points, cfg.threads)
    rf = functionals.rate_function(model, curve, npoints=cfg.alpha_points)
    report = functionals.gallavotti_cohen_report(model, cfg.theta, cfg.alpha_points, curve=curve)
    files = [_table(out, "pressure", curve.to_csv(), cfg), _table(out, "rate_function", rf.to_csv(), cfg)]
    _write(out, "report.json", _json({"config": cfg.echo(), **report}))
    files.append("report.json")
    print("wrote " + ", ".join(files))
    return EXIT_OK


def _build(cfg: RunConfig, model, n: int):
    smax = cfg.smax if cfg.smax is not None else _default_smax(model)
    return fockbath.build(model, n=n, s_max=smax)


def cmd_simulate(cfg: RunConfig, model) -> int:
    out = Path(cfg.out)
    sim = _build(cfg, model, cfg.modes[0])
    ts = np.linspace(0.0, cfg.t_max, cfg.t_points)
    alphas = np.linspace(-cfg.theta, 1 + cfg.theta, cfg.alpha_points)
    series = fockbath.functional_series(sim, ts, alphas, threads=cfg.threads)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "alpha", "symmetry_residual"])
    for a in alphas:
        r = np.abs(fockbath.two_time_mgf_trace(sim, ts, a) - fockbath.two_time_mgf_trace(sim, ts, 1 - a))
        for t, x in zip(ts, r):
            w.writerow([repr(float(t)), repr(float(a)), repr(float(x))])
    lhs, rhs = fockbath.entropy_balance(sim, cfg.t_max, 400)
    gen = fockbath.cocycle_generator_check(sim, cfg.t_max, 400)
    warn = []
    if cfg.t_max > sim.recurrence_time:
        warn.append(f"t_max {cfg.t_max:g} beyond recurrence estimate {sim.recurrence_time:.4g}")
    meta = {
        "config": cfg.echo(),
        "simulator": sim.metadata(),
        "identities": {
            "entropy_balance": {"t": cfg.t_max, "lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs)},
            "cocycle_generator": {"t": cfg.t_max, "residual": gen.residual, "sign": gen.sign},
            "max_triple_gap": float(max(np.max(np.abs(series.f2tm - series.feast)), np.max(np.abs(series.f2tm - series.fqpsc)))),
        },
        "warnings": warn,
    }
    files = [_table(out, "series", series.to_csv(), cfg), _table(out, "symmetry", buf.getvalue(), cfg)]
    _write(out, "metadata.json", _json(meta))
    files.append("metadata.json")
    for m in warn:
        print(f"warning: {m}", file=sys.stderr)
    print("wrote " + ", ".join(files))
    return EXIT_OK


def cmd_compare(cfg: RunConfig, model) -> int:
    out = Path(cfg.out)
    alphas = np.linspace(0.0, 1.0, cfg.alpha_points)
    rows, summary = [], {}
    for n in cfg.modes:
        sim = _build(cfg, model, n)
        T = sim.recurrence_time
        win = (cfg.window[0] * T, cfg.window[1] * T)
        errs = []
        for a in alphas:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", fockbath.RecurrenceWarning)
                g = fockbath.growth_rate_comparison(sim, model, float(a), win, cfg.t_points)
            rows.append([n, a, g.slope, g.prediction, g.rel_err if g.relative else None, win[0], win[1], g.warning or ""])
            if g.relative:
                errs.append(g.rel_err)
        summary[str(n)] = {"median_rel_err": float(np.median(errs)) if errs else None, "recurrence_time": T, "dim": sim.dim}
        del sim
    meds = [summary[str(n)]["median_rel_err"] for n in cfg.modes]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "alpha", "slope", "prediction", "rel_err", "t_start", "t_end", "warning"])
    for r in rows:
        w.writerow([r[0], repr(float(r[1])), repr(r[2]), repr(r[3]), "" if r[4] is None else repr(r[4]), repr(r[5]), repr(r[6]), r[7]])
    text = buf.getvalue()
    if cfg.format == "csv":
        _write(out, "comparison.csv", text)
        name = "comparison.csv"
    else:
        recs = [dict(zip(["n", "alpha", "slope", "prediction", "rel_err", "t_start", "t_end", "warning"], r)) for r in rows]
        _write(out, "comparison.json", _json({"config": cfg.echo(), "rows": recs}))
        name = "comparison.json"
    decreasing = all(b is not None and a is not None and b < a for a, b in zip(meds, meds[1:]))
    _write(out, "convergence.json", _json({"config": cfg.echo(), "by_modes": summary, "median_decreasing": decreasing}))
    print(f"wrote {name}, convergence.json")
    for n in cfg.modes:
        print(f"n={n}: median rel_err {summary[str(n)]['median_rel_err']}")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "analyze": cmd_analyze, "simulate": cmd_simulate, "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    try:
        model, run = load_model(args.model)
        cfg = make_config(args, run)
        if cfg.lam is not None:
            model = model.with_lambda(cfg.lam)
    except (ModelFileError, InputError, TypeError) as exc:
        print(f"error: {args.model}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[cfg.command](cfg, model)
    except (ValueError, np.linalg.LinAlgError) as exc:
        _write(out, "error.json", _json({"command": cfg.command, "error": type(exc).__name__, "message": str(exc)}))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
