"""Command-line interface.

Distribution grammar (``--service``, ``--arrivals``, ``--shared``)::

    exp:rate=1            pareto:alpha=1.1        weibull:scale=1,shape=0.5
    uniform               erlang:n=4,rate=3       det:value=2.5
    hyperexp:p=0.5,0.5;mu=1,2

Markov-modulated arrivals take ``--p --lact --liact`` instead of ``--arrivals``.

Config files hold flat ``key=value`` lines; ``#`` starts a comment.  Keys may
carry a section prefix: ``arrivals.rate=3`` (likewise ``service.`` and
``shared.``, with an optional ``.kind``) builds a distribution, and
``bound.eps=0.01`` applies only to the named command.  Command-line flags
override file values.  Exit status: 0 success, 1 model error (unstable or
divergent configuration), 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds, figures
from .dist import (
    AdditiveCorrelated,
    Exponential,
    Independent,
    MarkovModulated,
    Renewal,
    fit_hyperexp_to_pareto,
    parse_distribution,
)
from .errors import ReplicationError
from .output import OUTPUT_ENV, Table, default_output_dir, render, write_table
from .sim import POLICIES, SystemConfig, simulate
from .sim.config import ALIASES
from .stability import ReplicationSpec, best_k, utilization_sweep

EXIT_OK, EXIT_MODEL, EXIT_USAGE = 0, 1, 2

DIST_SECTIONS = ("arrivals", "service", "shared")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config files


def read_config(path: str, command: str) -> dict:
    """Flat ``key=value`` file -> option values for ``command``."""
    values: dict = {}
    parts: dict = {s: {} for s in DIST_SECTIONS}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.rpartition(".")
        if section in DIST_SECTIONS:
            parts[section][name] = value
        elif section in ("", command):
            values[name.replace("-", "_")] = value
        elif section not in ("bound", "simulate", "figure", "stability", "fit"):
            raise UsageError(f"{path}:{n}: unknown section {section!r}")
    for section, fields in parts.items():
        if not fields:
            continue
        kind = fields.pop("kind", "exp")
        if section == "arrivals" and kind == "mmpp":
            for k in ("p", "lact", "liact"):
                if k in fields:
                    values[k] = fields[k]
            continue
        body = ",".join(f"{k}={v}" for k, v in fields.items())
        values[section] = f"{kind}:{body}" if body else kind
    return values


def _coerce(parser: argparse.ArgumentParser, values: dict) -> dict:
    """Apply each option's type to string values read from a file."""
    out = {}
    actions = {a.dest: a for a in parser._actions}
    for key, value in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction | argparse._StoreFalseAction):
            out[key] = str(value).lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                out[key] = action.type(value)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {value!r}") from exc
        else:
            out[key] = value
    return out


# ---------------------------------------------------------------------------
# argument parsing


def _float(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise ValueError("nan")
    return v


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--K", type=int, help="number of servers")
    p.add_argument("--k", type=int, help="replication factor (must divide K)")
    p.add_argument("--service", help="replica service law, e.g. exp:rate=1")
    p.add_argument("--arrivals", help="renewal interarrival law, e.g. exp:rate=0.5")
    p.add_argument("--p", type=_float, help="Markov arrivals: probability of leaving the active state")
    p.add_argument("--lact", type=_float, help="Markov arrivals: active-state rate")
    p.add_argument("--liact", type=_float, help="Markov arrivals: inactive-state rate")
    p.add_argument("--delta", type=_float, help="correlation degree in [0, 1]")
    p.add_argument("--shared", help="law of the shared component (defaults to --service)")
    p.add_argument("--offset", type=_float, help="replication offset for the deferred model (inf allowed)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replibound",
        description="Tail bounds and simulation for replicated parallel queueing systems.",
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="decay rate and prefactor of the response-time tail bound",
                       argument_default=argparse.SUPPRESS)
    _add_model_args(b)
    b.add_argument("--regime", choices=bounds.REGIMES, help="bound family (required)")
    b.add_argument("--eps", type=_float, help="also report the (1-eps) quantile bound")
    b.add_argument("--rate", type=_float, help="deferred model: Poisson arrival rate")
    b.add_argument("--curve", action="store_true", help="append a (sigma, bound) curve")
    b.add_argument("--out", help="write CSV here instead of standard output")
    b.add_argument("--config", help="key=value config file")

    s = sub.add_parser("simulate", help="simulate one system and summarize its response times",
                       argument_default=argparse.SUPPRESS)
    _add_model_args(s)
    s.add_argument("--policy", choices=list(POLICIES) + sorted(ALIASES), help="system to simulate")
    s.add_argument("--non-purging", dest="non_purging", action="store_true",
                   help="let sibling replicas run to completion")
    s.add_argument("--n-jobs", dest="n_jobs", type=int, help="number of jobs (default 100000)")
    s.add_argument("--seed", type=int, help="base seed (default 1)")
    s.add_argument("--warmup", type=_float, help="fraction of jobs discarded (default 0.01)")
    s.add_argument("--repetitions", type=int, help="independent runs with seeds seed, seed+1, ...")
    s.add_argument("--name", help="file name stem (default: the policy)")
    s.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./results)")
    s.add_argument("--config", help="key=value config file")

    f = sub.add_parser("figure", help="write the data tables of one figure",
                       argument_default=argparse.SUPPRESS)
    f.add_argument("name", help="one of " + ", ".join(figures.FIGURES))
    f.add_argument("--scale", choices=figures.SCALES, help="desk (default) or full")
    f.add_argument("--seed", type=int, help=f"base seed (default {figures.DEFAULT_SEED})")
    f.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./results)")
    f.add_argument("--config", help="key=value config file")

    st = sub.add_parser("stability", help="per-server utilization for every divisor k of K",
                        argument_default=argparse.SUPPRESS)
    _add_model_args(st)
    st.add_argument("--config", help="key=value config file")

    ft = sub.add_parser("fit", help="fit a hyperexponential to a Pareto tail",
                        argument_default=argparse.SUPPRESS)
    ft.add_argument("--alpha", type=_float, help="Pareto shape (> 1)")
    ft.add_argument("--phases", type=int, help="number of phases (default 8)")
    ft.add_argument("--lo", type=_float, help="left end of the fitted range (default 1)")
    ft.add_argument("--hi", type=_float, help="right end of the fitted range (default 1e4)")
    ft.add_argument("--config", help="key=value config file")
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def parse_options(argv) -> tuple[str, dict, argparse.ArgumentParser]:
    parser = build_parser()
    ns = parser.parse_args(argv)
    opts = vars(ns)
    command = opts.pop("command")
    merged = {}
    if "config" in opts:
        sp = _subparser(parser, command)
        merged.update(_coerce(sp, read_config(opts.pop("config"), command)))
    merged.update(opts)
    return command, merged, parser


# ---------------------------------------------------------------------------
# model construction


def _dist(text: str, flag: str):
    try:
        return parse_distribution(text)
    except ValueError as exc:
        raise UsageError(f"--{flag}: {exc}") from exc


def _arrivals(o: dict, default: str | None = None):
    markov = [o.get(k) for k in ("p", "lact", "liact")]
    if any(v is not None for v in markov):
        if any(v is None for v in markov):
            raise UsageError("Markov arrivals need all of --p, --lact, --liact")
        return MarkovModulated(*markov)
    text = o.get("arrivals", default)
    if text is None:
        raise UsageError("--arrivals (or --p/--lact/--liact) is required")
    return Renewal(_dist(text, "arrivals"))


def _replicas(o: dict, default: str | None = None):
    text = o.get("service", default)
    if text is None:
        raise UsageError("--service is required")
    service = _dist(text, "service")
    if "delta" in o:
        shared = _dist(o["shared"], "shared") if "shared" in o else service
        return AdditiveCorrelated(o["delta"], shared, service)
    return Independent(service)


def _require(o: dict, *names: str) -> None:
    missing = [n for n in names if n not in o]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _echo(o: dict) -> dict:
    return {k: v for k, v in sorted(o.items()) if k not in ("out", "config", "curve")}


def _emit(tables: list[Table], o: dict, out_dir: Path | None, stream, config: dict) -> list[Path]:
    paths = []
    for t in tables:
        if out_dir is None:
            stream.write(render(t, config))
        else:
            paths.append(write_table(t, out_dir, config))
    return paths


# ---------------------------------------------------------------------------
# commands


def _deferred_config(o: dict):
    _require(o, "offset")
    rate = o.get("rate")
    if rate is None:
        arr = _arrivals(o)
        if not isinstance(arr, Renewal) or not isinstance(arr.dist, Exponential):
            raise UsageError("the deferred model needs Poisson arrivals (--rate or --arrivals exp:rate=...)")
        rate = arr.dist.rate
    service = _dist(o.get("service", "exp:rate=1"), "service")
    delta = o.get("delta", 0.0)
    shared = _dist(o["shared"], "shared") if "shared" in o else service
    return bounds.DeferredConfig(o["offset"], rate, service, service, delta, shared)


def cmd_bound(o: dict, stream) -> int:
    _require(o, "regime")
    regime = o["regime"]
    if regime == "deferred":
        res = bounds.deferred_theta(_deferred_config(o))
    elif regime in ("fj", "fjr"):
        _require(o, "K")
        arr = _arrivals(o)
        if not isinstance(arr, Renewal):
            raise UsageError("fork-join bounds need renewal arrivals")
        svc = _dist(o.get("service", "exp:rate=1"), "service")
        if not isinstance(svc, Exponential):
            raise UsageError("fork-join bounds need exp service")
        fn = bounds.fj_bound if regime == "fj" else bounds.fjr_bound
        res = fn(o["K"], svc.rate, arr)
    else:
        _require(o, "K", "k")
        spec = ReplicationSpec(o["K"], o["k"], _replicas(o), _arrivals(o))
        if bounds._regime_name(spec) != regime:
            raise UsageError(f"options describe regime {bounds._regime_name(spec)!r}, not {regime!r}")
        res = bounds.theta_bound(spec)
    row = res.csv_row()
    cols = list(bounds.BoundResult.CSV_FIELDS)
    if "eps" in o and res.stable:
        row["eps"] = o["eps"]
        row["quantile"] = repr(res.quantile(o["eps"]))
        cols += ["eps", "quantile"]
    tables = [Table("bound", cols, [row], {"note": res.note} if res.note else {})]
    if o.get("curve") and res.stable:
        top = res.quantile(1e-6)
        grid = np.linspace(0.0, top, 101)
        tables.append(Table("bound_curve", ["sigma", "bound"],
                            [{"sigma": float(s), "bound": float(res.ccdf(s))} for s in grid]))
    out = Path(o["out"]) if "out" in o else None
    if out is not None and out.suffix == ".csv":
        tables[0].name = out.stem
        out = out.parent
    for p in _emit(tables, o, out, stream, _echo(o)):
        print(p, file=sys.stderr)
    if not res.stable:
        print(f"error: unstable configuration: {res.note}", file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


def cmd_simulate(o: dict, stream) -> int:
    policy = ALIASES.get(o.get("policy", "replicated_batches"), o.get("policy", "replicated_batches"))
    K = o.get("K", 2 if policy == "deferred" else 1)
    cfg = SystemConfig(
        K=K,
        k=o.get("k", K if policy in ("fork_join", "fork_join_replication", "deferred") else 1),
        arrivals=_arrivals(o),
        replicas=_replicas(o),
        policy=policy,
        purging=not o.get("non_purging", False),
        n_jobs=o.get("n_jobs", 100_000),
        seed=o.get("seed", 1),
        warmup_fraction=o.get("warmup", 0.01),
        offset=o.get("offset", 0.0),
    )
    reps = o.get("repetitions", 1)
    if reps < 1:
        raise UsageError("--repetitions must be >= 1")
    out = Path(o["out"]) if "out" in o else default_output_dir()
    stem = o.get("name", cfg.policy)
    rows = []
    for i in range(reps):
        run_cfg = cfg.replace(seed=cfg.seed + i)
        res = simulate(run_cfg)
        suffix = f"_run{i}" if reps > 1 else ""
        curve = Table(f"{stem}{suffix}_curve", ["sigma", "ccdf"], res.curve_rows())
        for p in _emit([curve], o, out, stream, run_cfg.describe()):
            print(p, file=sys.stderr)
        rows.append(res.summary_row())
    summary = Table(f"{stem}_summary", list(rows[0]), rows)
    for p in _emit([summary], o, out, stream, cfg.describe()):
        print(p, file=sys.stderr)
    stream.write(render(summary))
    return EXIT_OK


def cmd_figure(o: dict, stream) -> int:
    name = o["name"]
    if name not in figures.FIGURES:
        raise UsageError(f"unknown figure {name!r}; choose from {', '.join(figures.FIGURES)}")
    scale = o.get("scale", "desk")
    seed = o.get("seed", figures.DEFAULT_SEED)
    out = Path(o["out"]) if "out" in o else default_output_dir()
    tables = figures.build(name, scale, seed)
    for p in _emit(tables, o, out, stream, {"figure": name, "scale": scale, "seed": seed}):
        stream.write(f"{p}\n")
    return EXIT_OK


def cmd_stability(o: dict, stream) -> int:
    _require(o, "K")
    replicas = _replicas(o)
    arr = _arrivals(o)
    sweep = utilization_sweep(replicas, o["K"], arr)
    rows = [{"k": k, "utilization": u, "stable": u < 1} for k, u in sweep.items()]
    t = Table("stability", ["k", "utilization", "stable"], rows, {"best_k": best_k(replicas, o["K"])})
    stream.write(render(t, _echo(o)))
    return EXIT_OK


def cmd_fit(o: dict, stream) -> int:
    _require(o, "alpha")
    h = fit_hyperexp_to_pareto(o["alpha"], o.get("phases", 8), o.get("lo", 1.0), o.get("hi", 1e4))
    rows = [{"phase": i + 1, "weight": w, "rate": r} for i, (w, r) in enumerate(zip(h.weights, h.rates))]
    stream.write(render(Table("fit", ["phase", "weight", "rate"], rows, {"distribution": h.to_text()}), _echo(o)))
    return EXIT_OK


COMMANDS = {
    "bound": cmd_bound,
    "simulate": cmd_simulate,
    "figure": cmd_figure,
    "stability": cmd_stability,
    "fit": cmd_fit,
}


def main(argv=None, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        command, opts, parser = parse_options(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"replibound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[command](opts, stream)
    except UsageError as exc:
        print(f"replibound {command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ReplicationError as exc:
        print(f"replibound {command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except ValueError as exc:
        print(f"replibound {command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
