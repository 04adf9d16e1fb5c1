"""Command-line interface: bounds, sweeps and Monte Carlo checks, emitted as CSV or JSON."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .channels import ChannelParams, ChannelSpecError, cached_channel, is_teleportation_covariant, parse_channel_spec
from .montecarlo import simulate_erasure_protocol, simulate_multirail, simulate_teleportation_check
from .protocols import (
    BoundError,
    assisted_distillation_lower_bound,
    best_multirail_rate,
    channel_quantities,
    composition_lower_bound,
    ecpp_lower,
    epr_bounds,
    ghz_bounds,
    q_lower,
)

EXIT_OK, EXIT_IO, EXIT_PARSE, EXIT_NUMERIC = 0, 1, 2, 3
QUANTITIES = ("ic1", "ic2", "ir1", "ir2", "rains1", "rains2", "lower", "upper", "multirail",
              "assisted", "composition")
SIM_SIGMAS = 5.0
TELEPORT_TOL = 1e-8


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# formatting

def format_float(v: float) -> str:
    """12 significant digits; lowercase scientific outside ``[1e-6, 1e6)``."""
    if v == 0:
        return "0"
    if not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if abs(v) >= 1e6 or abs(v) < 1e-6:
        mant, exp = f"{v:.11e}".split("e")
        mant = mant.rstrip("0").rstrip(".")
        return f"{mant}e{int(exp)}"
    return np.format_float_positional(v, precision=12, unique=False, fractional=False, trim="-")


def canonical_json(obj) -> str:
    """Sorted keys, fixed float formatting; non-finite floats become null."""
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return format_float(v) if math.isfinite(v) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(f"{json.dumps(k)}: {canonical_json(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(canonical_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv_cell(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def render(rows: list[dict], columns: list[str], fmt: str, meta: dict | None = None) -> str:
    if fmt == "json":
        doc = dict(meta or {})
        doc["columns"] = columns
        doc["rows"] = [[row.get(c) for c in columns] for row in rows]
        return canonical_json(doc) + "\n"
    lines = [",".join(columns)]
    lines += [",".join(_csv_cell(row.get(c)) for c in columns) for row in rows]
    return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc}", EXIT_IO) from exc


# parsing helpers

def parse_grid(text: str) -> list[float]:
    """``start:stop:step``, stop included; ``start > stop`` gives an empty grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise CliError(f"grid must be start:stop:step, got {text!r}", EXIT_PARSE)
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise CliError(f"bad grid {text!r}: {exc}", EXIT_PARSE) from exc
    if step <= 0:
        raise CliError(f"grid step must be positive, got {step}", EXIT_PARSE)
    if start > stop:
        return []
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + i * step, 12) for i in range(n + 1)]


def parse_quantities(text: str | None) -> list[str]:
    if not text:
        return list(QUANTITIES)
    qs = [q.strip() for q in text.split(",") if q.strip()]
    for q in qs:
        if q not in QUANTITIES:
            raise CliError(f"unknown quantity {q!r}; choose from {', '.join(QUANTITIES)}", EXIT_PARSE)
    return qs


def _specs(texts) -> list[ChannelParams]:
    try:
        return [parse_channel_spec(t) for t in texts]
    except ChannelSpecError as exc:
        raise CliError(f"bad channel spec: {exc} (token {exc.token!r})", EXIT_PARSE) from exc


def workers() -> int:
    env = os.environ.get("ENTDIST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise CliError(f"ENTDIST_THREADS must be an integer, got {env!r}", EXIT_PARSE) from exc
    return os.cpu_count() or 1


# row evaluation

def _covariant_qubits(ch: ChannelParams) -> bool:
    c = cached_channel(ch)
    return c.in_dim <= 2 and is_teleportation_covariant(c)[0]


def evaluate_pair(ch1: ChannelParams, ch2: ChannelParams, quantities, seed: int = 0) -> dict:
    """All requested quantities for one channel pair; inapplicable ones are None."""
    row: dict = {}
    want = set(quantities)
    for i, ch in ((1, ch1), (2, ch2)):
        if want & {f"ic{i}", f"ir{i}", f"rains{i}"}:
            q = channel_quantities(ch)
            row[f"ic{i}"], row[f"ir{i}"], row[f"rains{i}"] = q.ic, q.ir, q.rains
    if want & {"lower", "upper"}:
        b = epr_bounds(ch1, ch2, seed=seed)
        row["lower"], row["upper"] = b.lower, b.upper
    if "composition" in want:
        row["composition"] = composition_lower_bound(q_lower(ch1), ecpp_lower(ch1),
                                                     q_lower(ch2), ecpp_lower(ch2)).value
    if "multirail" in want:
        row["multirail"] = (best_multirail_rate(ch1["gamma"], ch2["gamma"], ch1["T"], ch2["T"])[0]
                            if ch1.kind == ch2.kind == "gadc" else None)
    if "assisted" in want:
        row["assisted"] = (assisted_distillation_lower_bound(cached_channel(ch1), cached_channel(ch2), seed=seed)
                           if _covariant_qubits(ch1) and _covariant_qubits(ch2) else None)
    return {q: row.get(q) for q in quantities}


def _sweep_row(args):
    templates, param, value, quantities, seed = args
    chans = [t.replace(**{param: value}) if param in dict(t.values) else t for t in templates]
    row = evaluate_pair(chans[0], chans[1], quantities, seed)
    row[param] = value
    return row


# commands

def cmd_bounds(ns) -> int:
    chans = _specs(ns.channels)
    if len(chans) < 2:
        raise CliError("bounds needs at least two channel specs", EXIT_PARSE)
    try:
        b = epr_bounds(*chans, seed=ns.seed) if len(chans) == 2 else ghz_bounds(chans, seed=ns.seed)
    except BoundError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from exc
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc
    doc = {"target": "epr" if len(chans) == 2 else "ghz", "channels": [str(c) for c in chans], **b.as_dict()}
    if ns.format == "csv":
        cols = ["lower", "upper", "lower_source", "upper_source"]
        _emit(render([b.as_dict()], cols, "csv"), ns.out)
    else:
        _emit(canonical_json(doc) + "\n", ns.out)
    return EXIT_OK


def cmd_sweep(ns) -> int:
    chans = _specs(ns.channels)
    if len(chans) != 2:
        raise CliError("sweep takes exactly two channel templates", EXIT_PARSE)
    quantities = parse_quantities(ns.quantities)
    grid = parse_grid(ns.grid)
    param = ns.param
    if not any(param in dict(c.values) for c in chans):
        raise CliError(f"no channel has parameter {param!r}", EXIT_PARSE)
    for v in grid:
        for c in chans:
            if param in dict(c.values):
                try:
                    c.replace(**{param: v})
                except ValueError as exc:
                    raise CliError(f"grid value {v}: {exc}", EXIT_PARSE) from exc
    tasks = [(chans, param, v, quantities, ns.seed) for v in grid]
    n_workers = min(workers(), len(tasks))
    try:
        if n_workers > 1:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                rows = list(pool.map(_sweep_row, tasks))
        else:
            rows = [_sweep_row(t) for t in tasks]
    except BoundError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from exc
    meta = {"channels": [str(c) for c in chans], "param": param}
    _emit(render(rows, [param] + quantities, ns.format, meta), ns.out)
    return EXIT_OK


def _teleport(spec: str, n: int, seed: int, fmt: str, out) -> int:
    (ch,) = _specs([spec])
    try:
        dist = simulate_teleportation_check(ch, n, seed)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc
    ok = dist <= TELEPORT_TOL
    doc = {"protocol": "teleport-check", "channel": str(ch), "n_inputs": n, "seed": seed,
           "max_trace_distance": dist, "consistent": ok}
    if fmt == "csv":
        _emit(render([doc], ["channel", "n_inputs", "seed", "max_trace_distance", "consistent"], "csv"), out)
    else:
        _emit(canonical_json(doc) + "\n", out)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_simulate(ns) -> int:
    proto = ns.protocol
    if proto == "teleport-check":
        if not ns.channel:
            raise CliError("teleport-check needs a channel spec", EXIT_PARSE)
        return _teleport(ns.channel, ns.n or 100, ns.seed, ns.format, ns.out)
    try:
        if proto == "erasure":
            rep = simulate_erasure_protocol(ns.p1, ns.p2, ns.d, ns.n or 100000, ns.seed)
            ok = rep.within(SIM_SIGMAS)
        else:
            rep = simulate_multirail(ns.gamma1, ns.gamma2, ns.T1, ns.T2, ns.k, ns.n or 10000, ns.seed)
            ok = abs(rep.success_prob_hat - rep.analytic_success_prob) <= SIM_SIGMAS * rep.success_stderr + 1e-12
            if ns.T1 == 0 and ns.T2 == 0:
                # per-trajectory rates match the analytic rate only without thermal noise
                ok = ok and rep.within(SIM_SIGMAS)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc
    doc = {"protocol": proto, **rep.as_dict(), "consistent": ok}
    if ns.format == "csv":
        cols = list(rep.as_dict()) + ["consistent"]
        _emit(render([doc], cols, "csv"), ns.out)
    else:
        _emit(canonical_json(doc) + "\n", ns.out)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_teleport(ns) -> int:
    return _teleport(ns.channel, ns.n, ns.seed, ns.format, ns.out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="entdist", description="Entanglement distribution capacity bounds.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", parents=[common], help="bounds for two (EPR) or more (GHZ) channels")
    b.add_argument("channels", nargs="+", help="channel specs such as gadc:gamma=0.3,T=0.1")
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("sweep", parents=[common], help="sweep one parameter over a grid")
    s.add_argument("channels", nargs="+", help="two channel templates")
    s.add_argument("--param", required=True, help="parameter to sweep, set on every channel that has it")
    s.add_argument("--grid", required=True, help="start:stop:step, stop included")
    s.add_argument("--quantities", default=None, help=f"comma list from {','.join(QUANTITIES)}")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo protocol checks")
    m.add_argument("protocol", choices=("erasure", "multirail", "teleport-check"))
    m.add_argument("channel", nargs="?", help="channel spec for teleport-check")
    m.add_argument("--p1", type=float, default=0.1)
    m.add_argument("--p2", type=float, default=0.2)
    m.add_argument("--d", type=int, default=2)
    m.add_argument("--gamma1", type=float, default=0.3)
    m.add_argument("--gamma2", type=float, default=0.3)
    m.add_argument("--T1", type=float, default=0.0)
    m.add_argument("--T2", type=float, default=0.0)
    m.add_argument("--k", type=int, default=3)
    m.add_argument("--n", type=int, default=None, help="uses, blocks or inputs")
    m.set_defaults(func=cmd_simulate)

    t = sub.add_parser("teleport-check", parents=[common], help="alias for simulate teleport-check")
    t.add_argument("channel")
    t.add_argument("--n", type=int, default=100)
    t.set_defaults(func=cmd_teleport)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except CliError as exc:
        print(f"entdist: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
