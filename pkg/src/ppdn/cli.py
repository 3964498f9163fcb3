"""Command-line front end: ``ppdn estimate | simulate | compare | sweep``.

Exit codes: 0 success, 1 I/O or parse error, 2 domain error. Reports go
to stdout and are a pure function of the config and flags; timings and
diagnostics go to stderr through :mod:`logging`, whose level is read
from ``PPDN_LOG_LEVEL`` (default ``INFO``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import estimator, scheduler, simulator
from .errors import ConfigError, PPDNError
from .netmodel import NetworkConfig, dump_config, load_config, with_param
from .transient import charge_factor, connection_damping, zero_current_instant

log = logging.getLogger("ppdn")

_PREFIX = {"": 1.0, "p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3, "k": 1e3, "M": 1e6}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf)\s*([pnuµmkM]?)([A-Za-z]*)\s*$")
_UNITS = {"", "s", "F", "H", "V", "ohm", "Ohm"}


def parse_quantity(text: str, unit: str | None = None) -> float:
    """``"10ms"`` -> 0.01, ``"20u"`` -> 2e-05, ``"1e-6"`` -> 1e-06.

    An SI prefix is optional, and so is a trailing unit; when ``unit`` is
    given the trailing unit, if present, must equal it.
    """
    m = _QUANTITY.match(text)
    if not m:
        raise ValueError(f"cannot parse quantity {text!r}")
    number, prefix, suffix = m.groups()
    if suffix not in _UNITS or (unit is not None and suffix not in ("", unit)):
        raise ValueError(f"unexpected unit in {text!r}")
    return float(number) * _PREFIX[prefix]


def parse_values(text: str) -> list[float]:
    return [parse_quantity(tok) for tok in text.split(",") if tok.strip()]


def config_hash(cfg: NetworkConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()


def fmt(x) -> str:
    """Round-trippable machine representation of a number."""
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x).lower()
    if isinstance(x, (int, str)):
        return str(x)
    return format(float(x), ".17g")


@dataclass
class RunReport:
    config_hash: str
    n: int
    estimation: dict
    simulation: dict | None = None
    timings: dict = field(default_factory=dict)  # never part of stdout

    def to_dict(self):
        out = {"config": {"sha256": self.config_hash, "routers": self.n}, "estimation": self.estimation}
        if self.simulation is not None:
            out["simulation"] = self.simulation
        return out

    def flat(self) -> dict:
        """Single-row view used by the CSV format and sweeps."""
        est = self.estimation
        row = {"config_sha256": self.config_hash}
        for k, v in est["voltages"].items():
            row[f"est_{k}"] = v
        for c in est["connections"]:
            j = c["index"]
            row[f"zeta_{j}"] = c["zeta"]
            row[f"T_{j}1"] = c["payload_duration"]
            row[f"e_{j}"] = c["charge_factor"]
            row[f"B_{j}1"] = c["payload_bits"]
        row["T_s"] = est["cycle_time"]
        row["B_s"] = est["schedule"]["cycle_bits"]
        row["residual_norm"] = est["residual_norm"]
        sim = self.simulation
        if sim is not None:
            for k, v in sim["voltages"].items():
                row[f"sim_{k}"] = v
            row["v_dif"] = sim["v_dif"]
            row["rmse"] = sim["rmse"]
            row["drift"] = sim["drift"]
            row["energy_closure"] = sim["energy_closure"]
        return row


def _estimation_block(cfg: NetworkConfig, cycle_rounding: str):
    est = estimator.estimate(cfg)
    sched = scheduler.build_schedule(cfg, est, cycle_rounding=cycle_rounding)
    conns = []
    for j in range(cfg.n):
        d = connection_damping(cfg, j)
        conns.append({
            "index": j,
            "kind": d.kind.value,
            "zeta": d.zeta,
            "omega": d.omega,
            "payload_duration": zero_current_instant(d, 1),
            "charge_factor": charge_factor(d),
            "payload_bits": sched.payload_bits[j],
            "offset_bits": sched.offsets[j],
        })
    t01 = conns[0]["payload_duration"]
    block = {
        "voltages": est.to_dict(),
        "residual_norm": est.residual_norm,
        "connections": conns,
        "cycle_time": scheduler.cycle_time(cfg, est.low[0], est.high[0], t01),
        "schedule": sched.to_dict(),
    }
    return block, est, sched


def run_report(cfg: NetworkConfig, simulate: bool = False, horizon: float = 10e-3, step=None,
               probe: str = "terminal", cycle_rounding: str = "ceil", backend=None,
               trace_out=None, decimate: int = 1) -> RunReport:
    t0 = time.perf_counter()
    block, est, sched = _estimation_block(cfg, cycle_rounding)
    timings = {"estimate": time.perf_counter() - t0}
    report = RunReport(config_hash(cfg), cfg.n, block, timings=timings)
    if not simulate:
        return report
    t1 = time.perf_counter()
    trace = simulator.integrate(cfg, sched, horizon, step,
                                initial=simulator.initial_voltages(cfg, sched, est),
                                record_every=1 if trace_out else 10 ** 9, backend=backend)
    timings["simulate"] = time.perf_counter() - t1
    ssr = simulator.steady_state_report(trace, est, probe=probe)
    ledger = simulator.energy_audit(trace)
    sim = ssr.to_dict()
    sim["probe"] = probe
    sim["horizon"] = horizon
    sim["cycles"] = len(trace.cycles)
    sim["energy_closure"] = max((c.closure for c in ledger), default=0.0)
    report.simulation = sim
    if trace_out:
        with open(trace_out, "w", encoding="utf-8", newline="") as fh:
            trace.write_csv(fh, decimate)
    return report


# -- output -------------------------------------------------------------------

def _json_default(o):
    raise TypeError(f"not serializable: {type(o).__name__}")


def _finite_json(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _finite_json(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite_json(v) for v in obj]
    return obj


def to_json(obj) -> str:
    return json.dumps(_finite_json(obj), indent=2, default=_json_default) + "\n"


def to_csv(rows, columns=None) -> str:
    buf = io.StringIO()
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _voltage_table(title, est: dict, sim: dict | None) -> list[str]:
    names = list(est.keys())
    lines = [title, "           " + "".join(f"{k:>8}" for k in names)]
    lines.append("estimate   " + "".join(f"{est[k]:8.2f}" for k in names))
    if sim is not None:
        lines.append("simulated  " + "".join(f"{sim[k]:8.2f}" for k in names))
    return lines


def text_estimate(rep: RunReport) -> str:
    est = rep.estimation
    lines = [f"config sha256 {rep.config_hash}", f"routers {rep.n}", ""]
    lines += _voltage_table("storage voltages [V]", est["voltages"],
                            rep.simulation["voltages"] if rep.simulation else None)
    lines += ["", "conn  kind               zeta   T_1 [us]   e [uF]   bits  offset"]
    for c in est["connections"]:
        lines.append(f"{c['index']:>4}  {c['kind']:<17} {c['zeta']:6.3f} {c['payload_duration'] * 1e6:10.2f}"
                     f" {c['charge_factor'] * 1e6:8.2f} {c['payload_bits']:6d} {c['offset_bits']:7d}")
    sch = est["schedule"]
    lines += ["", f"cycle T_s {est['cycle_time'] * 1e6:.2f} us, {sch['cycle_bits']} bits of "
                  f"{sch['bit_time'] * 1e6:.2f} us",
              f"residual {est['residual_norm']:.1e}"]
    return "\n".join(lines) + "\n"


def text_simulation(rep: RunReport) -> str:
    sim = rep.simulation
    lines = [text_estimate(rep).rstrip("\n"), "",
             f"simulated {sim['cycles']} cycles over {sim['horizon'] * 1e3:.2f} ms ({sim['probe']} voltages)",
             f"V_dif {sim['v_dif']:.2f} V   RMSE {sim['rmse']:.2e}   drift {sim['drift']:.1e} V"
             f"   energy closure {sim['energy_closure']:.1e}"]
    return "\n".join(lines) + "\n"


_SUMMARY_COLUMNS = ("RMSE", "V_dif [V]", "T_s [us]", "T_01 [us]")


def _summary_cells(rep: RunReport):
    est, sim = rep.estimation, rep.simulation
    return (f"{sim['rmse']:.2e}", f"{sim['v_dif']:.2f}", f"{est['cycle_time'] * 1e6:.2f}",
            f"{est['connections'][0]['payload_duration'] * 1e6:.2f}")


def text_compare(rep: RunReport) -> str:
    lines = _voltage_table("storage voltages [V]", rep.estimation["voltages"], rep.simulation["voltages"])
    lines += ["", "".join(f"{h:>12}" for h in _SUMMARY_COLUMNS), "".join(f"{c:>12}" for c in _summary_cells(rep))]
    return "\n".join(lines) + "\n"


# -- commands -----------------------------------------------------------------

def _emit(rep: RunReport, fmt_name: str, text_fn) -> str:
    if fmt_name == "json":
        return to_json(rep.to_dict())
    if fmt_name == "csv":
        return to_csv([rep.flat()])
    return text_fn(rep)


def _log_timings(label, timings):
    log.info("%s timings: %s", label, ", ".join(f"{k} {v:.3f} s" for k, v in timings.items()))


def cmd_estimate(args) -> str:
    rep = run_report(load_config(args.config), cycle_rounding=args.cycle_rounding)
    _log_timings("estimate", rep.timings)
    return _emit(rep, args.format, text_estimate)


def _sim_kwargs(args):
    return dict(horizon=args.horizon, step=args.step, probe=args.probe,
                cycle_rounding=args.cycle_rounding, backend=args.backend)


def cmd_simulate(args) -> str:
    rep = run_report(load_config(args.config), simulate=True, trace_out=args.trace_out,
                     decimate=args.decimate, **_sim_kwargs(args))
    _log_timings("simulate", rep.timings)
    return _emit(rep, args.format, text_simulation)


def cmd_compare(args) -> str:
    rep = run_report(load_config(args.config), simulate=True, **_sim_kwargs(args))
    _log_timings("compare", rep.timings)
    return _emit(rep, args.format, text_compare)


def _sweep_row(job):
    cfg, param, value, kwargs = job
    row = {"param": param, "value": value}
    try:
        rep = run_report(with_param(cfg, param, value), **kwargs)
    except PPDNError as exc:
        row["status"] = type(exc).__name__
        return row, None, {}
    row["status"] = "ok"
    row.update(rep.flat())
    return row, rep, rep.timings


def cmd_sweep(args) -> tuple[str, int]:
    cfg = load_config(args.config)
    values = parse_values(args.values)
    with_param(cfg, args.param, values[0] if values else 1.0)  # reject bad paths up front
    kwargs = _sim_kwargs(args)
    kwargs["simulate"] = not args.estimate_only
    jobs = [(cfg, args.param, v, kwargs) for v in values]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_row, jobs))
    else:
        results = [_sweep_row(j) for j in jobs]
    for (row, _, timings) in results:
        if timings:
            _log_timings(f"{row['param']}={fmt_short(row['value'])}", timings)
    failed = any(r["status"] != "ok" for r, _, _ in results)
    rows = [r for r, _, _ in results]
    columns = ["param", "value", "status"]
    for r in rows:
        for k in r:
            if k not in columns:
                columns.append(k)
    if args.format == "json":
        out = to_json([{k: r[k] for k in columns if k in r} for r in rows])
    elif args.format == "text":
        out = _sweep_text(results, args.param, not args.estimate_only)
    else:
        out = to_csv(rows, columns)
    return out, 2 if failed else 0


def _sweep_text(results, param, simulated) -> str:
    head = ("value",) + (_SUMMARY_COLUMNS if simulated else ("T_s [us]", "T_01 [us]"))
    lines = [f"sweep over {param}", "".join(f"{h:>12}" for h in head)]
    for row, rep, _ in results:
        if rep is None:
            lines.append(f"{fmt_short(row['value']):>12}  {row['status']}")
            continue
        cells = _summary_cells(rep) if simulated else (
            f"{rep.estimation['cycle_time'] * 1e6:.2f}",
            f"{rep.estimation['connections'][0]['payload_duration'] * 1e6:.2f}")
        lines.append(f"{fmt_short(row['value']):>12}" + "".join(f"{c:>12}" for c in cells))
    return "\n".join(lines) + "\n"


def fmt_short(x) -> str:
    return format(float(x), ".4g")


# -- entry point --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are parse errors: exit code 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _duration(text):
    try:
        return parse_quantity(text, "s")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ppdn", description="Steady-state estimation and simulation of cascaded power packet networks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, formats=("text", "csv", "json"), default="text"):
        sp.add_argument("--config", required=True, help="network config (TOML)")
        sp.add_argument("--format", choices=formats, default=default)
        sp.add_argument("--cycle-rounding", choices=("ceil", "floor"), default="ceil",
                        help="bit quantization of the switching cycle (default: ceil)")

    def sim_flags(sp):
        sp.add_argument("--horizon", type=_duration, default=10e-3, help="simulated time, e.g. 10ms (default)")
        sp.add_argument("--step", type=_duration, default=None, help="integration step (default: bit time / 50)")
        sp.add_argument("--probe", choices=simulator.PROBES, default="terminal",
                        help="router voltage to measure (default: terminal)")
        sp.add_argument("--backend", choices=("cython", "python"), default=None,
                        help="integration kernel (default: compiled when available)")

    sp = sub.add_parser("estimate", help="solve the steady-state system")
    common(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("simulate", help="simulate and extract the periodic steady state")
    common(sp)
    sim_flags(sp)
    sp.add_argument("--trace-out", default=None, help="write the waveform CSV here")
    sp.add_argument("--decimate", type=int, default=1, help="keep every k-th trace sample")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="estimate vs simulation, RMSE and ripple")
    common(sp)
    sim_flags(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="repeat a run over values of one parameter")
    common(sp, default="csv")
    sim_flags(sp)
    sp.add_argument("--param", required=True, help="parameter path, e.g. capacitance or routers.1.esr")
    sp.add_argument("--values", required=True, help="comma-separated values, SI prefixes allowed (1u,10u)")
    sp.add_argument("--estimate-only", action="store_true", help="skip the simulation")
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.set_defaults(func=cmd_sweep)
    return p


def _setup_logging():
    level = os.environ.get("PPDN_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    try:
        result = args.func(args)
    except ConfigError as exc:
        print(f"ppdn: config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"ppdn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except PPDNError as exc:
        print(f"ppdn: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    code = 0
    if isinstance(result, tuple):
        result, code = result
    sys.stdout.write(result)
    return code


if __name__ == "__main__":
    sys.exit(main())
