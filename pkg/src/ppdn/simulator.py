"""Switched linear state-space simulation of the cascade.

The state is ``(v_0, ..., v_{N-1}, i_0, ..., i_{N-1})``: capacitor
voltages of every router and the current of every line, positive towards
the load. Each connection is in one of four modes:

``OFF``
    both switches open, line current pinned at zero;
``ON``
    both switches closed, the line couples the two storages (or the
    source and router ``N - 1``);
``FREEWHEEL_FWD``
    switches just opened with forward current: the current continues
    into the receiver through the port diode of the sender side
    (drop ``V_f``, resistance ``r_on + r_line``) until it reaches zero;
``FREEWHEEL_REV``
    the mirror image for reverse current.

Each storage capacitor has its ESR in series; the load hangs on router 0's
terminals and a pulldown resistor sits on every port whose switch is
closed. Within a mode the system is affine, ``dx/dt = A x + b``, and is
integrated with classic fixed-step RK4; switch edges are hit exactly
because every segment between edges is divided into equal steps.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import estimator as _estimator
from .errors import Diverged, InsufficientCycles
from .kernel import STATUS_CROSSED, STATUS_NONFINITE, get_backend
from .netmodel import NetworkConfig
from .scheduler import Schedule, build_schedule
from .trace import ENERGY_CHANNELS, CycleSummary, SimTrace
from .transient import connection_damping, zero_current_instant

#: Default step as a fraction of the bit time.
STEPS_PER_BIT = 50

_CH = {name: k for k, name in enumerate(ENERGY_CHANNELS)}


class Mode(enum.IntEnum):
    OFF = 0
    ON = 1
    FREEWHEEL_FWD = 2
    FREEWHEEL_REV = 3


def _modes(switch_states):
    out = []
    for s in switch_states:
        if isinstance(s, (bool, np.bool_)):
            out.append(Mode.ON if s else Mode.OFF)
        else:
            out.append(Mode(s))
    return tuple(out)


@dataclass(frozen=True)
class _System:
    A: np.ndarray
    b: np.ndarray
    chan: np.ndarray
    pw: np.ndarray
    w: np.ndarray
    a: np.ndarray
    c0: np.ndarray
    U: np.ndarray  # terminal voltage of every router: U[:, :nx] @ x + U[:, nx]


def _affine_system(cfg: NetworkConfig, modes) -> _System:
    """Affine dynamics and power terms for one combination of modes.

    Linear expressions are rows of length ``2N + 1``: coefficients on the
    state followed by a constant.
    """
    n = cfg.n
    nx = 2 * n
    E = cfg.source_voltage
    vf = cfg.diode_forward_voltage
    g_load = 0.0 if math.isinf(cfg.load_resistance) else 1.0 / cfg.load_resistance
    g_pd = 0.0 if math.isinf(cfg.pulldown_resistance) else 1.0 / cfg.pulldown_resistance

    def unit(k):
        e = np.zeros(nx + 1)
        e[k] = 1.0
        return e

    const = np.zeros(nx + 1)
    const[nx] = 1.0

    def cur(j):
        return unit(n + j)

    # terminal node voltage and capacitor current of every router
    u, i_cap, ports = [], [], []
    for j in range(n):
        inj = np.zeros(nx + 1)
        if modes[j] in (Mode.ON, Mode.FREEWHEEL_FWD):
            inj += cur(j)
        if j >= 1 and modes[j - 1] in (Mode.ON, Mode.FREEWHEEL_REV):
            inj -= cur(j - 1)
        nport = int(modes[j] == Mode.ON) + int(j >= 1 and modes[j - 1] == Mode.ON)
        g = (g_load if j == 0 else 0.0) + g_pd * nport
        r = cfg.routers[j].esr
        uj = (unit(j) + r * inj) / (1.0 + r * g)
        u.append(uj)
        i_cap.append(inj - g * uj)
        ports.append(nport)
    u_src = E * const

    A = np.zeros((nx, nx))
    b = np.zeros(nx)
    terms = []  # (channel, power, weight, expr)
    for j in range(n):
        C = cfg.routers[j].capacitance
        A[j] = i_cap[j][:nx] / C
        b[j] = i_cap[j][nx] / C
        if cfg.routers[j].esr > 0:
            terms.append((_CH["resistive"], 2, cfg.routers[j].esr, i_cap[j]))
        if ports[j] and g_pd > 0:
            terms.append((_CH["pulldown"], 2, g_pd * ports[j], u[j]))
    if g_load > 0:
        terms.append((_CH["load"], 2, g_load, u[0]))

    for j, conn in enumerate(cfg.connections):
        mode = modes[j]
        if mode == Mode.OFF:
            continue
        upper = u[j + 1] if j + 1 < n else u_src
        if mode == Mode.ON:
            r_loop = 2.0 * conn.switch_on_resistance + conn.line_resistance
            drive = upper - u[j]
        elif mode == Mode.FREEWHEEL_FWD:
            r_loop = conn.switch_on_resistance + conn.line_resistance
            drive = -vf * const - u[j]
            terms.append((_CH["diode"], 1, vf, cur(j)))
        else:
            r_loop = conn.switch_on_resistance + conn.line_resistance
            drive = upper + vf * const
            terms.append((_CH["diode"], 1, -vf, cur(j)))
        row = (drive - r_loop * cur(j)) / conn.inductance
        A[n + j] = row[:nx]
        b[n + j] = row[nx]
        if r_loop > 0:
            terms.append((_CH["resistive"], 2, r_loop, cur(j)))
        if j == n - 1 and mode in (Mode.ON, Mode.FREEWHEEL_REV):
            terms.append((_CH["source"], 1, E, cur(j)))

    if terms:
        chan = np.array([t[0] for t in terms], dtype=np.int64)
        pw = np.array([t[1] for t in terms], dtype=np.int64)
        w = np.array([t[2] for t in terms], dtype=float)
        a = np.ascontiguousarray(np.array([t[3][:nx] for t in terms]))
        c0 = np.array([t[3][nx] for t in terms], dtype=float)
    else:
        chan = pw = np.zeros(0, dtype=np.int64)
        w = c0 = np.zeros(0)
        a = np.zeros((0, nx))
    return _System(np.ascontiguousarray(A), b, chan, pw, w, a, c0, np.array(u))


def build_state_matrix(cfg: NetworkConfig, switch_states) -> np.ndarray:
    """State matrix ``A`` of ``dx/dt = A x + b`` for the given switch states.

    ``switch_states`` holds one entry per connection: a bool (closed or
    open) or a :class:`Mode`.
    """
    return _affine_system(cfg, _modes(switch_states)).A


def input_vector(cfg: NetworkConfig, switch_states) -> np.ndarray:
    """Constant term ``b`` (source voltage and diode drops)."""
    return _affine_system(cfg, _modes(switch_states)).b


def stored_energy(cfg: NetworkConfig, voltages, currents) -> float:
    caps = np.array(cfg.capacitances())
    inds = np.array([c.inductance for c in cfg.connections])
    return float(0.5 * np.sum(caps * np.asarray(voltages) ** 2) + 0.5 * np.sum(inds * np.asarray(currents) ** 2))


def initial_voltages(cfg: NetworkConfig, schedule: Schedule, estimate) -> np.ndarray:
    """Storage voltages at ``t = 0`` consistent with ``estimate`` and ``schedule``.

    Routers holding a fixed value between payloads start at ``v_jH`` when
    their last event before the cycle boundary was a receive, else at
    ``v_jL``; router 0 starts on its load discharge curve. Explicit
    ``initial_voltage`` entries in the config take precedence.
    """
    n = cfg.n
    out = np.empty(n)
    tau0 = cfg.routers[0].capacitance * (cfg.load_resistance + cfg.routers[0].esr)
    t01 = zero_current_instant(connection_damping(cfg, 0), 1)
    end0 = schedule.offsets[0] * schedule.bit_time + t01
    out[0] = estimate.high[0] * math.exp(-max(schedule.cycle_time - end0, 0.0) / tau0)
    for j in range(1, n):
        received_last = schedule.offsets[j] > schedule.offsets[j - 1]
        out[j] = estimate.high[j] if received_last else estimate.low[j]
    for j, r in enumerate(cfg.routers):
        if r.initial_voltage is not None:
            out[j] = r.initial_voltage
    return out


def _cycle_events(schedule: Schedule):
    """Sorted ``(bit, connection, closes)`` edges within one cycle."""
    ev = []
    for j in range(schedule.n):
        start = schedule.offsets[j]
        stop = start + schedule.payload_bits[j]
        ev.append((start, j, True))
        if stop < schedule.cycle_bits:
            ev.append((stop, j, False))
        else:
            ev.append((stop - schedule.cycle_bits, j, False))
    ev.sort(key=lambda e: (e[0], e[2]))  # openings before closings at a shared edge
    return ev


def integrate(cfg: NetworkConfig, schedule: Schedule, horizon: float, step: float | None = None,
              initial=None, record_every: int = 1, backend: str | None = None) -> SimTrace:
    """Simulate ``horizon`` seconds of the switched network.

    ``initial`` gives the storage voltages at ``t = 0`` (defaults to each
    router's configured ``initial_voltage``, else 0). Line currents start
    at zero. Every ``record_every``-th integration step is kept in the
    returned trace; per-cycle summaries always use every step.
    """
    n = cfg.n
    nx = 2 * n
    t_u = schedule.bit_time
    if step is None:
        step = t_u / STEPS_PER_BIT
    if not 0 < step <= t_u / STEPS_PER_BIT * (1 + 1e-12):
        raise ValueError(f"step must be in (0, bit_time/{STEPS_PER_BIT}], got {step!r}")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if schedule.n != n:
        raise ValueError(f"schedule has {schedule.n} connections, network has {n}")
    _, run_segment = get_backend(backend)

    x = np.zeros(nx + len(ENERGY_CHANNELS))
    if initial is None:
        initial = [r.initial_voltage or 0.0 for r in cfg.routers]
    x[:n] = np.asarray(initial, dtype=float)

    modes = [Mode.OFF] * n
    # a window that wraps the cycle boundary is conducting at t = 0
    for j in range(n):
        if schedule.offsets[j] + schedule.payload_bits[j] > schedule.cycle_bits:
            modes[j] = Mode.ON
    cache = {}

    def system():
        key = tuple(modes)
        if key not in cache:
            cache[key] = _affine_system(cfg, key)
        return cache[key]

    times = [np.array([0.0])]
    samples = [x[:nx].copy()[None, :]]
    counter = 0
    cycles = []
    events = _cycle_events(schedule)
    cycle_len = schedule.cycle_bits
    total_bits = horizon / t_u

    # running per-cycle extrema of terminal (u) and capacitor (c) voltages
    u_start = system().U @ np.append(x[:nx], 1.0)
    cyc_hi, cyc_lo = u_start.copy(), u_start.copy()
    cap_hi, cap_lo = x[:n].copy(), x[:n].copy()
    cyc_acc = x[nx:].copy()
    cyc_stored = stored_energy(cfg, x[:n], x[n:nx])

    def advance(duration, t0):
        """Integrate ``duration`` seconds from ``t0`` in the current modes."""
        nonlocal counter
        t = t0
        remaining = duration
        while remaining > 0:
            nsteps = max(1, int(math.ceil(remaining / step - 1e-9)))
            h = remaining / nsteps
            sysm = system()
            # the terminal voltage can jump at an edge: include the segment start
            _extrema(sysm.U @ np.append(x[:nx], 1.0), None)
            watch = np.array([n + j for j in range(n)
                              if modes[j] in (Mode.FREEWHEEL_FWD, Mode.FREEWHEEL_REV)], dtype=np.int64)
            out = np.empty((nsteps, nx))
            k, status, theta, which = run_segment(sysm.A, sysm.b, sysm.chan, sysm.pw, sysm.w, sysm.a,
                                                  sysm.c0, x, h, nsteps, watch, out)
            if status == STATUS_NONFINITE:
                raise Diverged(t + k * h)
            seg_t = t + h * np.arange(1, k + 1)
            _record(seg_t, out[:k], sysm)
            t += k * h
            remaining -= k * h
            if status == STATUS_CROSSED:
                hp = theta * h
                if hp > 0:
                    part = np.empty((1, nx))
                    k2, status2, _, _ = run_segment(sysm.A, sysm.b, sysm.chan, sysm.pw, sysm.w, sysm.a,
                                                    sysm.c0, x, hp, 1, np.zeros(0, dtype=np.int64), part)
                    if status2 == STATUS_NONFINITE:
                        raise Diverged(t + hp)
                    x[which] = 0.0
                    part[0, which] = 0.0
                    t += hp
                    remaining -= hp
                    _record(np.array([t]), part, sysm)
                else:
                    x[which] = 0.0
                modes[which - n] = Mode.OFF
            else:
                remaining = 0.0
        return t

    def _extrema(u, caps):
        np.maximum(cyc_hi, u, out=cyc_hi)
        np.minimum(cyc_lo, u, out=cyc_lo)
        if caps is not None:
            np.maximum(cap_hi, caps, out=cap_hi)
            np.minimum(cap_lo, caps, out=cap_lo)

    def _record(ts, block, sysm):
        nonlocal counter
        if len(ts) == 0:
            return
        u = block @ sysm.U[:, :nx].T + sysm.U[:, nx]
        _extrema(u.max(axis=0), block[:, :n].max(axis=0))
        _extrema(u.min(axis=0), block[:, :n].min(axis=0))
        idx = np.arange(counter + 1, counter + 1 + len(ts))
        keep = (idx % record_every) == 0
        if np.any(keep):
            times.append(ts[keep])
            samples.append(block[keep])
        counter += len(ts)

    t = 0.0
    cycle = 0
    done = False
    while not done:
        base = cycle * cycle_len
        for bit, j, closes in events:
            abs_bits = base + bit
            if abs_bits > total_bits + 1e-9:
                done = True
                break
            t_event = abs_bits * t_u
            if t_event > t:
                t = advance(t_event - t, t)
            if closes:
                modes[j] = Mode.ON
            elif modes[j] == Mode.ON:
                i_now = x[n + j]
                modes[j] = Mode.FREEWHEEL_FWD if i_now > 0 else Mode.FREEWHEEL_REV if i_now < 0 else Mode.OFF
        if done:
            break
        t_end = (base + cycle_len) * t_u
        if (base + cycle_len) > total_bits + 1e-9:
            break
        if t_end > t:
            t = advance(t_end - t, t)
        stored = stored_energy(cfg, x[:n], x[n:nx])
        acc = x[nx:] - cyc_acc
        cycles.append(CycleSummary(
            index=cycle,
            start=base * t_u,
            stop=t_end,
            v_high=cyc_hi.copy(),
            v_low=cyc_lo.copy(),
            cap_high=cap_hi.copy(),
            cap_low=cap_lo.copy(),
            energy={name: float(acc[k]) for k, name in enumerate(ENERGY_CHANNELS)},
            stored_start=cyc_stored,
            stored_stop=stored,
        ))
        u_now = system().U @ np.append(x[:nx], 1.0)
        cyc_hi[:], cyc_lo[:] = u_now, u_now
        cap_hi[:], cap_lo[:] = x[:n], x[:n]
        cyc_acc = x[nx:].copy()
        cyc_stored = stored
        cycle += 1
    if horizon > t:
        t = advance(horizon - t, t)

    all_t = np.concatenate(times)
    all_x = np.concatenate(samples)
    trace = SimTrace(all_t, all_x[:, :n], all_x[:, n:], cycles, schedule)
    trace.config = cfg
    trace.final_state = x[:nx].copy()
    return trace


@dataclass(frozen=True)
class SteadyStateReport:
    v_high: np.ndarray
    v_low: np.ndarray
    v_dif: float
    rmse_vs_estimate: float
    drift: float       # largest change of any extremum between the two final cycles
    cycles_used: int

    def vector(self):
        out = np.empty(2 * len(self.v_low))
        out[0::2] = self.v_low
        out[1::2] = self.v_high
        return out

    def to_dict(self):
        n = len(self.v_low)
        names = [f"v{j}{hl}" for j in range(n) for hl in ("L", "H")]
        return {
            "voltages": dict(zip(names, (float(v) for v in self.vector()))),
            "v_dif": float(self.v_dif),
            "rmse": float(self.rmse_vs_estimate),
            "drift": float(self.drift),
            "cycles_used": self.cycles_used,
        }


PROBES = ("terminal", "capacitor")


def _extrema_of(c, probe):
    if probe == "terminal":
        return c.v_high, c.v_low
    if probe == "capacitor":
        return c.cap_high, c.cap_low
    raise ValueError(f"probe must be one of {PROBES}, got {probe!r}")


def steady_state_report(trace: SimTrace, estimate, source_voltage: float | None = None,
                        cycles: int = 2, probe: str = "terminal") -> SteadyStateReport:
    """Average the last ``cycles`` per-cycle extrema and compare with ``estimate``.

    ``probe`` selects which router voltage is measured: ``"terminal"``
    (the storage as seen from outside, including its ESR drop) or
    ``"capacitor"`` (the ideal capacitor behind the ESR).
    """
    if len(trace.cycles) < max(cycles, 2):
        raise InsufficientCycles(
            f"need at least {max(cycles, 2)} complete cycles, trace has {len(trace.cycles)}"
        )
    if source_voltage is None:
        source_voltage = trace.config.source_voltage
    ext = [_extrema_of(c, probe) for c in trace.cycles]
    last = ext[-cycles:]
    hi = np.mean([e[0] for e in last], axis=0)
    lo = np.mean([e[1] for e in last], axis=0)
    (ah, al), (bh, bl) = ext[-2], ext[-1]
    drift = float(max(np.max(np.abs(ah - bh)), np.max(np.abs(al - bl))))
    sim = np.empty(2 * len(lo))
    sim[0::2], sim[1::2] = lo, hi
    est = estimate.vector()
    rmse = float(np.sqrt(np.mean(((sim - est) / source_voltage) ** 2)))
    return SteadyStateReport(hi, lo, float(np.mean(hi - lo)), rmse, drift, cycles)


@dataclass(frozen=True)
class CycleLedger:
    index: int
    source: float
    delta_stored: float
    resistive: float
    load: float
    diode: float
    pulldown: float

    @property
    def residual(self) -> float:
        return self.source - (self.delta_stored + self.resistive + self.load + self.diode + self.pulldown)

    @property
    def closure(self) -> float:
        """``|residual|`` relative to the source energy (or the largest flow when idle)."""
        scale = abs(self.source) or max(abs(self.delta_stored),
                                        self.resistive + self.load + self.diode + self.pulldown)
        return 0.0 if scale == 0 else abs(self.residual) / scale


def energy_audit(trace: SimTrace):
    """Per-cycle energy ledger of a simulated trace."""
    return [
        CycleLedger(
            index=c.index,
            source=c.energy["source"],
            delta_stored=c.stored_stop - c.stored_start,
            resistive=c.energy["resistive"],
            load=c.energy["load"],
            diode=c.energy["diode"],
            pulldown=c.energy["pulldown"],
        )
        for c in trace.cycles
    ]


def simulate(cfg: NetworkConfig, horizon: float = 10e-3, step: float | None = None,
             schedule: Schedule | None = None, estimate=None, record_every: int = 1,
             backend: str | None = None):
    """Estimate, schedule and simulate ``cfg``; returns ``(trace, schedule, estimate)``.

    Initial storage voltages come from the estimate, as the reference
    comparison prescribes.
    """
    est = _estimator.estimate(cfg) if estimate is None else estimate
    sched = build_schedule(cfg, est) if schedule is None else schedule
    trace = integrate(cfg, sched, horizon, step, initial=initial_voltages(cfg, sched, est),
                      record_every=record_every, backend=backend)
    return trace, sched, est
