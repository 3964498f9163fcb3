"""Periodic-steady-state storage voltages from a single linear solve.

At periodic steady state every router swings between a low voltage
``v_jL`` and a high voltage ``v_jH``. Each underdamped payload maps the
pre-payload voltages linearly onto the post-payload voltages, so the 2N
unknowns satisfy a 2N x 2N linear system. Unknown ordering is
``(v_0L, v_0H, v_1L, v_1H, ..., v_{N-1,L}, v_{N-1,H})``; row 0 pins
``v_0L`` to the configured target, rows ``2j+1`` and ``2j+2`` hold the
receiver and sender relations of router connection ``j``, and the last
row holds the source connection.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .errors import NotUnderdamped, ScheduleOverlap, SingularSystem
from .netmodel import NetworkConfig, with_param
from .trace import CycleSummary, SimTrace
from .transient import (
    charge_factor,
    connection_damping,
    payload_charge,
    payload_current,
    zero_current_instant,
)

PIVOT_TOLERANCE = 1e-12
RESIDUAL_LIMIT = 1e-10


@dataclass(frozen=True)
class SteadyStateSystem:
    matrix: np.ndarray
    rhs: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 2


@dataclass(frozen=True)
class SteadyStateVoltages:
    low: np.ndarray
    high: np.ndarray
    residual_norm: float = 0.0

    @property
    def n(self) -> int:
        return len(self.low)

    def vector(self) -> np.ndarray:
        out = np.empty(2 * self.n)
        out[0::2] = self.low
        out[1::2] = self.high
        return out

    @classmethod
    def from_vector(cls, v, residual_norm=0.0):
        v = np.asarray(v, dtype=float)
        return cls(v[0::2].copy(), v[1::2].copy(), residual_norm)

    def names(self):
        return [f"v{j}{hl}" for j in range(self.n) for hl in ("L", "H")]

    def to_dict(self):
        return dict(zip(self.names(), (float(x) for x in self.vector())))

    def ripple(self) -> np.ndarray:
        return self.high - self.low


def assemble(cfg: NetworkConfig) -> SteadyStateSystem:
    n = cfg.n
    dampings = [connection_damping(cfg, j) for j in range(n)]
    bad = [(j, d.zeta) for j, d in enumerate(dampings) if not d.underdamped]
    if bad:
        raise NotUnderdamped(bad)
    caps = cfg.capacitances()
    M = np.zeros((2 * n, 2 * n))
    rhs = np.zeros(2 * n)
    M[0, 0] = 1.0
    rhs[0] = cfg.v0_low_target
    for j in range(n - 1):
        e = charge_factor(dampings[j])
        recv, send = e / caps[j], e / caps[j + 1]
        jl, jh, kl, kh = 2 * j, 2 * j + 1, 2 * j + 2, 2 * j + 3
        # receiver: v_jH = v_jL + (v_{j+1,H} - v_jL) e_j / C_j
        M[2 * j + 1, jh] = 1.0
        M[2 * j + 1, jl] = -1.0 + recv
        M[2 * j + 1, kh] = -recv
        # sender: v_{j+1,L} = v_{j+1,H} - (v_{j+1,H} - v_jL) e_j / C_{j+1}
        M[2 * j + 2, kl] = 1.0
        M[2 * j + 2, kh] = -1.0 + send
        M[2 * j + 2, jl] = -send
    # source: v_{N-1,H} = v_{N-1,L} + (E - v_{N-1,L}) e_{N-1} / C_{N-1}
    s = charge_factor(dampings[n - 1]) / caps[n - 1]
    M[2 * n - 1, 2 * n - 1] = 1.0
    M[2 * n - 1, 2 * n - 2] = -1.0 + s
    rhs[2 * n - 1] = s * cfg.source_voltage
    return SteadyStateSystem(M, rhs)


def solve(system: SteadyStateSystem) -> SteadyStateVoltages:
    M, rhs = system.matrix, system.rhs
    scale = np.max(np.sum(np.abs(M), axis=1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if np.min(pivots) < PIVOT_TOLERANCE * scale:
        raise SingularSystem(
            f"smallest pivot {np.min(pivots):.3g} below {PIVOT_TOLERANCE:g} x {scale:.3g}"
        )
    v = scipy.linalg.lu_solve((lu, piv), rhs)
    residual = np.max(np.abs(M @ v - rhs)) / np.max(np.abs(rhs))
    if not residual < RESIDUAL_LIMIT:
        raise SingularSystem(f"relative residual {residual:.3g} exceeds {RESIDUAL_LIMIT:g}")
    return SteadyStateVoltages.from_vector(v, float(residual))


def estimate(cfg: NetworkConfig) -> SteadyStateVoltages:
    return solve(assemble(cfg))


def calibrate_switch_resistance(cfg: NetworkConfig, target, bounds=(0.0, 0.2)) -> float:
    """Per-switch on-resistance whose estimate best matches ``target``.

    ``target`` is a 2N vector in the unknown ordering; the fit minimizes
    the RMS voltage error over all entries.
    """
    target = np.asarray(target, dtype=float)

    def cost(r_on):
        try:
            v = estimate(with_param(cfg, "switch_on_resistance", r_on)).vector()
        except NotUnderdamped:
            return math.inf
        return float(np.sqrt(np.mean((v - target) ** 2)))

    res = minimize_scalar(cost, bounds=bounds, method="bounded", options={"xatol": 1e-7})
    return float(res.x)


def reconstruct_waveforms(cfg: NetworkConfig, v: SteadyStateVoltages, schedule, cycles: int, step: float) -> SimTrace:
    """Piecewise-analytic waveforms over ``cycles`` switching cycles.

    During connection ``j``'s payload the two storages follow the closed
    forms seeded at ``(v_jL, v_{j+1,H})``; outside payloads router 0 decays
    through the load and every other router holds its last value.
    """
    n = cfg.n
    caps = cfg.capacitances()
    dampings = [connection_damping(cfg, j) for j in range(n)]
    bad = [(j, d.zeta) for j, d in enumerate(dampings) if not d.underdamped]
    if bad:
        raise NotUnderdamped(bad)
    durations = [zero_current_instant(d, 1) for d in dampings]
    period = schedule.cycle_time
    starts = [o * schedule.bit_time for o in schedule.offsets]

    order = sorted(range(n), key=lambda j: starts[j])
    for a, b in zip(order, order[1:] + order[:1]):
        end = starts[a] + durations[a]
        nxt = starts[b] + (period if b == order[0] else 0.0)
        if n > 1 and end > nxt:
            raise ScheduleOverlap(f"analytic payload of connection {a} runs into connection {b}")
        if n == 1 and durations[a] > period:
            raise ScheduleOverlap("analytic payload longer than the cycle")

    count = int(math.floor(cycles * period / step + 1e-9)) + 1 if cycles > 0 else 1
    t = np.arange(count) * step
    phase = np.mod(t, period)
    tau0 = caps[0] * (cfg.load_resistance + cfg.routers[0].esr)

    gaps = [(v.high[j + 1] if j + 1 < n else cfg.source_voltage) - v.low[j] for j in range(n)]
    volts = np.empty((count, n))
    amps = np.zeros((count, n))
    for j in range(n):
        since = np.mod(phase - starts[j], period)
        live = since < durations[j]
        amps[live, j] = payload_current(dampings[j], gaps[j], since[live])

    for j in range(n):
        # events touching router j: receive on connection j, send on connection j-1
        since_recv = np.mod(phase - starts[j], period)
        recv_q = payload_charge(dampings[j], gaps[j], np.minimum(since_recv, durations[j]))
        out = v.low[j] + recv_q / caps[j]
        if j == 0:
            after = since_recv >= durations[0]
            out[after] = v.high[0] * np.exp(-(since_recv[after] - durations[0]) / tau0)
        else:
            since_send = np.mod(phase - starts[j - 1], period)
            send_q = payload_charge(dampings[j - 1], gaps[j - 1], np.minimum(since_send, durations[j - 1]))
            sending = since_send < since_recv
            out[sending] = v.high[j] - send_q[sending] / caps[j]
        volts[:, j] = out

    summaries = [
        CycleSummary(index=c, start=c * period, stop=(c + 1) * period,
                     v_high=v.high.copy(), v_low=v.low.copy())
        for c in range(max(cycles, 0))
    ]
    return SimTrace(t, volts, amps, summaries, schedule)
