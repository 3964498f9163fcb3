"""Time-series containers shared by the simulator and the analytic reconstruction."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

#: Energy channels integrated alongside the circuit state, in kernel order.
ENERGY_CHANNELS = ("source", "resistive", "load", "diode", "pulldown")


@dataclass(frozen=True)
class CircuitState:
    time: float
    voltages: np.ndarray  # capacitor voltage of routers 0..N-1
    currents: np.ndarray  # line current of connections 0..N-1, positive towards the load


@dataclass
class CycleSummary:
    index: int
    start: float
    stop: float
    v_high: np.ndarray  # extrema of the router terminal voltage (capacitor + ESR drop)
    v_low: np.ndarray
    # energy delivered/dissipated during the cycle, keyed by ENERGY_CHANNELS
    energy: dict = field(default_factory=dict)
    stored_start: float = 0.0  # capacitor + inductor energy at cycle start
    stored_stop: float = 0.0
    cap_high: np.ndarray | None = None  # extrema of the ideal capacitor voltage
    cap_low: np.ndarray | None = None


@dataclass
class SimTrace:
    times: np.ndarray
    voltages: np.ndarray  # shape (samples, N)
    currents: np.ndarray  # shape (samples, N)
    cycles: list = field(default_factory=list)
    schedule: object = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.voltages = np.asarray(self.voltages, dtype=float)
        self.currents = np.asarray(self.currents, dtype=float)
        if self.times.ndim != 1 or len(self.voltages) != len(self.times) or len(self.currents) != len(self.times):
            raise ValueError("times, voltages and currents must have the same number of samples")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def n(self) -> int:
        return self.voltages.shape[1]

    def __len__(self):
        return len(self.times)

    def state(self, k) -> CircuitState:
        return CircuitState(float(self.times[k]), self.voltages[k].copy(), self.currents[k].copy())

    def header(self):
        return ["t"] + [f"v_{j}" for j in range(self.n)] + [f"i_{j}" for j in range(self.n)]

    def write_csv(self, fh, decimate: int = 1):
        """Write ``t,v_0..v_{N-1},i_0..i_{N-1}`` rows, keeping every ``decimate``-th sample."""
        if decimate < 1:
            raise ValueError("decimate must be >= 1")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.header())
        idx = np.arange(0, len(self.times), decimate)
        if len(self.times) and idx[-1] != len(self.times) - 1:
            idx = np.append(idx, len(self.times) - 1)
        for k in idx:
            w.writerow([repr(float(self.times[k]))]
                       + [repr(float(v)) for v in self.voltages[k]]
                       + [repr(float(i)) for i in self.currents[k]])

    def to_csv(self, decimate: int = 1) -> str:
        buf = io.StringIO()
        self.write_csv(buf, decimate)
        return buf.getvalue()

    def cycle_dicts(self):
        return [
            {
                "index": c.index,
                "start": c.start,
                "stop": c.stop,
                "v_high": [float(v) for v in c.v_high],
                "v_low": [float(v) for v in c.v_low],
                "energy": {k: float(v) for k, v in c.energy.items()},
            }
            for c in self.cycles
        ]


def read_csv(text: str) -> SimTrace:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    n = (len(header) - 1) // 2
    data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(-1, 2 * n + 1)
    return SimTrace(data[:, 0], data[:, 1:n + 1], data[:, n + 1:])
