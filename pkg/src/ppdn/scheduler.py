"""Time-division multiplexed switching schedules.

All times inside a :class:`Schedule` are integer bit counts; multiply by
``bit_time`` for seconds. Each connection fires once per cycle, and no two
payload windows overlap, so only one conduction loop is ever closed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import CycleTooShort, PayloadTooShort, ScheduleOverlap
from .netmodel import NetworkConfig
from .transient import connection_damping, zero_current_instant

DEFAULT_GUARD_BITS = 1


@dataclass(frozen=True)
class Schedule:
    payload_bits: tuple[int, ...]  # indexed by connection
    cycle_bits: int
    offsets: tuple[int, ...]       # rising edge of each connection, in bits
    bit_time: float

    def __post_init__(self):
        object.__setattr__(self, "payload_bits", tuple(int(b) for b in self.payload_bits))
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        if len(self.payload_bits) != len(self.offsets):
            raise ValueError("payload_bits and offsets must have one entry per connection")
        if any(b < 1 for b in self.payload_bits):
            raise ValueError(f"every payload needs at least one bit, got {self.payload_bits}")
        if self.cycle_bits < 1:
            raise ValueError(f"cycle_bits must be positive, got {self.cycle_bits}")
        if any(not 0 <= o < self.cycle_bits for o in self.offsets):
            raise ValueError(f"offsets must lie in [0, {self.cycle_bits}), got {self.offsets}")
        overlap = find_overlap(self.payload_bits, self.offsets, self.cycle_bits)
        if overlap is not None:
            a, b = overlap
            raise ScheduleOverlap(f"payload windows of connections {a} and {b} overlap")

    @property
    def n(self) -> int:
        return len(self.payload_bits)

    @property
    def cycle_time(self) -> float:
        return self.cycle_bits * self.bit_time

    def window(self, j):
        """``(start, stop)`` of connection ``j``'s payload in seconds, within a cycle."""
        return (self.offsets[j] * self.bit_time,
                (self.offsets[j] + self.payload_bits[j]) * self.bit_time)

    def firing_order(self):
        return sorted(range(self.n), key=lambda j: self.offsets[j])

    def to_dict(self):
        return {
            "bit_time": self.bit_time,
            "cycle_bits": self.cycle_bits,
            "payload_bits": list(self.payload_bits),
            "offsets": list(self.offsets),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        d = json.loads(text)
        return cls(d["payload_bits"], d["cycle_bits"], d["offsets"], d["bit_time"])

    def timeline(self, width: int = 72) -> str:
        """One text row per connection with ``#`` where its switches are closed."""
        scale = min(1.0, width / self.cycle_bits)
        cols = max(1, int(round(self.cycle_bits * scale)))
        lines = [f"cycle: {self.cycle_bits} bits x {self.bit_time:.6g} s = {self.cycle_time:.6g} s"]
        for j in reversed(range(self.n)):
            row = ["."] * cols
            start = self.offsets[j]
            for bit in range(start, start + self.payload_bits[j]):
                row[min(cols - 1, int((bit % self.cycle_bits) * scale))] = "#"
            lines.append(f"conn {j:>3} |{''.join(row)}| offset {start:>5} len {self.payload_bits[j]:>4}")
        return "\n".join(lines)


def find_overlap(payload_bits, offsets, cycle_bits):
    """First pair of connections whose windows intersect (circularly), else None."""
    order = sorted(range(len(offsets)), key=lambda j: offsets[j])
    for a, b in zip(order, order[1:]):
        if offsets[a] + payload_bits[a] > offsets[b]:
            return a, b
    if len(order) > 1:
        last, first = order[-1], order[0]
        if offsets[last] + payload_bits[last] > offsets[first] + cycle_bits:
            return last, first
    elif order and payload_bits[order[0]] > cycle_bits:
        return order[0], order[0]
    return None


def quantize_payload(duration: float, bit_time: float) -> int:
    """Largest bit count ``B`` with ``B * bit_time <= duration``."""
    if not (duration > 0 and bit_time > 0):
        raise ValueError(f"duration and bit_time must be positive, got {duration!r}, {bit_time!r}")
    bits = math.floor(duration / bit_time)
    # guard the float division at exact multiples
    while bits * bit_time > duration:
        bits -= 1
    while (bits + 1) * bit_time <= duration:
        bits += 1
    if bits < 1:
        raise PayloadTooShort(
            f"payload of {duration:.6g} s is shorter than one bit ({bit_time:.6g} s)"
        )
    return bits


def quantize_cycle(duration: float, bit_time: float, rounding: str = "ceil") -> int:
    """Bit count of the switching cycle.

    ``"ceil"`` (default) gives the shortest cycle that still lets router 0
    discharge all the way to its low voltage; ``"floor"`` applies the
    payload rule instead.
    """
    if rounding == "floor":
        return quantize_payload(duration, bit_time)
    if rounding != "ceil":
        raise ValueError(f"rounding must be 'ceil' or 'floor', got {rounding!r}")
    if not (duration > 0 and bit_time > 0):
        raise ValueError(f"duration and bit_time must be positive, got {duration!r}, {bit_time!r}")
    bits = max(1, math.ceil(duration / bit_time))
    while bits > 1 and (bits - 1) * bit_time >= duration:
        bits -= 1
    while bits * bit_time < duration:
        bits += 1
    return bits


def cycle_time(cfg: NetworkConfig, v0_low: float, v0_high: float, t01: float) -> float:
    """Switching cycle that lets router 0 discharge from ``v0_high`` back to ``v0_low``."""
    if not v0_high >= v0_low > 0:
        raise ValueError(f"need v0_high >= v0_low > 0, got {v0_high!r}, {v0_low!r}")
    r0 = cfg.routers[0]
    tau = r0.capacitance * (cfg.load_resistance + r0.esr)
    if math.isinf(tau):
        return math.inf
    return t01 + tau * math.log(v0_high / v0_low)


def source_first_order(n: int):
    return list(range(n - 1, -1, -1))


def assign_offsets(payload_bits, cycle_bits, bit_time=1.0, guard_bits=DEFAULT_GUARD_BITS, order=None) -> Schedule:
    """Pack payload windows back to back in firing order.

    ``order`` lists connection indices in firing order; the default fires
    the source side first so that energy injected at the top of the
    cascade reaches router 0 within the same cycle. ``guard_bits`` idle
    bits follow every window.
    """
    n = len(payload_bits)
    order = source_first_order(n) if order is None else list(order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"order must be a permutation of 0..{n - 1}, got {order}")
    required = sum(b + guard_bits for b in payload_bits)
    if required > cycle_bits:
        raise CycleTooShort(required, cycle_bits)
    offsets = [0] * n
    pos = 0
    for j in order:
        offsets[j] = pos
        pos += payload_bits[j] + guard_bits
    return Schedule(tuple(payload_bits), cycle_bits, tuple(offsets), bit_time)


def payload_durations(cfg: NetworkConfig):
    """Analytic underdamped payload duration of every connection."""
    return [zero_current_instant(connection_damping(cfg, j), 1) for j in range(cfg.n)]


def build_schedule(cfg: NetworkConfig, estimate, guard_bits=DEFAULT_GUARD_BITS, order=None,
                   cycle_rounding: str = "ceil") -> Schedule:
    """Quantize payloads and the cycle for ``cfg`` using steady-state estimate ``estimate``.

    Payloads are always rounded down so switches open no later than the
    zero-current instant; see :func:`quantize_cycle` for the cycle.
    """
    durations = payload_durations(cfg)
    bits = [quantize_payload(t, cfg.bit_time) for t in durations]
    ts = cycle_time(cfg, estimate.low[0], estimate.high[0], durations[0])
    if math.isfinite(ts):
        cycle_bits = quantize_cycle(ts, cfg.bit_time, cycle_rounding)
    else:
        # unloaded router 0 never discharges: use the tightest packing
        cycle_bits = sum(b + guard_bits for b in bits)
    return assign_offsets(bits, cycle_bits, cfg.bit_time, guard_bits, order)
