"""Closed-form transient response of a single conduction loop.

While one connection conducts, the loop is a series RLC circuit: the line
inductance, the loop resistance (two switch on-resistances, line
resistance, and the ESR of every capacitor in the loop) and the series
combination of the two storage capacitors (or just the receiver's
capacitor when the sender is the stiff source).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BackflowGap, NotUnderdamped
from .netmodel import ConnectionSpec, NetworkConfig, RouterSpec

#: Width of the band around zeta = 1 treated as critically damped.
CRITICAL_BAND = 1e-9


class ConnectionKind(enum.Enum):
    SOURCE_TO_ROUTER = "source_to_router"
    ROUTER_TO_ROUTER = "router_to_router"


@dataclass(frozen=True)
class ConnectionDamping:
    zeta: float
    omega: float
    series_capacitance: float
    loop_resistance: float
    inductance: float
    kind: ConnectionKind
    receiver_capacitance: float
    sender_capacitance: float | None = None  # None: the sender is the source

    @property
    def damped_omega(self) -> float:
        """Ringing frequency ``omega * sqrt(1 - zeta**2)`` (underdamped only)."""
        return self.omega * math.sqrt(1.0 - self.zeta * self.zeta)

    @property
    def underdamped(self) -> bool:
        return self.zeta < 1.0 - CRITICAL_BAND


def _loop(inductance, loop_resistance, receiver_capacitance, sender_capacitance):
    if sender_capacitance is None:
        kind = ConnectionKind.SOURCE_TO_ROUTER
        c_series = receiver_capacitance
        omega = 1.0 / math.sqrt(inductance * c_series)
    else:
        kind = ConnectionKind.ROUTER_TO_ROUTER
        c_sum = receiver_capacitance + sender_capacitance
        c_series = receiver_capacitance * sender_capacitance / c_sum
        omega = math.sqrt(c_sum / (inductance * receiver_capacitance * sender_capacitance))
    zeta = 0.5 * loop_resistance * math.sqrt(c_series / inductance)
    return ConnectionDamping(
        zeta=zeta,
        omega=omega,
        series_capacitance=c_series,
        loop_resistance=loop_resistance,
        inductance=inductance,
        kind=kind,
        receiver_capacitance=receiver_capacitance,
        sender_capacitance=sender_capacitance,
    )


def damping(conn: ConnectionSpec, receiver: RouterSpec, sender: RouterSpec | None = None) -> ConnectionDamping:
    """Damping ratio and natural frequency of one conduction loop.

    ``sender=None`` selects the source connection, whose loop contains
    only the receiver's capacitor.
    """
    r = 2.0 * conn.switch_on_resistance + conn.line_resistance + receiver.esr
    if sender is not None:
        r += sender.esr
    return _loop(conn.inductance, r, receiver.capacitance,
                 None if sender is None else sender.capacitance)


def from_circuit(inductance, loop_resistance, receiver_capacitance, sender_capacitance=None):
    """Build a :class:`ConnectionDamping` from lumped loop values."""
    return _loop(inductance, loop_resistance, receiver_capacitance, sender_capacitance)


def connection_damping(cfg: NetworkConfig, j: int) -> ConnectionDamping:
    sender = cfg.routers[j + 1] if j + 1 < cfg.n else None
    return damping(cfg.connections[j], cfg.routers[j], sender)


def payload_current(d: ConnectionDamping, v_gap0, t):
    """Loop current ``t`` seconds after the switches close.

    ``v_gap0`` is the sender-minus-receiver voltage at ``t = 0``; the
    current starts at zero because of the line inductance. Accepts scalars
    or arrays for ``t``.
    """
    t = np.asarray(t, dtype=float)
    z, w, L = d.zeta, d.omega, d.inductance
    if abs(z - 1.0) <= CRITICAL_BAND:
        out = v_gap0 * t / L * np.exp(-w * t)
    elif z < 1.0:
        s = math.sqrt(1.0 - z * z)
        out = v_gap0 / (L * w * s) * np.exp(-z * w * t) * np.sin(w * s * t)
    else:
        s = math.sqrt(z * z - 1.0)
        # exp(-z w t) sinh(s w t) written without the overflowing sinh
        out = v_gap0 / (L * w * s) * 0.5 * (np.exp(-(z - s) * w * t) - np.exp(-(z + s) * w * t))
    return out[()] if out.ndim == 0 else out


def payload_charge(d: ConnectionDamping, v_gap0, t):
    """Charge moved through the loop during ``[0, t]`` (underdamped only)."""
    _require_underdamped(d)
    t = np.asarray(t, dtype=float)
    z, w = d.zeta, d.omega
    s = math.sqrt(1.0 - z * z)
    wd = w * s
    out = v_gap0 * d.series_capacitance * (
        1.0 - np.exp(-z * w * t) * (np.cos(wd * t) + z / s * np.sin(wd * t))
    )
    return out[()] if out.ndim == 0 else out


def _require_underdamped(d):
    if not d.underdamped:
        raise NotUnderdamped([(None, d.zeta)])


def zero_current_instant(d: ConnectionDamping, n: int = 1) -> float:
    """Time of the ``n``-th current zero after the switches close.

    ``n = 1`` is the underdamped payload duration; odd/even intervals
    beyond it carry reverse current.
    """
    _require_underdamped(d)
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return n * math.pi / d.damped_omega


def charge_factor(d: ConnectionDamping) -> float:
    """Charge moved by one underdamped payload per volt of initial gap."""
    _require_underdamped(d)
    z = d.zeta
    overshoot = math.exp(-z * math.pi / math.sqrt(1.0 - z * z))
    return 1.0 / (d.inductance * d.omega ** 2) * (1.0 + overshoot)


@dataclass(frozen=True)
class PayloadStep:
    duration: float
    charge_factor: float
    delta_v_sender: float
    delta_v_receiver: float
    sender_after: float
    receiver_after: float


def apply_payload_step(d: ConnectionDamping, sender_voltage: float, receiver_voltage: float) -> PayloadStep:
    """Storage voltages after one complete underdamped payload."""
    _require_underdamped(d)
    gap = sender_voltage - receiver_voltage
    if gap < 0:
        raise BackflowGap(
            f"receiver ({receiver_voltage:.6g} V) above sender ({sender_voltage:.6g} V)"
        )
    e = charge_factor(d)
    q = e * gap
    dv_r = q / d.receiver_capacitance
    dv_s = 0.0 if d.sender_capacitance is None else -q / d.sender_capacitance
    return PayloadStep(
        duration=zero_current_instant(d, 1),
        charge_factor=e,
        delta_v_sender=dv_s,
        delta_v_receiver=dv_r,
        sender_after=sender_voltage + dv_s,
        receiver_after=receiver_voltage + dv_r,
    )


class PayloadEnergy(NamedTuple):
    transferred: float  # receiver capacitor energy gain
    dissipated: float   # loop resistance losses
    released: float     # energy given up by the sender (capacitor or source)


def _dissipated(d, v_gap0):
    if v_gap0 == 0.0 or d.loop_resistance == 0.0:
        return 0.0
    z, w = d.zeta, d.omega
    s = math.sqrt(1.0 - z * z)
    a, b = z * w, w * s
    T = math.pi / b
    amp = v_gap0 / (d.inductance * w * s)
    # int_0^T exp(-2at) sin^2(bt) dt = (1 - exp(-2aT)) b^2 / (4 a (a^2 + b^2))
    integral = -math.expm1(-2.0 * a * T) * b * b / (4.0 * a * w * w)
    return d.loop_resistance * amp * amp * integral


def payload_energy(d: ConnectionDamping, v_gap0: float, receiver_voltage: float = 0.0) -> PayloadEnergy:
    """Energy bookkeeping of one underdamped payload.

    ``receiver_voltage`` is the receiver's voltage before the payload; the
    sender starts ``v_gap0`` above it.
    """
    _require_underdamped(d)
    q = charge_factor(d) * v_gap0
    c_r = d.receiver_capacitance
    v_r1 = receiver_voltage + q / c_r
    transferred = 0.5 * c_r * (v_r1 ** 2 - receiver_voltage ** 2)
    v_s0 = receiver_voltage + v_gap0
    if d.sender_capacitance is None:
        released = v_s0 * q
    else:
        v_s1 = v_s0 - q / d.sender_capacitance
        released = 0.5 * d.sender_capacitance * (v_s0 ** 2 - v_s1 ** 2)
    return PayloadEnergy(transferred, _dissipated(d, v_gap0), released)
