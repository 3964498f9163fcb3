"""Network description for a cascaded power packet dispatching network.

Indexing follows the cascade from the load outwards: router 0 feeds the
load, connection ``j`` links router ``j + 1`` (sender) to router ``j``
(receiver), and connection ``N - 1`` links the source to router ``N - 1``.

Configuration files are TOML::

    [source]
    voltage = 24.0

    [load]
    resistance = 100.0
    v0_low_target = 21.6

    [timing]
    bit_time = 1e-6

    [devices]                       # optional
    pulldown_resistance = 30e3      # default 30 kOhm
    diode_forward_voltage = 0.6     # default 0.6 V

    [[routers]]
    index = 0
    capacitance = 20e-6
    esr = 0.1
    # initial_voltage = 21.6        # optional, simulator only

    [[connections]]
    index = 0
    inductance = 1e-6
    line_resistance = 0.0           # optional, default 0
    switch_on_resistance = 0.044    # optional, per switch

Every value is an SI float. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass
from typing import NamedTuple

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

#: Per-switch on-resistance fitted to the published steady-state estimate
#: for the reference network (see ``estimator.calibrate_switch_resistance``).
DEFAULT_SWITCH_ON_RESISTANCE = 0.044
DEFAULT_DIODE_FORWARD_VOLTAGE = 0.6
DEFAULT_PULLDOWN_RESISTANCE = 30e3
DEFAULT_LINE_RESISTANCE = 0.0


def _require(cond, field, message):
    if not cond:
        raise ConfigError(field, message)


def _finite(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass(frozen=True)
class RouterSpec:
    """Storage capacitor of one router."""

    capacitance: float
    esr: float = 0.0
    initial_voltage: float | None = None

    def __post_init__(self):
        _require(_finite(self.capacitance) and self.capacitance > 0,
                 "capacitance", f"must be a finite positive number, got {self.capacitance!r}")
        _require(_finite(self.esr) and self.esr >= 0,
                 "esr", f"must be a finite non-negative number, got {self.esr!r}")
        if self.initial_voltage is not None:
            _require(_finite(self.initial_voltage), "initial_voltage",
                     f"must be finite, got {self.initial_voltage!r}")


@dataclass(frozen=True)
class ConnectionSpec:
    """Power line plus the two switches closing one conduction loop."""

    inductance: float
    line_resistance: float = DEFAULT_LINE_RESISTANCE
    switch_on_resistance: float = DEFAULT_SWITCH_ON_RESISTANCE

    def __post_init__(self):
        _require(_finite(self.inductance) and self.inductance > 0,
                 "inductance", f"must be a finite positive number, got {self.inductance!r}")
        _require(_finite(self.line_resistance) and self.line_resistance >= 0,
                 "line_resistance", f"must be a finite non-negative number, got {self.line_resistance!r}")
        _require(_finite(self.switch_on_resistance) and self.switch_on_resistance >= 0,
                 "switch_on_resistance",
                 f"must be a finite non-negative number, got {self.switch_on_resistance!r}")


@dataclass(frozen=True)
class NetworkConfig:
    source_voltage: float
    load_resistance: float
    routers: tuple[RouterSpec, ...]
    connections: tuple[ConnectionSpec, ...]
    bit_time: float
    v0_low_target: float
    pulldown_resistance: float = DEFAULT_PULLDOWN_RESISTANCE
    diode_forward_voltage: float = DEFAULT_DIODE_FORWARD_VOLTAGE

    def __post_init__(self):
        object.__setattr__(self, "routers", tuple(self.routers))
        object.__setattr__(self, "connections", tuple(self.connections))
        _require(_finite(self.source_voltage) and self.source_voltage > 0,
                 "source.voltage", f"must be positive, got {self.source_voltage!r}")
        # inf disconnects the load
        _require(isinstance(self.load_resistance, (int, float)) and self.load_resistance > 0
                 and not math.isnan(self.load_resistance),
                 "load.resistance", f"must be positive, got {self.load_resistance!r}")
        _require(len(self.routers) >= 1, "routers", "at least one router is required")
        _require(len(self.connections) == len(self.routers), "connections",
                 f"expected {len(self.routers)} connections (one per router), got {len(self.connections)}")
        for j, r in enumerate(self.routers):
            _require(isinstance(r, RouterSpec), f"routers[{j}]", "not a RouterSpec")
        for j, c in enumerate(self.connections):
            _require(isinstance(c, ConnectionSpec), f"connections[{j}]", "not a ConnectionSpec")
        _require(_finite(self.bit_time) and self.bit_time > 0,
                 "timing.bit_time", f"must be positive, got {self.bit_time!r}")
        _require(_finite(self.v0_low_target) and 0 < self.v0_low_target < self.source_voltage,
                 "load.v0_low_target",
                 f"must lie in (0, source voltage={self.source_voltage}), got {self.v0_low_target!r}")
        _require(self.pulldown_resistance > 0 and not math.isnan(self.pulldown_resistance),
                 "devices.pulldown_resistance", f"must be positive, got {self.pulldown_resistance!r}")
        _require(_finite(self.diode_forward_voltage) and self.diode_forward_voltage >= 0,
                 "devices.diode_forward_voltage",
                 f"must be non-negative, got {self.diode_forward_voltage!r}")

    @property
    def n(self) -> int:
        """Number of connections (equal to the number of routers)."""
        return len(self.routers)

    def capacitances(self):
        return [r.capacitance for r in self.routers]

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)


class DampingCheck(NamedTuple):
    index: int
    zeta: float
    underdamped: bool


def validate_underdamped(cfg: NetworkConfig) -> list[DampingCheck]:
    """Damping ratio of every connection, flagging those with zeta >= 1."""
    from .transient import connection_damping

    out = []
    for j in range(cfg.n):
        z = connection_damping(cfg, j).zeta
        out.append(DampingCheck(j, z, z < 1.0))
    return out


# -- parsing -----------------------------------------------------------------

_SECTIONS = {
    "source": ({"voltage"}, set()),
    "load": ({"resistance", "v0_low_target"}, set()),
    "timing": ({"bit_time"}, set()),
    "devices": (set(), {"pulldown_resistance", "diode_forward_voltage"}),
}
_ROUTER_KEYS = ({"index", "capacitance"}, {"esr", "initial_voltage"})
_CONNECTION_KEYS = ({"index", "inductance"}, {"line_resistance", "switch_on_resistance"})


def _check_keys(table, required, optional, where):
    if not isinstance(table, dict):
        raise ConfigError(where, "expected a table")
    for key in table:
        if key not in required and key not in optional:
            raise ConfigError(f"{where}.{key}", "unknown key")
    for key in sorted(required):
        if key not in table:
            raise ConfigError(f"{where}.{key}", "missing required field")


def _number(table, key, where):
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}", f"expected a number, got {v!r}")
    return float(v)


def _indexed(entries, required, optional, where):
    if not isinstance(entries, list) or not entries:
        raise ConfigError(where, "expected a non-empty array of tables")
    by_index = {}
    for pos, entry in enumerate(entries):
        _check_keys(entry, required, optional, f"{where}[{pos}]")
        idx = entry["index"]
        if isinstance(idx, bool) or not isinstance(idx, int):
            raise ConfigError(f"{where}[{pos}].index", f"expected an integer, got {idx!r}")
        if idx in by_index:
            raise ConfigError(f"{where}[{pos}].index", f"duplicate index {idx}")
        by_index[idx] = entry
    if sorted(by_index) != list(range(len(by_index))):
        raise ConfigError(f"{where}", f"indices must be exactly 0..{len(by_index) - 1}, got {sorted(by_index)}")
    return [by_index[i] for i in range(len(by_index))]


def parse_config(text: str) -> NetworkConfig:
    """Parse a TOML network description into a validated :class:`NetworkConfig`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<document>", f"malformed TOML: {exc}") from None

    for key in doc:
        if key not in _SECTIONS and key not in ("routers", "connections"):
            raise ConfigError(key, "unknown section")
    for name, (required, optional) in _SECTIONS.items():
        if name in doc:
            _check_keys(doc[name], required, optional, name)
        elif required:
            raise ConfigError(name, "missing required section")
    for name in ("routers", "connections"):
        if name not in doc:
            raise ConfigError(name, "missing required section")

    routers = []
    for j, entry in enumerate(_indexed(doc["routers"], *_ROUTER_KEYS, "routers")):
        where = f"routers[{j}]"
        kw = {"capacitance": _number(entry, "capacitance", where)}
        if "esr" in entry:
            kw["esr"] = _number(entry, "esr", where)
        if "initial_voltage" in entry:
            kw["initial_voltage"] = _number(entry, "initial_voltage", where)
        try:
            routers.append(RouterSpec(**kw))
        except ConfigError as exc:
            raise ConfigError(f"{where}.{exc.field}", exc.message) from None

    connections = []
    for j, entry in enumerate(_indexed(doc["connections"], *_CONNECTION_KEYS, "connections")):
        where = f"connections[{j}]"
        kw = {"inductance": _number(entry, "inductance", where)}
        for key in ("line_resistance", "switch_on_resistance"):
            if key in entry:
                kw[key] = _number(entry, key, where)
        try:
            connections.append(ConnectionSpec(**kw))
        except ConfigError as exc:
            raise ConfigError(f"{where}.{exc.field}", exc.message) from None

    devices = doc.get("devices", {})
    kw = {}
    if "pulldown_resistance" in devices:
        kw["pulldown_resistance"] = _number(devices, "pulldown_resistance", "devices")
    if "diode_forward_voltage" in devices:
        kw["diode_forward_voltage"] = _number(devices, "diode_forward_voltage", "devices")
    return NetworkConfig(
        source_voltage=_number(doc["source"], "voltage", "source"),
        load_resistance=_number(doc["load"], "resistance", "load"),
        v0_low_target=_number(doc["load"], "v0_low_target", "load"),
        bit_time=_number(doc["timing"], "bit_time", "timing"),
        routers=routers,
        connections=connections,
        **kw,
    )


def load_config(path) -> NetworkConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: NetworkConfig) -> str:
    """Serialize ``cfg`` to TOML; ``parse_config(dump_config(cfg)) == cfg``."""
    routers = []
    for j, r in enumerate(cfg.routers):
        entry = {"index": j, "capacitance": r.capacitance, "esr": r.esr}
        if r.initial_voltage is not None:
            entry["initial_voltage"] = r.initial_voltage
        routers.append(entry)
    doc = {
        "source": {"voltage": cfg.source_voltage},
        "load": {"resistance": cfg.load_resistance, "v0_low_target": cfg.v0_low_target},
        "timing": {"bit_time": cfg.bit_time},
        "devices": {
            "pulldown_resistance": cfg.pulldown_resistance,
            "diode_forward_voltage": cfg.diode_forward_voltage,
        },
        "routers": routers,
        "connections": [
            {
                "index": j,
                "inductance": c.inductance,
                "line_resistance": c.line_resistance,
                "switch_on_resistance": c.switch_on_resistance,
            }
            for j, c in enumerate(cfg.connections)
        ],
    }
    return tomli_w.dumps(doc)


def reference_config(capacitance=20e-6, n=3, switch_on_resistance=DEFAULT_SWITCH_ON_RESISTANCE):
    """The three-connection benchmark network (24 V source, 100 Ohm load, 1 uH lines)."""
    return NetworkConfig(
        source_voltage=24.0,
        load_resistance=100.0,
        routers=[RouterSpec(capacitance=capacitance, esr=0.1) for _ in range(n)],
        connections=[ConnectionSpec(inductance=1e-6, switch_on_resistance=switch_on_resistance)
                     for _ in range(n)],
        bit_time=1e-6,
        v0_low_target=21.6,
        pulldown_resistance=30e3,
        diode_forward_voltage=0.6,
    )


# -- parameter paths used by sweeps --------------------------------------------

_ROUTER_FIELDS = {"capacitance", "esr", "initial_voltage"}
_CONNECTION_FIELDS = {"inductance", "line_resistance", "switch_on_resistance"}
_TOP_FIELDS = {
    "source_voltage", "load_resistance", "bit_time", "v0_low_target",
    "pulldown_resistance", "diode_forward_voltage",
}


def with_param(cfg: NetworkConfig, path: str, value: float) -> NetworkConfig:
    """Return a copy of ``cfg`` with one parameter changed.

    ``path`` is a top-level field (``load_resistance``), a router or
    connection field applied to every element (``capacitance``,
    ``switch_on_resistance``), or an indexed element
    (``routers.1.capacitance``, ``connections.2.inductance``).
    """
    parts = path.split(".")
    value = float(value)
    if len(parts) == 1:
        name = parts[0]
        if name in _TOP_FIELDS:
            return cfg.replace(**{name: value})
        if name in _ROUTER_FIELDS:
            return cfg.replace(routers=[dataclasses.replace(r, **{name: value}) for r in cfg.routers])
        if name in _CONNECTION_FIELDS:
            return cfg.replace(connections=[dataclasses.replace(c, **{name: value}) for c in cfg.connections])
    elif len(parts) == 3 and parts[0] in ("routers", "connections") and parts[1].isdigit():
        group, idx, name = parts[0], int(parts[1]), parts[2]
        fields = _ROUTER_FIELDS if group == "routers" else _CONNECTION_FIELDS
        items = list(getattr(cfg, group))
        if name in fields and idx < len(items):
            items[idx] = dataclasses.replace(items[idx], **{name: value})
            return cfg.replace(**{group: items})
    raise ConfigError(path, "invalid parameter path")
