import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppdn.errors import ConfigError
from ppdn.netmodel import (
    ConnectionSpec,
    NetworkConfig,
    RouterSpec,
    dump_config,
    load_config,
    parse_config,
    reference_config,
    validate_underdamped,
    with_param,
)
from ppdn.transient import connection_damping

REFERENCE_TOML = """
[source]
voltage = 24.0

[load]
resistance = 100.0
v0_low_target = 21.6

[timing]
bit_time = 1e-6

[devices]
pulldown_resistance = 30e3

[[routers]]
index = 0
capacitance = 20e-6
esr = 0.1

[[routers]]
index = 1
capacitance = 20e-6
esr = 0.1

[[routers]]
index = 2
capacitance = 20e-6
esr = 0.1

[[connections]]
index = 0
inductance = 1e-6
switch_on_resistance = 0.05

[[connections]]
index = 1
inductance = 1e-6
switch_on_resistance = 0.05

[[connections]]
index = 2
inductance = 1e-6
switch_on_resistance = 0.05
"""


def test_parse_reference_network():
    cfg = parse_config(REFERENCE_TOML)
    assert cfg.n == 3
    assert cfg.source_voltage == 24.0 and cfg.load_resistance == 100.0
    assert cfg.v0_low_target == 21.6 and cfg.bit_time == 1e-6
    assert cfg.pulldown_resistance == 30e3
    assert all(r.capacitance == 20e-6 and r.esr == 0.1 for r in cfg.routers)
    # defaults applied
    assert cfg.diode_forward_voltage == 0.6
    assert all(c.line_resistance == 0.0 for c in cfg.connections)


def test_zero_capacitance_names_router_index():
    text = REFERENCE_TOML.replace("index = 1\ncapacitance = 20e-6", "index = 1\ncapacitance = 0.0")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == "routers[1].capacitance"


def test_single_router_network():
    text = """
[source]
voltage = 24.0
[load]
resistance = 100.0
v0_low_target = 21.6
[timing]
bit_time = 1e-6
[[routers]]
index = 0
capacitance = 20e-6
[[connections]]
index = 0
inductance = 1e-6
"""
    cfg = parse_config(text)
    assert cfg.n == 1 and len(cfg.connections) == 1


@pytest.mark.parametrize("mutation, field", [
    (("[timing]\nbit_time = 1e-6", "[timing]\nbit_time = 1e-6\nspeed = 3"), "timing.speed"),
    (("resistance = 100.0\n", ""), "load.resistance"),
    (("voltage = 24.0", "voltage = \"24\""), "source.voltage"),
    (("v0_low_target = 21.6", "v0_low_target = 25.0"), "load.v0_low_target"),
    (("bit_time = 1e-6", "bit_time = -1e-6"), "timing.bit_time"),
    (("index = 2\ninductance", "index = 1\ninductance"), "connections[2].index"),
    (("index = 2\ncapacitance", "index = 5\ncapacitance"), "routers"),
    (("[devices]", "[extras]"), "extras"),
])
def test_parse_errors_name_the_field(mutation, field):
    old, new = mutation
    assert old in REFERENCE_TOML
    with pytest.raises(ConfigError) as exc:
        parse_config(REFERENCE_TOML.replace(old, new, 1))
    assert exc.value.field == field


def test_connection_count_must_match_routers():
    cut = REFERENCE_TOML.split("[[connections]]\nindex = 2")[0]
    with pytest.raises(ConfigError) as exc:
        parse_config(cut)
    assert exc.value.field == "connections"


def test_malformed_document():
    with pytest.raises(ConfigError):
        parse_config("[source\nvoltage = 1")


def test_infinite_load_and_pulldown_are_allowed():
    cfg = reference_config().replace(load_resistance=math.inf, pulldown_resistance=math.inf)
    again = parse_config(dump_config(cfg))
    assert again == cfg


def test_round_trip_reference(tmp_path):
    cfg = reference_config(10e-6, n=4)
    path = tmp_path / "net.toml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


positive = st.floats(min_value=1e-9, max_value=1e3, allow_nan=False, allow_infinity=False)
non_negative = st.floats(min_value=0.0, max_value=10.0, allow_nan=False)


@st.composite
def configs(draw):
    n = draw(st.integers(1, 5))
    e = draw(st.floats(1.0, 1000.0))
    routers = [RouterSpec(draw(positive), draw(non_negative),
                          draw(st.one_of(st.none(), st.floats(-100, 100))))
               for _ in range(n)]
    conns = [ConnectionSpec(draw(positive), draw(non_negative), draw(non_negative)) for _ in range(n)]
    return NetworkConfig(
        source_voltage=e,
        load_resistance=draw(st.one_of(positive, st.just(math.inf))),
        routers=routers,
        connections=conns,
        bit_time=draw(positive),
        v0_low_target=e * draw(st.floats(0.01, 0.99)),
        pulldown_resistance=draw(st.one_of(positive, st.just(math.inf))),
        diode_forward_voltage=draw(non_negative),
    )


@given(configs())
def test_round_trip_property(cfg):
    assert parse_config(dump_config(cfg)) == cfg


def test_validate_reference_fifty_milliohm():
    checks = validate_underdamped(reference_config(20e-6, switch_on_resistance=0.05))
    assert all(c.underdamped for c in checks)
    assert checks[0].zeta == pytest.approx(0.474, abs=5e-4)
    assert checks[1].zeta == pytest.approx(0.474, abs=5e-4)
    assert checks[2].zeta == pytest.approx(0.447, abs=5e-4)


def test_validate_flags_ten_ohm_loop():
    base = reference_config(20e-6, switch_on_resistance=0.05)
    # 2 x 0.05 + 2 x 0.1 ESR + 9.7 line = 10 Ohm in the router-router loops
    cfg = with_param(base, "line_resistance", 9.7)
    checks = validate_underdamped(cfg)
    assert not any(c.underdamped for c in checks)
    assert checks[0].zeta == pytest.approx(5.0 * math.sqrt(10.0), rel=1e-12)
    assert checks[0].zeta == pytest.approx(15.8, abs=0.05)


def test_validate_lossless_is_exactly_zero():
    cfg = reference_config(20e-6, switch_on_resistance=0.0)
    cfg = cfg.replace(routers=[RouterSpec(20e-6, 0.0) for _ in range(3)])
    assert [c.zeta for c in validate_underdamped(cfg)] == [0.0, 0.0, 0.0]


@given(configs())
def test_validate_matches_transient_bit_for_bit(cfg):
    for c in validate_underdamped(cfg):
        assert c.zeta == connection_damping(cfg, c.index).zeta


def test_with_param_paths():
    cfg = reference_config()
    assert with_param(cfg, "capacitance", 1e-6).capacitances() == [1e-6] * 3
    assert with_param(cfg, "routers.1.esr", 0.5).routers[1].esr == 0.5
    assert with_param(cfg, "routers.1.esr", 0.5).routers[0].esr == 0.1
    assert with_param(cfg, "connections.2.inductance", 2e-6).connections[2].inductance == 2e-6
    assert with_param(cfg, "load_resistance", 50.0).load_resistance == 50.0
    for bad in ("bogus", "routers.9.esr", "routers.x.esr", "connections.0.capacitance"):
        with pytest.raises(ConfigError):
            with_param(cfg, bad, 1.0)


def test_config_is_immutable():
    cfg = reference_config()
    with pytest.raises(Exception):
        cfg.source_voltage = 12.0
