import pytest

from roamsim.enums import Mode
from roamsim.sim.scenario import (
    ConfigError,
    default_scenario_path,
    dump_profile_library,
    load_profile_library,
    load_scenario,
    scenario_from_text,
)

BASE = """\
name: tiny
duration: 60
environment:
  nodes:
    - {id: w, rat: WIFI, position: [0, 0], tx_power: 17, network: Celona}
    - {id: c, rat: CBRS, position: [10, 0], tx_power: 4, bandwidth: 20, pci: 1, network: CelonaPrivate}
profiles:
  Phone: {cell_attach_delay: 1.0}
mobility:
  waypoints: [[0, 0, 0], [40, 0, 0]]
flows:
  zoom: {class: LIVE}
devices:
  - {name: a, profile: Phone, flows: [zoom]}
"""


def test_minimal_scenario_loads():
    sc = scenario_from_text(BASE)
    assert sc.name == "tiny"
    (dev,) = sc.devices
    assert dev.mode is Mode.TRADITIONAL
    assert sc.profiles["Phone"].cell_attach_delay == 1.0
    assert dev.trace.length == 40


@pytest.mark.parametrize("old, new, line, path", [
    ("tx_power: 4,", "tx_power: oops,", 6, "environment.nodes.1.tx_power"),
    ("profile: Phone,", "profile: Tablet,", 14, "devices.0.profile"),
    ("flows: [zoom]", "flows: [zoom, web]", 14, "devices.0.flows.1"),
    ("  zoom: {class: LIVE}", "  zoom: {class: FAX}", 12, "flows.zoom"),
    ("  Phone: {cell_attach_delay: 1.0}", "  Phone: {cell_attach_delay: -1.0}", 8, "profiles.Phone"),
    ("duration: 60", "duration: 60\nbogus: 1", 3, "bogus"),
])
def test_errors_point_at_the_offending_line(old, new, line, path):
    text = BASE.replace(old, new)
    assert text != BASE
    with pytest.raises(ConfigError) as e:
        scenario_from_text(text, "tiny.yaml")
    assert e.value.line == line, str(e.value)
    assert e.value.path == path
    assert str(e.value).startswith(f"tiny.yaml:{line}: {path}: ")


def test_yaml_syntax_error_has_a_line():
    with pytest.raises(ConfigError) as e:
        scenario_from_text("a: [1, 2\nb: 3\n", "bad.yaml")
    assert e.value.line is not None


def test_duplicate_pci_is_rejected():
    text = BASE.replace("position: [0, 0], tx_power: 17, network: Celona}",
                        "position: [0, 0], tx_power: 17, network: Celona}\n"
                        "    - {id: c2, rat: CBRS, position: [20, 0], tx_power: 4, bandwidth: 20, pci: 1}")
    with pytest.raises(ConfigError, match="PCI|pci"):
        scenario_from_text(text)


def test_tunnel_device_without_policy_is_rejected():
    with pytest.raises(ConfigError):
        scenario_from_text(BASE.replace("flows: [zoom]}", "flows: [zoom], mode: TUNNEL}"))


def test_default_scenario_validates(default_scenario):
    sc = default_scenario
    assert len(sc.devices) == 7
    assert {d.profile for d in sc.devices} == {f"Model {k}" for k in range(1, 8)}
    assert not sc.profiles["Model 7"].supports_tunnel_client
    tun = sc.with_mode(Mode.TUNNEL)
    assert all(d.mode is Mode.TUNNEL and d.policy is not None for d in tun.devices)
    assert load_scenario(default_scenario_path()).devices == sc.devices


def test_profile_library_round_trip(tmp_path, default_scenario):
    p = tmp_path / "lib.yaml"
    p.write_text(dump_profile_library(default_scenario.profiles))
    assert load_profile_library(p) == default_scenario.profiles


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario("/nonexistent/scenario.yaml")
