import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roamsim.enums import RAT
from roamsim.policy.profile import (
    ProfileEntry,
    ProfileError,
    RadioPreferenceProfile,
    emit_profile_payload,
    emit_profile_text,
    parse_profile,
)

SAMPLE = """\
# campus profile
[WWAN]
CelonaPrivate,-110
[WLAN]
scan_interval_s=10
Celona,-75
Guest,-70
"""


def test_parse_sample():
    p = parse_profile(SAMPLE)
    assert p.rat_order == (RAT.CBRS, RAT.WIFI)
    assert p.wwan_entries == (ProfileEntry("CelonaPrivate", -110.0),)
    assert [e.name for e in p.wlan_entries] == ["Celona", "Guest"]
    assert p.priority(RAT.WIFI, "Guest") == 2
    assert p.wlan_scan_interval == 10


def test_golden_payload():
    p = parse_profile("[WWAN]\nCelonaPrivate,-110\n")
    assert emit_profile_payload(p) == "RPP1:[WWAN];CelonaPrivate,-110"
    assert parse_profile("RPP1:[WWAN];CelonaPrivate,-110") == p


@pytest.mark.parametrize("section, value, ok", [
    ("WWAN", -156, True), ("WWAN", -31, True), ("WWAN", -157, False), ("WWAN", -30, False),
    ("WLAN", -90, True), ("WLAN", -30, True), ("WLAN", -91, False), ("WLAN", -29.5, False),
])
def test_threshold_boundaries(section, value, ok):
    text = f"[{section}]\nnet,{value}\n"
    if ok:
        assert parse_profile(text).entries(RAT.CBRS if section == "WWAN" else RAT.WIFI)[0].threshold == value
    else:
        with pytest.raises(ProfileError) as e:
            parse_profile(text)
        assert e.value.line == 2
        assert ("[-156,-31]" if section == "WWAN" else "[-90,-30]") in str(e.value)


@pytest.mark.parametrize("text, line", [
    ("[WWAN]\nok,-100\n[FOO]\n", 3),
    ("net,-100\n", 1),
    ("[WWAN]\nnet -100\n", 2),
    ("[WWAN]\nnet,abc\n", 2),
    ("[WWAN]\na,-100\na,-90\n", 3),
    ("[WWAN]\nscan_interval_s=5\n", 2),
    ("[WLAN]\nscan_interval_s=0\n", 2),
    ("[WLAN]\n\n# c\n[WLAN]\n", 4),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ProfileError) as e:
        parse_profile(text)
    assert e.value.line == line
    assert str(e.value).startswith(f"line {line}:")


def test_profiles_are_immutable():
    p = parse_profile(SAMPLE)
    with pytest.raises(AttributeError):
        p.wlan_entries = ()


names = st.text(st.characters(min_codepoint=48, max_codepoint=122, blacklist_characters="[];,#"),
                min_size=1, max_size=12)


@st.composite
def profiles(draw):
    order = draw(st.permutations([RAT.CBRS, RAT.WIFI]))
    order = tuple(order[:draw(st.integers(1, 2))])
    wwan = wlan = ()
    if RAT.CBRS in order:
        ns = draw(st.lists(names, unique=True, max_size=3))
        wwan = tuple(ProfileEntry(n, draw(st.integers(-156, -31))) for n in ns)
    scan = 10.0
    if RAT.WIFI in order:
        ns = draw(st.lists(names, unique=True, max_size=3))
        wlan = tuple(ProfileEntry(n, float(draw(st.integers(-180, -60))) / 2) for n in ns)
        scan = draw(st.sampled_from([1.0, 2.5, 10.0, 30.0]))
    return RadioPreferenceProfile(wwan, wlan, scan, order)


@settings(max_examples=150, deadline=None)
@given(profiles())
def test_text_and_payload_round_trip(p):
    assert parse_profile(emit_profile_text(p)) == p
    assert parse_profile(emit_profile_payload(p)) == p
