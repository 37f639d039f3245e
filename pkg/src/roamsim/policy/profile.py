"""Radio-preference profile files.

Grammar (line oriented)::

    # comment
    [WWAN]
    CelonaPrivate,-110
    [WLAN]
    scan_interval_s=10
    Celona,-75

Section order is RAT priority; entry order within a section is network
priority, first line highest. The same content as a single-line payload
(what a provisioning barcode would carry) is ``RPP1:`` followed by the
canonical lines joined with ``;``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..enums import RAT

RSRP_RANGE = (-156.0, -31.0)
RSSI_RANGE = (-90.0, -30.0)
DEFAULT_SCAN_INTERVAL = 10.0
PAYLOAD_PREFIX = "RPP1:"

_SECTIONS = {"WWAN": RAT.CBRS, "WLAN": RAT.WIFI}
_SECTION_NAMES = {v: k for k, v in _SECTIONS.items()}
_FORBIDDEN = set(",;\n\r[]")


class ProfileError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ProfileEntry:
    name: str
    threshold: float


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _check_name(name: str, line=None):
    if not name or name != name.strip() or _FORBIDDEN & set(name) or name.startswith("#"):
        raise ProfileError(f"invalid network name {name!r}", line)


def _check_threshold(rat: RAT, value: float, line=None):
    lo, hi = RSRP_RANGE if rat is RAT.CBRS else RSSI_RANGE
    metric = "RSRP" if rat is RAT.CBRS else "RSSI"
    if not (math.isfinite(value) and lo <= value <= hi):
        raise ProfileError(f"{metric} out of range [{_fmt(lo)},{_fmt(hi)}]: {_fmt(value)}", line)


@dataclass(frozen=True)
class RadioPreferenceProfile:
    """Immutable once built; changing a list means building a new profile."""

    wwan_entries: tuple[ProfileEntry, ...] = ()
    wlan_entries: tuple[ProfileEntry, ...] = ()
    wlan_scan_interval: float = DEFAULT_SCAN_INTERVAL
    rat_order: tuple[RAT, ...] = (RAT.CBRS, RAT.WIFI)

    def __post_init__(self):
        object.__setattr__(self, "wwan_entries", tuple(self.wwan_entries))
        object.__setattr__(self, "wlan_entries", tuple(self.wlan_entries))
        object.__setattr__(self, "rat_order", tuple(RAT(r) for r in self.rat_order))
        if len(set(self.rat_order)) != len(self.rat_order) or not set(self.rat_order) <= set(_SECTION_NAMES):
            raise ProfileError("rat_order must list WIFI/CBRS at most once each")
        if not (self.wlan_scan_interval > 0 and math.isfinite(self.wlan_scan_interval)):
            raise ProfileError("scan_interval_s must be > 0")
        if RAT.WIFI not in self.rat_order and self.wlan_scan_interval != DEFAULT_SCAN_INTERVAL:
            raise ProfileError("scan interval set without a [WLAN] section")
        for rat, entries in ((RAT.CBRS, self.wwan_entries), (RAT.WIFI, self.wlan_entries)):
            if entries and rat not in self.rat_order:
                raise ProfileError(f"{_SECTION_NAMES[rat]} entries without a section")
            names = [e.name for e in entries]
            if len(set(names)) != len(names):
                raise ProfileError(f"duplicate name in {_SECTION_NAMES[rat]}")
            for e in entries:
                _check_name(e.name)
                _check_threshold(rat, e.threshold)

    def entries(self, rat: RAT) -> tuple[ProfileEntry, ...]:
        if rat is RAT.CBRS:
            return self.wwan_entries
        if rat is RAT.WIFI:
            return self.wlan_entries
        return ()

    def priority(self, rat: RAT, name: str) -> int:
        """1-based priority of ``name`` within its list."""
        for i, e in enumerate(self.entries(rat), 1):
            if e.name == name:
                return i
        raise KeyError(name)


def parse_profile(text: str) -> RadioPreferenceProfile:
    if text.startswith(PAYLOAD_PREFIX):
        lines = text[len(PAYLOAD_PREFIX):].split(";")
    else:
        lines = text.splitlines()
    order: list[RAT] = []
    entries: dict[RAT, list[ProfileEntry]] = {RAT.CBRS: [], RAT.WIFI: []}
    scan_interval = DEFAULT_SCAN_INTERVAL
    section = None
    for n, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            name = line.strip("[]").strip().upper()
            if not line.endswith("]") or name not in _SECTIONS:
                raise ProfileError(f"unknown section {line}", n)
            section = _SECTIONS[name]
            if section in order:
                raise ProfileError(f"repeated section {line}", n)
            order.append(section)
            continue
        if section is None:
            raise ProfileError("entry outside of a [WWAN]/[WLAN] section", n)
        if "=" in line and "," not in line:
            key, _, value = (p.strip() for p in line.partition("="))
            if section is not RAT.WIFI or key != "scan_interval_s":
                raise ProfileError(f"unknown key {key!r}", n)
            try:
                scan_interval = float(value)
            except ValueError:
                raise ProfileError(f"scan_interval_s is not a number: {value!r}", n) from None
            if not (scan_interval > 0 and math.isfinite(scan_interval)):
                raise ProfileError("scan_interval_s must be > 0", n)
            continue
        name, sep, thr = line.rpartition(",")
        if not sep:
            raise ProfileError(f"expected 'name,threshold_dbm', got {line!r}", n)
        name = name.strip()
        _check_name(name, n)
        try:
            value = float(thr)
        except ValueError:
            raise ProfileError(f"threshold is not a number: {thr.strip()!r}", n) from None
        _check_threshold(section, value, n)
        if any(e.name == name for e in entries[section]):
            raise ProfileError(f"duplicate name {name!r}", n)
        entries[section].append(ProfileEntry(name, value))
    return RadioPreferenceProfile(
        wwan_entries=tuple(entries[RAT.CBRS]),
        wlan_entries=tuple(entries[RAT.WIFI]),
        wlan_scan_interval=scan_interval,
        rat_order=tuple(order),
    )


def canonical_lines(profile: RadioPreferenceProfile) -> list[str]:
    lines = []
    for rat in profile.rat_order:
        lines.append(f"[{_SECTION_NAMES[rat]}]")
        if rat is RAT.WIFI:
            lines.append(f"scan_interval_s={_fmt(profile.wlan_scan_interval)}")
        lines += [f"{e.name},{_fmt(e.threshold)}" for e in profile.entries(rat)]
    return lines


def emit_profile_text(profile: RadioPreferenceProfile) -> str:
    return "\n".join(canonical_lines(profile)) + "\n"


def emit_profile_payload(profile: RadioPreferenceProfile) -> str:
    return PAYLOAD_PREFIX + ";".join(canonical_lines(profile))
