"""Shared enumerations used across the simulator."""

from __future__ import annotations

from enum import Enum


class RAT(str, Enum):
    NONE = "NONE"
    WIFI = "WIFI"
    CBRS = "CBRS"
    MACRO = "MACRO"


class Direction(str, Enum):
    UL = "UL"
    DL = "DL"


class Criticality(str, Enum):
    CRITICAL = "CRITICAL"
    NON_CRITICAL = "NON_CRITICAL"


class Mode(str, Enum):
    TRADITIONAL = "TRADITIONAL"
    TUNNEL = "TUNNEL"


#: RATs the device can carry user data on.
DATA_RATS = (RAT.WIFI, RAT.CBRS)


def other_rat(rat: RAT) -> RAT:
    if rat is RAT.WIFI:
        return RAT.CBRS
    if rat is RAT.CBRS:
        return RAT.WIFI
    raise ValueError(f"no counterpart for {rat}")
