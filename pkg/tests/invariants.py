"""Checks shared by the simulation and acceptance tests."""

import bisect

from roamsim.enums import Direction


def dl_reflection_violations(dev):
    """DL data frames not sent on the RAT of the last UL data frame the server had received."""
    ul = sorted((f.rx, f.rat) for f in dev.frames
                if f.direction is Direction.UL and not f.probe and f.rx is not None)
    arrivals = [t for t, _ in ul]
    bad = []
    for f in dev.frames:
        if f.direction is not Direction.DL or f.probe:
            continue
        k = bisect.bisect_right(arrivals, f.t + 1e-9) - 1
        if k < 0 or ul[k][1] is not f.rat:
            bad.append(f)
    return bad


def inner_addresses(dev):
    return {s.inner for s in dev.switches}


def sessions(dev):
    return {f.session for f in dev.frames}
