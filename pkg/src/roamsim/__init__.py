"""Dual-RAT (Wi-Fi / CBRS private LTE) roaming simulator."""

__version__ = "0.1.0"
