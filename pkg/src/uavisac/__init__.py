"""uavisac: slot-stepped multi-UAV ISAC network simulator and optimizer."""

__version__ = "0.1.0"
