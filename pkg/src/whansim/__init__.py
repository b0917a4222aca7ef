"""Wireless home automation network, reconstructed in software.

The package simulates battery-powered sensor/actuator end devices behind a
calibrated 2.4 GHz radio channel, bridges them through an access point into a
home server (device registry, rule engine, modes, persistence), and exposes
the server over a TCP line protocol and HTTP for clients.
"""

__version__ = "0.1.0"
