"""Discrete-event simulation and hardware-requirement search for quantum repeater chains."""

__version__ = "0.1.0"
