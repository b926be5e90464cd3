"""Minislot-accurate simulator and verification toolkit for hybrid MAC
scheduling of collocated queues on one slotted channel."""

__version__ = "0.1.0"
