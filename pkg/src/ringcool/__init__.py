"""Simulation of one-way-diode cooling and trapping of atoms on a ring."""

__version__ = "0.1.0"
