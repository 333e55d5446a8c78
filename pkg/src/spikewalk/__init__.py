"""Spiking random-walk circuits and Feynman-Kac Monte Carlo for jump-diffusion PIDEs."""

__version__ = "0.1.0"
