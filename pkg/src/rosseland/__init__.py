"""Stochastic Rosseland limit: kinetic SPDE and diffusion-limit solvers,
Hilbert-expansion correctors and verification probes."""

__version__ = "0.1.0"
