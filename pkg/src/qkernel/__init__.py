"""Quantum-kernel support vector classification and regression on a simulator."""

__version__ = "0.1.0"
