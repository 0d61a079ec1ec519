"""Benchmark toolkit for controllable multi-property molecule optimization."""

__version__ = "0.1.0"
