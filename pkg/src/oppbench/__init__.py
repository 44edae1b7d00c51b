"""Benchmark harness for store-carry-forward routing over opportunistic contacts."""

__version__ = "0.1.0"
