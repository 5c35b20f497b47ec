"""Synthetic image/mask datasets from sliced G-code, plus evaluation and print-log tooling."""

__version__ = "0.1.0"
