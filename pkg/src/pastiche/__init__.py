"""Multi-style pastiche engine: one shared network, per-style normalization."""

__version__ = "0.1.0"
