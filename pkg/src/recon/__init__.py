"""Rate-compatible single- and multi-matrix LDPC reconciliation for QKD."""

__version__ = "0.1.0"
