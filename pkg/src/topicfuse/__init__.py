"""Multi-robot semantic map fusion via multiway topic matching."""

__version__ = "0.1.0"
