"""Real-field index codes that exploit low-dimensional source structure."""

__version__ = "0.1.0"
