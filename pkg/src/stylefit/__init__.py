"""Style-guided outfit compatibility learning and generation."""

__version__ = "0.1.0"
