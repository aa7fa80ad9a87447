"""Co-optimized versus separately cleared energy-and-reserve markets under wind uncertainty."""

__version__ = "0.1.0"
