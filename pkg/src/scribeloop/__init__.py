"""Character-detection annotation loop and scribe attribution for
digitized manuscript pages."""

__version__ = "0.1.0"
