"""Training harness for the glyph detector consumed by the annotation pipeline."""

__version__ = "0.1.0"
