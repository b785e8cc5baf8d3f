"""Zero-shot image classification from encyclopedia articles, on precomputed features."""

__version__ = "0.1.0"
