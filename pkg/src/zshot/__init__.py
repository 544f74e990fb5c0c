"""Zero-shot multi-domain semantic parsing with influence-based data tools."""

__version__ = "0.1.0"
