"""Audio fall detection: corpus tools, features, transformer classifier, sentinel."""

__version__ = "0.1.0"
