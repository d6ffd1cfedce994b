"""Top-N recommendation from weighted user-item and item-item embedding similarities."""

__version__ = "0.1.0"
