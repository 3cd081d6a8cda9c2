"""Attitude filter comparison benchmark: truth simulator, five filters, Monte-Carlo harness."""

__version__ = "0.1.0"
