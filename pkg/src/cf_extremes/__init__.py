"""Extreme value statistics of continued fraction digits under the Gauss measure."""

__version__ = "0.1.0"
