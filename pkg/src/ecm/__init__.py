"""Outlier detection for layer contours by elastic functional boxplots."""

__version__ = "0.1.0"
