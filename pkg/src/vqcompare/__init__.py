"""Full-reference video quality metrics and codec-comparison analysis."""

__version__ = "0.1.0"
