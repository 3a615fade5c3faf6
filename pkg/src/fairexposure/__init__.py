"""Exposure-aware recommendation experiments: rating transforms, baseline
recommenders, max-flow re-ranking, exposure metrics and feedback-loop simulation."""

__version__ = "0.1.0"
