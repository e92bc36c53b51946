"""Multi-bias reduction for training sets: per-bias correction weights, harmonic-mean combination, and a weighted random-forest evaluation harness."""

__version__ = "0.1.0"
