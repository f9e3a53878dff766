"""Ruin probabilities for insurers with stochastic investment returns and fading or growing business."""

__version__ = "0.1.0"
