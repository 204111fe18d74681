"""Compact feature transfer (PCA/SFA) from a trained Q-network, desk scale."""

__version__ = "0.1.0"
