"""Entropy-regularized point-based value iteration for discrete POMDPs."""

__version__ = "0.1.0"
