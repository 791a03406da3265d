"""Carnot groups, quasi-norms, jet-space embeddings and Markov convexity."""

__version__ = "0.1.0"
