"""Bayesian nonparametric PCA with an Indian buffet process prior on activations."""
