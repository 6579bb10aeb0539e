"""Benchmarking learned estimators against the exact MMSE bound of a Gaussian-mixture linear model."""
