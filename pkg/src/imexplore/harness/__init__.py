"""Experiment runner, benchmarking, plotting and sweeps."""
