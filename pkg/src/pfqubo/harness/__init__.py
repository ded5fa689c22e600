"""Experiment harness: configuration, synthetic data, pipeline runs and reports."""
