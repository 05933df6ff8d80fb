"""Evaluation harness for ML-based Earth system models.

Sanity checks, performance metrics, emergent constraints, idealized test
cases and a causality test, applied to gridded output (ETC files) or to live
models through the adapter protocol.
"""
__version__ = "0.1.0"
