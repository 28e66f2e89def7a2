"""
Tests for the congestion status identification package.
"""
