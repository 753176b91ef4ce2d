"""Misinformation pipeline test suite."""
