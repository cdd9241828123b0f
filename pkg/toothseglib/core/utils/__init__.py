"""Logging, timing and parallel helpers."""
