"""Gradual verification with optimistic heaps and run-time check generation."""

__version__ = "0.1.0"
