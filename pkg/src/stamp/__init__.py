"""Workbench for memory-intensive virtual mobile-app tasks."""

__version__ = "0.1.0"
