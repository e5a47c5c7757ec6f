"""Numerical convex-integration engine for the Von Karman system."""

__version__ = "0.1.0"
