"""Residual-based error certificates for approximate solutions of linear ODEs."""

__version__ = "0.1.0"
