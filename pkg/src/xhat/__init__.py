"""Contraction spaces of finite graphs."""
__version__ = "0.1.0"
