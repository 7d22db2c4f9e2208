"""Remote verification service and reference toolchain for Mizar-style articles."""

__version__ = "0.1.0"
