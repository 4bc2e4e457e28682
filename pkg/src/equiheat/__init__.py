"""Equivariant heat traces on compact homogeneous spaces."""
__version__ = "0.1.0"
