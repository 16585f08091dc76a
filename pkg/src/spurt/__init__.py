"""Detection of spurt-like attack tactics in daily count profiles."""

__version__ = "0.1.0"
