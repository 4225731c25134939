"""Lower bounds and simulations for active learning of graphical models."""

__version__ = "0.1.0"
