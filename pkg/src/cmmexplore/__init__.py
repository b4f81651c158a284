"""Interactive exploration of tabletop scenes with an online two-class mixture classifier."""

__version__ = "0.1.0"
