"""anderloc: finite-volume localization laboratory for multi-particle random
Schroedinger operators with alloy-type disorder and pair interactions."""

__version__ = "0.1.0"
