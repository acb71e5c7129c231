"""Power allocation and outage simulation for discrete-input block-fading channels."""

__version__ = "0.1.0"
