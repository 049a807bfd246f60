"""Protocol verification frontend for the computationally complete symbolic attacker model."""

__version__ = "0.1.0"
