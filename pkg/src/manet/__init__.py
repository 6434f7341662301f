"""Multi-focus attention Q-networks for single- and multi-agent gridworlds."""

__version__ = "0.1.0"
