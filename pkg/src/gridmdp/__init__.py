"""Storm-resilient distribution-network reconfiguration as a Markov decision process."""

__version__ = "0.1.0"
