"""Latent-space grasp learning: three autoencoders plus a PoWER agent."""

__version__ = "0.1.0"
